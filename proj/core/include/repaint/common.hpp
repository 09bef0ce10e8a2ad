#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace repaint {

// Error taxonomy. The CLI maps these onto process exit codes, so new
// failure modes should reuse one of the existing categories.
class Error : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/op shape violations (mismatched axes, bad conv geometry, ...).
class DimensionError : public Error {
  using Error::Error;
};

// Bad user configuration (unknown key, invalid value, missing field).
class ConfigError : public Error {
  using Error::Error;
};

// Bad input data (missing file, undecodable image, unlabeled sample).
class InputError : public Error {
  using Error::Error;
};

// NaN/Inf or other numerical breakdown during computation.
class NumericError : public Error {
  using Error::Error;
};

// Input outside an op's mathematical domain (e.g. log of non-positive).
class DomainError : public Error {
  using Error::Error;
};

// Malformed serialized artifacts (checkpoints, label PNGs).
class FormatError : public Error {
  using Error::Error;
};

// API misuse: precondition the caller controls (backward on a consumed
// graph, mutating a tracked tensor, non-scalar loss).
class ContractError : public Error {
  using Error::Error;
};

namespace detail {
inline void msg_cat(std::ostringstream&) {}
template <typename T, typename... Rest>
void msg_cat(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  msg_cat(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string strcat_msg(const Args&... args) {
  std::ostringstream os;
  detail::msg_cat(os, args...);
  return os.str();
}

}  // namespace repaint
