#pragma once

#include <string>
#include <vector>

#include "repaint/tensor.hpp"

namespace repaint {

// Binary container for named tensors (parameters, buffers, optimizer state,
// counters). Layout, little-endian throughout:
//   magic "RPNT" | u32 version | u32 entry count
//   per entry: u16 name length | name bytes | u8 dtype (0=f32, 1=f64) |
//              u8 rank | u32 dims[rank] | raw payload
// Loads reproduce every payload bitwise; unknown versions and truncated or
// corrupted files are rejected with the failing byte offset.
class Checkpoint {
 public:
  static constexpr uint32_t kVersion = 1;

  void add(const std::string& name, const Tensor& t);
  void add_scalar(const std::string& name, double v);

  const Tensor* find(const std::string& name) const;
  double scalar(const std::string& name) const;  // FormatError when missing
  bool contains(const std::string& name) const { return find(name) != nullptr; }

  std::span<const NamedTensor> entries() const { return entries_; }
  size_t size() const { return entries_.size(); }

  // Atomic write: temp file in the same directory, then rename.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::vector<NamedTensor> entries_;
};

}  // namespace repaint
