#pragma once

#include <functional>
#include <vector>

#include "repaint/tensor.hpp"

namespace repaint {

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  int64_t worst_input = -1;    // which tensor in `inputs`
  int64_t worst_element = -1;  // flat element index within that tensor
};

// Scalar-valued function of one or more tensors.
using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares reverse-mode gradients of f against central finite differences
// for every element of every input with requires_grad set. Relative error:
// |analytic - fd| / max(|analytic|, |fd|, 1e-12). NumericError when f or
// its gradient produces a NaN, with the offending element identified.
GradCheckReport grad_check(const TensorFn& f, std::vector<Tensor> inputs, double h, double tol);

// Single-input convenience.
GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol);

}  // namespace repaint
