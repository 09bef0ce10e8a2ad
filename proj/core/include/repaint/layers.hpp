#pragma once

#include <functional>
#include <string>

#include "repaint/ops.hpp"
#include "repaint/tensor.hpp"

namespace repaint {

enum class Mode { Train, Eval };

// Visitor over named parameter/buffer tensors; mutable refs so checkpoint
// restore can copy into them.
using TensorVisitor = std::function<void(const std::string& name, Tensor& t)>;

struct Conv2dLayer {
  Tensor w, b;
  int stride = 1;
  int pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(int64_t cin, int64_t cout, int k, int stride, int pad, Rng& rng, DType dt,
              double leaky_slope = 0.2);

  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
  void visit_params(const std::string& prefix, const TensorVisitor& fn);
};

struct LinearLayer {
  Tensor w, b;

  LinearLayer() = default;
  LinearLayer(int64_t in, int64_t out, Rng& rng, DType dt, double leaky_slope = 0.2);

  Tensor forward(const Tensor& x) const { return linear(x, w, b); }
  void visit_params(const std::string& prefix, const TensorVisitor& fn);
};

// Batch normalization with learned per-channel affine and running statistics
// for eval mode.
struct BatchNorm2d {
  Tensor gamma, beta;              // learned
  Tensor running_mean, running_var;  // f64 buffers
  double eps = 1e-5;
  double momentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(int64_t channels, DType dt, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x, Mode mode);
  // Normalization only (no affine); shared with SPADE which supplies its own
  // spatial modulation.
  Tensor normalize(const Tensor& x, Mode mode);
  void visit_params(const std::string& prefix, const TensorVisitor& fn);
  void visit_buffers(const std::string& prefix, const TensorVisitor& fn);
};

// Collection helpers shared by every network type.
template <typename Net>
std::vector<NamedTensor> collect_params(Net& net) {
  std::vector<NamedTensor> out;
  net.visit_params("", [&](const std::string& n, Tensor& t) { out.push_back({n, t}); });
  return out;
}

template <typename Net>
void set_trainable(Net& net, bool trainable) {
  net.visit_params("", [&](const std::string&, Tensor& t) { t.set_requires_grad(trainable); });
}

template <typename Net>
int64_t param_count(Net& net) {
  int64_t n = 0;
  net.visit_params("", [&](const std::string&, Tensor& t) { n += t.numel(); });
  return n;
}

inline std::string join_name(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace repaint
