#include "repaint/layers.hpp"

#include <cmath>

namespace repaint {

Conv2dLayer::Conv2dLayer(int64_t cin, int64_t cout, int k, int stride_, int pad_, Rng& rng,
                         DType dt, double leaky_slope)
    : stride(stride_), pad(pad_) {
  w = Tensor::zeros({cout, cin, k, k}, dt, true);
  kaiming_uniform(w, rng, cin * k * k, leaky_slope);
  b = Tensor::zeros({cout}, dt, true);
}

void Conv2dLayer::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "w"), w);
  fn(join_name(prefix, "b"), b);
}

LinearLayer::LinearLayer(int64_t in, int64_t out, Rng& rng, DType dt, double leaky_slope) {
  w = Tensor::zeros({out, in}, dt, true);
  kaiming_uniform(w, rng, in, leaky_slope);
  b = Tensor::zeros({out}, dt, true);
}

void LinearLayer::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "w"), w);
  fn(join_name(prefix, "b"), b);
}

BatchNorm2d::BatchNorm2d(int64_t channels, DType dt, double eps_, double momentum_)
    : eps(eps_), momentum(momentum_) {
  gamma = Tensor::ones({channels}, dt, true);
  beta = Tensor::zeros({channels}, dt, true);
  running_mean = Tensor::zeros({channels}, DType::F64);
  running_var = Tensor::ones({channels}, DType::F64);
}

Tensor BatchNorm2d::normalize(const Tensor& x, Mode mode) {
  const int64_t C = x.dim(1);
  if (mode == Mode::Train) {
    BatchStats stats;
    Tensor y = batch_norm_train(x, eps, &stats);
    auto rm = running_mean.data<double>();
    auto rv = running_var.data<double>();
    for (int64_t c = 0; c < C; ++c) {
      rm[static_cast<size_t>(c)] =
          (1.0 - momentum) * rm[static_cast<size_t>(c)] + momentum * stats.mean[static_cast<size_t>(c)];
      rv[static_cast<size_t>(c)] =
          (1.0 - momentum) * rv[static_cast<size_t>(c)] + momentum * stats.var[static_cast<size_t>(c)];
    }
    return y;
  }
  auto rm = running_mean.cdata<double>();
  auto rv = running_var.cdata<double>();
  std::vector<double> scale(static_cast<size_t>(C)), shift(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    const double is = 1.0 / std::sqrt(rv[static_cast<size_t>(c)] + eps);
    scale[static_cast<size_t>(c)] = is;
    shift[static_cast<size_t>(c)] = -rm[static_cast<size_t>(c)] * is;
  }
  return channel_affine(x, scale, shift);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode) {
  return channel_scale_bias(normalize(x, mode), gamma, beta);
}

void BatchNorm2d::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "gamma"), gamma);
  fn(join_name(prefix, "beta"), beta);
}

void BatchNorm2d::visit_buffers(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "running_mean"), running_mean);
  fn(join_name(prefix, "running_var"), running_var);
}

}  // namespace repaint
