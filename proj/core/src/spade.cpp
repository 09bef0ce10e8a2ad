#include "repaint/spade.hpp"

#include <cmath>

namespace repaint {

SpadeLayer::SpadeLayer(int64_t num_channels_, int mask_channels_, int64_t hidden, Rng& rng,
                       DType dt, double eps_, double momentum_)
    : num_channels(num_channels_), mask_channels(mask_channels_), eps(eps_), momentum(momentum_) {
  shared = Conv2dLayer(mask_channels, hidden, 3, 1, 1, rng, dt);
  gamma = Conv2dLayer(hidden, num_channels, 3, 1, 1, rng, dt);
  fill_normal(gamma.w, rng, 0.0, 0.02);
  gamma.b.fill_(1.0);
  beta = Conv2dLayer(hidden, num_channels, 3, 1, 1, rng, dt);
  beta.w.fill_(0.0);
  beta.b.fill_(0.0);
  running_mean = Tensor::zeros({num_channels}, DType::F64);
  running_var = Tensor::ones({num_channels}, DType::F64);
}

Tensor SpadeLayer::forward(const Tensor& f_in, const Tensor& mask, Mode mode) {
  if (f_in.rank() != 4 || mask.rank() != 4)
    throw DimensionError("spade: expected rank-4 NCHW feature and mask tensors");
  if (f_in.dim(1) != num_channels)
    throw DimensionError(strcat_msg("spade: feature channels ", f_in.dim(1), " != configured ",
                                    num_channels, " (axis 1)"));
  if (mask.dim(0) != f_in.dim(0) || mask.dim(2) != f_in.dim(2) || mask.dim(3) != f_in.dim(3))
    throw DimensionError(strcat_msg("spade: mask shape ", shape_str(mask.shape()),
                                    " does not match features ", shape_str(f_in.shape()),
                                    "; resize the mask first"));
  if (mask.dim(1) != mask_channels)
    throw DimensionError(strcat_msg("spade: mask channels ", mask.dim(1), " != configured ",
                                    mask_channels));

  Tensor normalized;
  if (mode == Mode::Train) {
    BatchStats stats;
    normalized = batch_norm_train(f_in, eps, &stats);
    auto rm = running_mean.data<double>();
    auto rv = running_var.data<double>();
    for (int64_t c = 0; c < num_channels; ++c) {
      rm[static_cast<size_t>(c)] = (1.0 - momentum) * rm[static_cast<size_t>(c)] +
                                   momentum * stats.mean[static_cast<size_t>(c)];
      rv[static_cast<size_t>(c)] = (1.0 - momentum) * rv[static_cast<size_t>(c)] +
                                   momentum * stats.var[static_cast<size_t>(c)];
    }
  } else {
    auto rm = running_mean.cdata<double>();
    auto rv = running_var.cdata<double>();
    std::vector<double> scale(static_cast<size_t>(num_channels)),
        shift(static_cast<size_t>(num_channels));
    for (int64_t c = 0; c < num_channels; ++c) {
      const double is = 1.0 / std::sqrt(rv[static_cast<size_t>(c)] + eps);
      scale[static_cast<size_t>(c)] = is;
      shift[static_cast<size_t>(c)] = -rm[static_cast<size_t>(c)] * is;
    }
    normalized = channel_affine(f_in, scale, shift);
  }

  Tensor hidden = relu(shared.forward(mask));
  Tensor g = gamma.forward(hidden);
  Tensor b = beta.forward(hidden);
  return add(mul(normalized, g), b);
}

void SpadeLayer::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  shared.visit_params(join_name(prefix, "shared"), fn);
  gamma.visit_params(join_name(prefix, "gamma"), fn);
  beta.visit_params(join_name(prefix, "beta"), fn);
}

void SpadeLayer::visit_buffers(const std::string& prefix, const TensorVisitor& fn) {
  fn(join_name(prefix, "running_mean"), running_mean);
  fn(join_name(prefix, "running_var"), running_var);
}

SpdResBlock::SpdResBlock(int64_t cin_, int64_t cout_, int mask_channels, int64_t hidden,
                         Rng& rng, DType dt)
    : cin(cin_), cout(cout_), cmid(std::min(cin_, cout_)), learned_skip(cin_ != cout_) {
  spade0 = SpadeLayer(cin, mask_channels, hidden, rng, dt);
  conv0 = Conv2dLayer(cin, cmid, 3, 1, 1, rng, dt);
  spade1 = SpadeLayer(cmid, mask_channels, hidden, rng, dt);
  conv1 = Conv2dLayer(cmid, cout, 3, 1, 1, rng, dt);
  if (learned_skip) {
    spade_skip = SpadeLayer(cin, mask_channels, hidden, rng, dt);
    conv_skip = Conv2dLayer(cin, cout, 1, 1, 0, rng, dt);
  }
}

Tensor SpdResBlock::forward(const Tensor& f_in, const Tensor& mask, Mode mode) {
  Tensor h = conv0.forward(leaky_relu(spade0.forward(f_in, mask, mode), leaky_slope));
  h = conv1.forward(leaky_relu(spade1.forward(h, mask, mode), leaky_slope));
  Tensor skip = learned_skip ? conv_skip.forward(spade_skip.forward(f_in, mask, mode)) : f_in;
  return add(h, skip);
}

void SpdResBlock::visit_params(const std::string& prefix, const TensorVisitor& fn) {
  spade0.visit_params(join_name(prefix, "spade0"), fn);
  conv0.visit_params(join_name(prefix, "conv0"), fn);
  spade1.visit_params(join_name(prefix, "spade1"), fn);
  conv1.visit_params(join_name(prefix, "conv1"), fn);
  if (learned_skip) {
    spade_skip.visit_params(join_name(prefix, "spade_skip"), fn);
    conv_skip.visit_params(join_name(prefix, "conv_skip"), fn);
  }
}

void SpdResBlock::visit_buffers(const std::string& prefix, const TensorVisitor& fn) {
  spade0.visit_buffers(join_name(prefix, "spade0"), fn);
  spade1.visit_buffers(join_name(prefix, "spade1"), fn);
  if (learned_skip) spade_skip.visit_buffers(join_name(prefix, "spade_skip"), fn);
}

}  // namespace repaint
