#pragma once

#include "repaint/layers.hpp"
#include "repaint/segmentation.hpp"

namespace repaint {

// Spatially-adaptive denormalization: per-channel batch normalization whose
// scale and bias are spatial maps predicted from the segmentation mask by a
// small conv head, so structure in the mask survives into the activations.
struct SpadeLayer {
  int64_t num_channels = 0;
  int mask_channels = 0;
  Conv2dLayer shared;  // mask -> hidden, 3x3
  Conv2dLayer gamma;   // hidden -> Nc, 3x3
  Conv2dLayer beta;    // hidden -> Nc, 3x3
  Tensor running_mean, running_var;  // f64 buffers
  double eps = 1e-5;
  double momentum = 0.1;

  SpadeLayer() = default;
  // gamma conv starts at an all-ones map (bias 1, tiny weights) and beta at
  // zero, so the initial output is close to the plain normalized input.
  SpadeLayer(int64_t num_channels, int mask_channels, int64_t hidden, Rng& rng, DType dt,
             double eps = 1e-5, double momentum = 0.1);

  // f_in: [B,Nc,H,W]; mask: [B,K,H,W], already resized to H x W.
  Tensor forward(const Tensor& f_in, const Tensor& mask, Mode mode);

  void visit_params(const std::string& prefix, const TensorVisitor& fn);
  void visit_buffers(const std::string& prefix, const TensorVisitor& fn);
};

// Residual block of two SPADE+activation+conv stages with a learned
// SPADE+1x1-conv skip when the channel count changes.
struct SpdResBlock {
  int64_t cin = 0, cout = 0, cmid = 0;
  SpadeLayer spade0, spade1;
  Conv2dLayer conv0, conv1;
  bool learned_skip = false;
  SpadeLayer spade_skip;
  Conv2dLayer conv_skip;
  double leaky_slope = 0.2;

  SpdResBlock() = default;
  SpdResBlock(int64_t cin, int64_t cout, int mask_channels, int64_t hidden, Rng& rng, DType dt);

  Tensor forward(const Tensor& f_in, const Tensor& mask, Mode mode);

  void visit_params(const std::string& prefix, const TensorVisitor& fn);
  void visit_buffers(const std::string& prefix, const TensorVisitor& fn);
};

}  // namespace repaint
