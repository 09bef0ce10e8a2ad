#pragma once

#include <span>
#include <vector>

#include "repaint/rng.hpp"
#include "repaint/tensor.hpp"

namespace repaint {

// All ops are pure: they allocate a fresh output and, when grad mode is on
// and any input is tracked, record a backward closure on the output node.

// Elementwise (same shape, same dtype).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// scale * x + shift, scalar coefficients.
Tensor affine(const Tensor& x, double scale, double shift);
inline Tensor neg(const Tensor& x) { return affine(x, -1.0, 0.0); }

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);  // DomainError unless all elements > 0
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor softplus(const Tensor& x);  // log(1 + e^x), overflow-safe
Tensor abs(const Tensor& x);

// Full reductions to a rank-0 scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Shape ops.
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_channels(const Tensor& a, const Tensor& b);  // NCHW, axis 1
Tensor upsample_nearest2x(const Tensor& x);                // NCHW, H,W -> 2H,2W

// y = x @ w^T + b with x:[B,I], w:[O,I], b:[O].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// x:[B,Cin,H,W], w:[Cout,Cin,kh,kw], b:[Cout].
// H' = (H + 2*pad - kh)/stride + 1 (floor), same for W'.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Shape conv2d_output_shape(const Shape& x, const Shape& w, int stride, int pad);

// Per-channel batch statistics over (B,H,W); population stats from this batch.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> var;  // unbiased, for running-average updates
};

// (x - mu_c) / sqrt(var_c + eps) with batch statistics; NumericError when
// B*H*W == 1 (variance undefined for normalization purposes).
Tensor batch_norm_train(const Tensor& x, double eps, BatchStats* stats = nullptr);

// y = x * scale_c + shift_c with constant per-channel coefficients
// (eval-mode normalization folded into an affine map; no grad to coefficients).
Tensor channel_affine(const Tensor& x, std::span<const double> scale,
                      std::span<const double> shift);

// y = x * w_c + b_c with learned per-channel tensors w:[C], b:[C].
Tensor channel_scale_bias(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor global_avg_pool(const Tensor& x);  // [B,C,H,W] -> [B,C]

// Mean softmax cross-entropy over the batch, log-sum-exp stabilized.
// InputError for labels outside [0, C).
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int64_t> labels);

// Random fills (leaf tensors only).
void fill_uniform(Tensor& t, Rng& rng, double lo, double hi);
void fill_normal(Tensor& t, Rng& rng, double mean, double stddev);
Tensor randn(Shape shape, Rng& rng, DType dt = DType::F32);

// Kaiming-uniform fan-in init with leaky-ReLU gain.
void kaiming_uniform(Tensor& w, Rng& rng, int64_t fan_in, double leaky_slope);

}  // namespace repaint
