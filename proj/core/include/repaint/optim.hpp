#pragma once

#include <span>
#include <vector>

#include "repaint/layers.hpp"
#include "repaint/tensor.hpp"

namespace repaint {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam update of a single tensor; t is the 1-based step count.
void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, int64_t t,
               const AdamConfig& cfg);

struct RmspropConfig {
  double alpha = 0.9;
  double eps = 1e-8;
};

// Plain RMSprop: sq_avg = alpha*sq_avg + (1-alpha)*g^2; p -= lr*g/(sqrt(sq)+eps).
void rmsprop_step(Tensor& param, const Tensor& grad, Tensor& sq_avg, double lr,
                  const RmspropConfig& cfg);

// Task learning-rate schedule: linear warmup across epoch 0, then a fixed
// decay factor every decay_epochs. epoch is fractional (epoch + step/steps).
double task_lr_schedule(double lr0, double epoch, double decay = 0.9, int decay_epochs = 3);

// Scales gradients in place so their global L2 norm is at most max_norm;
// returns the pre-clip norm.
double clip_grad_norm(std::span<NamedTensor> params, double max_norm);

// Parameter-group optimizers; state tensors are exposed for checkpointing.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedTensor> params, AdamConfig cfg);

  void step();
  void zero_grad();
  int64_t steps() const { return t_; }

  void visit_state(const std::string& prefix, const TensorVisitor& fn);
  void set_steps(int64_t t) { t_ = t; }

 private:
  std::vector<NamedTensor> params_;
  std::vector<Tensor> m_, v_;
  AdamConfig cfg_;
  int64_t t_ = 0;
};

class Rmsprop {
 public:
  Rmsprop() = default;
  Rmsprop(std::vector<NamedTensor> params, RmspropConfig cfg);

  void step(double lr);
  void zero_grad();

  void visit_state(const std::string& prefix, const TensorVisitor& fn);

 private:
  std::vector<NamedTensor> params_;
  std::vector<Tensor> sq_avg_;
  RmspropConfig cfg_;
};

}  // namespace repaint
