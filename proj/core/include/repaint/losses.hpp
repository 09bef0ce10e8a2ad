#pragma once

#include <span>

#include "repaint/ops.hpp"

namespace repaint {

enum class GanForm { NonSaturating, Minimax };

struct LossWeights {
  double lambda_gan = 1.0;
  double lambda_feat = 10.0;
  double lambda_kld = 0.05;
  double lambda_task = 1.0;

  void validate() const;
};

// Scalar loss record for logging; totals follow the weighted composition.
struct LossReport {
  double l_gan_d = 0, l_gan_g = 0, l_feat = 0, l_kld = 0, l_task = 0;
  double l_total_g = 0, l_total_d = 0;
};

// -E[log sigma(real)] - E[log(1 - sigma(fake))], softplus-stabilized,
// mean over batch and patch grid.
Tensor gan_loss_d(const Tensor& real_logits, const Tensor& fake_logits);

// NonSaturating: -E[log sigma(fake)]. Minimax: E[log(1 - sigma(fake))],
// the literal generator side of the minimax objective.
Tensor gan_loss_g(const Tensor& fake_logits, GanForm form = GanForm::NonSaturating);

// Mean over batch of 0.5 * sum_dz(mu^2 + sigma^2 - 1 - log sigma^2).
Tensor kld_loss(const Tensor& mu, const Tensor& logvar);

// Mean over layers of mean absolute difference; the real side is detached
// so only the generator path receives gradient.
Tensor feat_match_loss(std::span<const Tensor> real_feats, std::span<const Tensor> fake_feats);

// Mean softmax cross-entropy.
Tensor task_loss(const Tensor& logits, std::span<const int64_t> labels);

// Loss components of one step; undefined tensors are simply absent
// (e.g. no generator terms during a discriminator step).
struct LossParts {
  Tensor gan_d, gan_g, feat, kld, task;
};

struct ComposedLoss {
  Tensor total_g;  // weighted generator-encoder objective (may be undefined)
  Tensor total_d;  // weighted discriminator objective (may be undefined)
  LossReport report;
};

// include_task=false drops the task term from the generator total (the
// frozen-generator ablation trains G without task supervision).
// NumericError if any supplied part is non-finite.
ComposedLoss compose(const LossWeights& weights, const LossParts& parts, bool include_task);

}  // namespace repaint
