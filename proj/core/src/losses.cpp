#include "repaint/losses.hpp"

#include <cmath>

namespace repaint {

void LossWeights::validate() const {
  if (lambda_gan < 0 || lambda_feat < 0 || lambda_kld < 0 || lambda_task < 0)
    throw ConfigError("loss weights must be >= 0");
}

namespace {
void check_finite_scalar(const char* what, const Tensor& t) {
  if (!std::isfinite(t.item())) throw NumericError(strcat_msg(what, ": non-finite value"));
}
}  // namespace

Tensor gan_loss_d(const Tensor& real_logits, const Tensor& fake_logits) {
  Tensor loss = add(mean(softplus(neg(real_logits))), mean(softplus(fake_logits)));
  check_finite_scalar("gan_loss_d", loss);
  return loss;
}

Tensor gan_loss_g(const Tensor& fake_logits, GanForm form) {
  Tensor loss;
  if (form == GanForm::NonSaturating) {
    loss = mean(softplus(neg(fake_logits)));
  } else {
    // E[log(1 - sigma(fake))] = -E[softplus(fake)]
    loss = neg(mean(softplus(fake_logits)));
  }
  check_finite_scalar("gan_loss_g", loss);
  return loss;
}

Tensor kld_loss(const Tensor& mu, const Tensor& logvar) {
  if (mu.shape() != logvar.shape())
    throw DimensionError(strcat_msg("kld_loss: shape mismatch ", shape_str(mu.shape()), " vs ",
                                    shape_str(logvar.shape())));
  const int64_t batch = mu.rank() >= 2 ? mu.dim(0) : 1;
  // mu^2 + exp(logvar) - 1 - logvar, summed, halved, averaged over batch
  Tensor t = sub(add(mul(mu, mu), exp(logvar)), affine(logvar, 1.0, 1.0));
  return affine(sum(t), 0.5 / static_cast<double>(batch), 0.0);
}

Tensor feat_match_loss(std::span<const Tensor> real_feats, std::span<const Tensor> fake_feats) {
  if (real_feats.size() != fake_feats.size())
    throw DimensionError(strcat_msg("feat_match_loss: ", real_feats.size(), " real layers vs ",
                                    fake_feats.size(), " fake layers"));
  if (real_feats.empty()) throw DimensionError("feat_match_loss: empty feature lists");
  Tensor acc;
  for (size_t i = 0; i < real_feats.size(); ++i) {
    if (real_feats[i].shape() != fake_feats[i].shape())
      throw DimensionError(strcat_msg("feat_match_loss: layer ", i, " shape mismatch ",
                                      shape_str(real_feats[i].shape()), " vs ",
                                      shape_str(fake_feats[i].shape())));
    Tensor layer = mean(abs(sub(fake_feats[i], real_feats[i].detach())));
    acc = acc.defined() ? add(acc, layer) : layer;
  }
  return affine(acc, 1.0 / static_cast<double>(real_feats.size()), 0.0);
}

Tensor task_loss(const Tensor& logits, std::span<const int64_t> labels) {
  return softmax_cross_entropy(logits, labels);
}

ComposedLoss compose(const LossWeights& weights, const LossParts& parts, bool include_task) {
  ComposedLoss out;
  auto finite = [](const char* name, const Tensor& t) {
    const double v = t.item();
    if (!std::isfinite(v)) throw NumericError(strcat_msg("compose: ", name, " is ", v));
    return v;
  };

  if (parts.gan_d.defined()) {
    out.report.l_gan_d = finite("l_gan_d", parts.gan_d);
    out.total_d = affine(parts.gan_d, weights.lambda_gan, 0.0);
    out.report.l_total_d = weights.lambda_gan * out.report.l_gan_d;
  }

  Tensor total_g;
  auto accumulate = [&](const Tensor& part, double w) {
    Tensor term = affine(part, w, 0.0);
    total_g = total_g.defined() ? add(total_g, term) : term;
  };
  if (parts.gan_g.defined()) {
    out.report.l_gan_g = finite("l_gan_g", parts.gan_g);
    accumulate(parts.gan_g, weights.lambda_gan);
  }
  if (parts.feat.defined()) {
    out.report.l_feat = finite("l_feat", parts.feat);
    accumulate(parts.feat, weights.lambda_feat);
  }
  if (parts.kld.defined()) {
    out.report.l_kld = finite("l_kld", parts.kld);
    accumulate(parts.kld, weights.lambda_kld);
  }
  if (parts.task.defined()) {
    out.report.l_task = finite("l_task", parts.task);
    if (include_task && parts.gan_g.defined()) accumulate(parts.task, weights.lambda_task);
  }
  if (total_g.defined()) {
    out.total_g = total_g;
    out.report.l_total_g = total_g.item();
  }
  return out;
}

}  // namespace repaint
