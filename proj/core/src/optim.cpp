#include "repaint/optim.hpp"

#include <cmath>

namespace repaint {

void adam_step(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v, int64_t t,
               const AdamConfig& cfg) {
  if (grad.shape() != param.shape() || m.shape() != param.shape() || v.shape() != param.shape())
    throw DimensionError("adam_step: parameter/gradient/state shape mismatch");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  dispatch(param.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto p = param.data<T>();
    auto g = grad.cdata<T>();
    auto mm = m.data<T>();
    auto vv = v.data<T>();
    for (size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(mm[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(vv[i]) + (1.0 - cfg.beta2) * gi * gi;
      mm[i] = static_cast<T>(mi);
      vv[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      p[i] = static_cast<T>(static_cast<double>(p[i]) -
                            cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  });
}

void rmsprop_step(Tensor& param, const Tensor& grad, Tensor& sq_avg, double lr,
                  const RmspropConfig& cfg) {
  if (grad.shape() != param.shape() || sq_avg.shape() != param.shape())
    throw DimensionError("rmsprop_step: parameter/gradient/state shape mismatch");
  dispatch(param.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto p = param.data<T>();
    auto g = grad.cdata<T>();
    auto s = sq_avg.data<T>();
    for (size_t i = 0; i < p.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double si = cfg.alpha * static_cast<double>(s[i]) + (1.0 - cfg.alpha) * gi * gi;
      s[i] = static_cast<T>(si);
      p[i] = static_cast<T>(static_cast<double>(p[i]) - lr * gi / (std::sqrt(si) + cfg.eps));
    }
  });
}

double task_lr_schedule(double lr0, double epoch, double decay, int decay_epochs) {
  const double warmup = epoch < 1.0 ? std::max(epoch, 0.0) : 1.0;
  const double decays = std::floor(epoch / static_cast<double>(decay_epochs));
  return lr0 * warmup * std::pow(decay, std::max(decays, 0.0));
}

double clip_grad_norm(std::span<NamedTensor> params, double max_norm) {
  double sq = 0.0;
  for (auto& p : params) {
    auto& node = *p.tensor.node();
    if (!node.has_grad()) continue;
    dispatch(p.tensor.dtype(), [&](auto tag) {
      using T = decltype(tag);
      const T* g = reinterpret_cast<const T*>(node.grad.data());
      for (int64_t i = 0; i < node.numel(); ++i)
        sq += static_cast<double>(g[i]) * static_cast<double>(g[i]);
    });
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& p : params) {
      auto& node = *p.tensor.node();
      if (!node.has_grad()) continue;
      dispatch(p.tensor.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* g = reinterpret_cast<T*>(node.grad.data());
        for (int64_t i = 0; i < node.numel(); ++i)
          g[i] = static_cast<T>(static_cast<double>(g[i]) * scale);
      });
    }
  }
  return norm;
}

Adam::Adam(std::vector<NamedTensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (auto& p : params_) {
    m_.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
    v_.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
  }
}

void Adam::step() {
  ++t_;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& node = *params_[i].tensor.node();
    if (!node.has_grad()) continue;
    Tensor g = params_[i].tensor.grad();
    adam_step(params_[i].tensor, g, m_[i], v_[i], t_, cfg_);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::visit_state(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < params_.size(); ++i) {
    fn(join_name(prefix, "m." + params_[i].name), m_[i]);
    fn(join_name(prefix, "v." + params_[i].name), v_[i]);
  }
}

Rmsprop::Rmsprop(std::vector<NamedTensor> params, RmspropConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (auto& p : params_)
    sq_avg_.push_back(Tensor::zeros(p.tensor.shape(), p.tensor.dtype()));
}

void Rmsprop::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& node = *params_[i].tensor.node();
    if (!node.has_grad()) continue;
    Tensor g = params_[i].tensor.grad();
    rmsprop_step(params_[i].tensor, g, sq_avg_[i], lr, cfg_);
  }
}

void Rmsprop::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Rmsprop::visit_state(const std::string& prefix, const TensorVisitor& fn) {
  for (size_t i = 0; i < params_.size(); ++i)
    fn(join_name(prefix, "sq." + params_[i].name), sq_avg_[i]);
}

}  // namespace repaint
