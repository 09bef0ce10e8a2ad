#include "repaint/grad_check.hpp"

#include <cmath>

#include "repaint/common.hpp"

namespace repaint {

namespace {
double eval_scalar(const TensorFn& f, const std::vector<Tensor>& inputs) {
  NoGradGuard ng;
  Tensor out = f(inputs);
  if (out.numel() != 1)
    throw ContractError(strcat_msg("grad_check: f must be scalar-valued, got shape ",
                                   shape_str(out.shape())));
  return out.item();
}
}  // namespace

GradCheckReport grad_check(const TensorFn& f, std::vector<Tensor> inputs, double h, double tol) {
  // Work on fresh leaves so the caller's tensors stay out of the graph.
  for (auto& t : inputs) {
    bool rg = t.requires_grad();
    t = t.clone();
    t.set_requires_grad(rg);
  }

  Tensor loss = f(inputs);
  if (loss.numel() != 1)
    throw ContractError(strcat_msg("grad_check: f must be scalar-valued, got shape ",
                                   shape_str(loss.shape())));
  if (!loss.all_finite()) throw NumericError("grad_check: non-finite loss in forward pass");
  loss.backward();

  std::vector<std::vector<double>> analytic(inputs.size());
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    Tensor g = inputs[k].grad();
    analytic[k] = g.defined() ? g.to_vector()
                              : std::vector<double>(static_cast<size_t>(inputs[k].numel()), 0.0);
  }

  GradCheckReport rep;
  rep.pass = true;
  for (size_t k = 0; k < inputs.size(); ++k) {
    if (!inputs[k].requires_grad()) continue;
    Tensor& x = inputs[k];
    dispatch(x.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = x.data<T>();
      for (size_t i = 0; i < d.size(); ++i) {
        const T saved = d[i];
        d[i] = static_cast<T>(static_cast<double>(saved) + h);
        const double fp = eval_scalar(f, inputs);
        d[i] = static_cast<T>(static_cast<double>(saved) - h);
        const double fm = eval_scalar(f, inputs);
        d[i] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = analytic[k][i];
        if (!std::isfinite(fd) || !std::isfinite(an))
          throw NumericError(strcat_msg("grad_check: non-finite gradient at input ", k,
                                        " element ", i, " (analytic ", an, ", fd ", fd, ")"));
        const double rel =
            std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-12});
        if (rel > rep.max_rel_err) {
          rep.max_rel_err = rel;
          rep.worst_input = static_cast<int64_t>(k);
          rep.worst_element = static_cast<int64_t>(i);
        }
      }
    });
  }
  rep.pass = rep.max_rel_err <= tol;
  return rep;
}

GradCheckReport grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                           double h, double tol) {
  return grad_check([&f](const std::vector<Tensor>& in) { return f(in[0]); }, {x}, h, tol);
}

}  // namespace repaint
