#include "repaint/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace repaint {

namespace {
std::atomic<uint64_t> g_seq{1};
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace detail {
std::shared_ptr<Node> make_node(Shape shape, DType dt) {
  for (int64_t d : shape) {
    if (d < 0) throw DimensionError(strcat_msg("negative dimension in shape ", shape_str(shape)));
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->dtype = dt;
  n->value.assign(static_cast<size_t>(n->numel()) * dtype_size(dt), std::byte{0});
  n->seq = g_seq.fetch_add(1, std::memory_order_relaxed);
  return n;
}
}  // namespace detail

Tensor Tensor::zeros(Shape shape, DType dt, bool requires_grad) {
  Tensor t = wrap(detail::make_node(std::move(shape), dt));
  t.n_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(Shape shape, double v, DType dt, bool requires_grad) {
  Tensor t = zeros(std::move(shape), dt, requires_grad);
  dispatch(dt, [&](auto tag) {
    using T = decltype(tag);
    T* p = t.n_->vdata<T>();
    std::fill(p, p + t.numel(), static_cast<T>(v));
  });
  return t;
}

Tensor Tensor::ones(Shape shape, DType dt, bool requires_grad) {
  return full(std::move(shape), 1.0, dt, requires_grad);
}

Tensor Tensor::scalar(double v, DType dt) { return full({}, v, dt); }

Tensor Tensor::from_data(Shape shape, std::span<const float> v) {
  Tensor t = zeros(std::move(shape), DType::F32);
  if (static_cast<int64_t>(v.size()) != t.numel())
    throw DimensionError(strcat_msg("from_data: ", v.size(), " values for shape ",
                                    shape_str(t.shape())));
  std::memcpy(t.n_->value.data(), v.data(), v.size() * sizeof(float));
  return t;
}

Tensor Tensor::from_data(Shape shape, std::span<const double> v) {
  Tensor t = zeros(std::move(shape), DType::F64);
  if (static_cast<int64_t>(v.size()) != t.numel())
    throw DimensionError(strcat_msg("from_data: ", v.size(), " values for shape ",
                                    shape_str(t.shape())));
  std::memcpy(t.n_->value.data(), v.data(), v.size() * sizeof(double));
  return t;
}

Tensor Tensor::from_data(Shape shape, std::initializer_list<double> v, DType dt) {
  Tensor t = zeros(std::move(shape), dt);
  if (static_cast<int64_t>(v.size()) != t.numel())
    throw DimensionError(strcat_msg("from_data: ", v.size(), " values for shape ",
                                    shape_str(t.shape())));
  dispatch(dt, [&](auto tag) {
    using T = decltype(tag);
    T* p = t.n_->vdata<T>();
    size_t i = 0;
    for (double x : v) p[i++] = static_cast<T>(x);
  });
  return t;
}

Tensor& Tensor::set_requires_grad(bool rg) {
  if (!n_->leaf) throw ContractError("set_requires_grad: only leaf tensors can change tracking");
  n_->requires_grad = rg;
  return *this;
}

template <typename T>
void Tensor::check_dtype() const {
  constexpr DType want = std::is_same_v<T, float> ? DType::F32 : DType::F64;
  if (n_->dtype != want)
    throw ContractError(strcat_msg("tensor is ", dtype_name(n_->dtype), ", accessed as ",
                                   dtype_name(want)));
}
template void Tensor::check_dtype<float>() const;
template void Tensor::check_dtype<double>() const;

void Tensor::check_mutable(const char* what) const {
  if (n_->op) throw ContractError(strcat_msg(what, ": tensor is part of a recorded graph"));
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError(strcat_msg("item(): tensor has ", numel(), " elements"));
  return dispatch(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(n_->vdata<T>()[0]);
  });
}

double Tensor::at(std::span<const int64_t> idx) const {
  if (static_cast<int>(idx.size()) != rank())
    throw DimensionError(strcat_msg("at(): ", idx.size(), " indices for rank ", rank()));
  int64_t flat = 0;
  for (int i = 0; i < rank(); ++i) {
    if (idx[static_cast<size_t>(i)] < 0 || idx[static_cast<size_t>(i)] >= dim(i))
      throw DimensionError(strcat_msg("at(): index ", idx[static_cast<size_t>(i)],
                                      " out of range on axis ", i, " (size ", dim(i), ")"));
    flat = flat * dim(i) + idx[static_cast<size_t>(i)];
  }
  return dispatch(dtype(), [&](auto tag) -> double {
    using T = decltype(tag);
    return static_cast<double>(n_->vdata<T>()[flat]);
  });
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(static_cast<size_t>(numel()));
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = n_->vdata<T>();
    for (size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(p[i]);
  });
  return out;
}

bool Tensor::all_finite() const {
  return dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* p = n_->vdata<T>();
    for (int64_t i = 0; i < numel(); ++i)
      if (!std::isfinite(p[i])) return false;
    return true;
  });
}

Tensor Tensor::grad() const {
  if (!n_->has_grad()) return {};
  Tensor g = zeros(n_->shape, n_->dtype);
  std::memcpy(g.n_->value.data(), n_->grad.data(), n_->grad.size());
  return g;
}

void Tensor::zero_grad() { n_->grad.clear(); }

void Tensor::backward() const {
  if (numel() != 1)
    throw ContractError(strcat_msg("backward(): loss must be scalar, got shape ",
                                   shape_str(shape())));
  if (n_->op && n_->op->consumed)
    throw ContractError("backward(): graph already consumed; run a new forward pass");

  // Collect every producing op reachable from the loss. Owning pointers:
  // op input lists are released as backward runs, which would otherwise
  // free interior nodes mid-traversal.
  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{n_};
  while (!stack.empty()) {
    std::shared_ptr<detail::Node> cur = std::move(stack.back());
    stack.pop_back();
    if (!cur->op || !seen.insert(cur.get()).second) continue;
    for (auto& in : cur->op->inputs) stack.push_back(in);
    order.push_back(std::move(cur));
  }
  // Reverse topological order == descending forward sequence numbers.
  std::sort(order.begin(), order.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });

  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    n_->gdata<T>()[0] = T(1);
  });

  for (auto& node : order) {
    if (node->op->consumed)
      throw ContractError("backward(): subgraph already consumed; run a new forward pass");
    if (node->has_grad()) node->op->backward(*node);
    node->op->consumed = true;
    node->op->backward = nullptr;  // release captured buffers
    node->op->inputs.clear();
  }
}

Tensor Tensor::detach() const {
  auto n = std::make_shared<detail::Node>();
  n->shape = n_->shape;
  n->dtype = n_->dtype;
  n->value = n_->value;  // copy; detached tensors are independently mutable
  n->seq = n_->seq;
  return wrap(std::move(n));
}

Tensor Tensor::clone() const {
  Tensor t = zeros(n_->shape, n_->dtype);
  t.n_->value = n_->value;
  return t;
}

Tensor Tensor::astype(DType dt) const {
  if (dt == dtype()) return clone();
  Tensor t = zeros(n_->shape, dt);
  if (dt == DType::F64) {
    const float* src = n_->vdata<float>();
    double* dst = t.n_->vdata<double>();
    for (int64_t i = 0; i < numel(); ++i) dst[i] = static_cast<double>(src[i]);
  } else {
    const double* src = n_->vdata<double>();
    float* dst = t.n_->vdata<float>();
    for (int64_t i = 0; i < numel(); ++i) dst[i] = static_cast<float>(src[i]);
  }
  return t;
}

void Tensor::fill_(double v) {
  check_mutable("fill_");
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    T* p = n_->vdata<T>();
    std::fill(p, p + numel(), static_cast<T>(v));
  });
}

void Tensor::copy_from(const Tensor& src) {
  check_mutable("copy_from");
  if (src.shape() != shape() || src.dtype() != dtype())
    throw DimensionError(strcat_msg("copy_from: shape/dtype mismatch ", shape_str(src.shape()),
                                    " vs ", shape_str(shape())));
  std::memcpy(n_->value.data(), src.n_->value.data(), n_->value.size());
}

}  // namespace repaint
