#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "repaint/common.hpp"

namespace repaint {

enum class DType : uint8_t { F32 = 0, F64 = 1 };

inline size_t dtype_size(DType dt) { return dt == DType::F32 ? 4 : 8; }
inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node;

// One recorded forward op: enough to run reverse accumulation. `backward`
// reads the output node's grad and accumulates into the inputs' grads.
struct OpRecord {
  const char* name = "";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node& out)> backward;
  bool consumed = false;
};

struct Node {
  Shape shape;
  DType dtype = DType::F32;
  std::vector<std::byte> value;
  std::vector<std::byte> grad;  // empty until first accumulation
  bool requires_grad = false;   // true for tracked leaves and their descendants
  bool leaf = true;
  std::shared_ptr<OpRecord> op;  // producer; null for leaves
  uint64_t seq = 0;              // forward execution order

  int64_t numel() const { return shape_numel(shape); }

  template <typename T>
  T* vdata() {
    return reinterpret_cast<T*>(value.data());
  }
  template <typename T>
  const T* vdata() const {
    return reinterpret_cast<const T*>(value.data());
  }
  // Grad buffer, zero-initialized on first use.
  template <typename T>
  T* gdata() {
    if (grad.empty()) grad.assign(value.size(), std::byte{0});
    return reinterpret_cast<T*>(grad.data());
  }
  bool has_grad() const { return !grad.empty(); }
};

std::shared_ptr<Node> make_node(Shape shape, DType dt);

}  // namespace detail

// Dense row-major n-d array with optional reverse-mode gradient tracking.
// Copying a Tensor is cheap (shared buffer). Tensors participating in a
// recorded graph must not be mutated; the mutating APIs enforce this.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dt = DType::F32, bool requires_grad = false);
  static Tensor full(Shape shape, double v, DType dt = DType::F32, bool requires_grad = false);
  static Tensor ones(Shape shape, DType dt = DType::F32, bool requires_grad = false);
  static Tensor scalar(double v, DType dt = DType::F32);
  static Tensor from_data(Shape shape, std::span<const float> v);
  static Tensor from_data(Shape shape, std::span<const double> v);
  static Tensor from_data(Shape shape, std::initializer_list<double> v, DType dt = DType::F32);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  int rank() const { return static_cast<int>(n_->shape.size()); }
  int64_t dim(int i) const { return n_->shape.at(static_cast<size_t>(i)); }
  int64_t numel() const { return n_->numel(); }
  DType dtype() const { return n_->dtype; }

  bool requires_grad() const { return n_ && n_->requires_grad; }
  bool is_leaf() const { return !n_ || n_->leaf; }
  Tensor& set_requires_grad(bool rg);

  // Mutable element access; only legal on tensors outside any recorded graph.
  template <typename T>
  std::span<T> data() {
    check_dtype<T>();
    check_mutable("data()");
    return {n_->vdata<T>(), static_cast<size_t>(numel())};
  }
  template <typename T>
  std::span<const T> cdata() const {
    check_dtype<T>();
    return {n_->vdata<T>(), static_cast<size_t>(numel())};
  }

  double item() const;                       // numel()==1
  double at(std::span<const int64_t> idx) const;  // read as double, any dtype
  double at(std::initializer_list<int64_t> idx) const {
    return at(std::span<const int64_t>(idx.begin(), idx.size()));
  }
  std::vector<double> to_vector() const;
  bool all_finite() const;

  // Gradient of the most recent backward pass; undefined Tensor if none.
  Tensor grad() const;
  void zero_grad();

  // Reverse accumulation from a scalar. Consumes the recorded graph:
  // a second backward without a fresh forward raises ContractError.
  void backward() const;

  Tensor detach() const;  // shares the buffer, drops graph + tracking
  Tensor clone() const;   // deep copy, fresh leaf
  Tensor astype(DType dt) const;

  void fill_(double v);
  void copy_from(const Tensor& src);  // same shape+dtype, bitwise copy

  const std::shared_ptr<detail::Node>& node() const { return n_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.n_ = std::move(n);
    return t;
  }

 private:
  template <typename T>
  void check_dtype() const;
  void check_mutable(const char* what) const;

  std::shared_ptr<detail::Node> n_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Thread-local switch for graph recording.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dispatch a generic lambda on the runtime dtype: f(float{}) or f(double{}).
template <typename F>
decltype(auto) dispatch(DType dt, F&& f) {
  if (dt == DType::F32) return f(float{});
  return f(double{});
}

}  // namespace repaint
