#include "repaint/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace repaint {

namespace {

using detail::Node;
using detail::OpRecord;

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using CMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

bool tracked(std::initializer_list<const Tensor*> ins) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

// Allocate the output node and, when tracking, record the backward closure.
Tensor make_op(const char* name, Shape shape, DType dt,
               std::initializer_list<const Tensor*> ins,
               std::function<void(Node&)> backward) {
  Tensor out = Tensor::wrap(detail::make_node(std::move(shape), dt));
  if (tracked(ins)) {
    auto op = std::make_shared<OpRecord>();
    op->name = name;
    for (const Tensor* t : ins) op->inputs.push_back(t->node());
    op->backward = std::move(backward);
    out.node()->op = std::move(op);
    out.node()->requires_grad = true;
    out.node()->leaf = false;
  }
  return out;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype())
    throw ContractError(strcat_msg(op, ": dtype mismatch ", dtype_name(a.dtype()), " vs ",
                                   dtype_name(b.dtype())));
  if (a.shape() != b.shape())
    throw DimensionError(strcat_msg(op, ": shape mismatch ", shape_str(a.shape()), " vs ",
                                    shape_str(b.shape())));
}

// im2col / col2im scratch, reused across calls.
template <typename T>
std::vector<T>& scratch_buf(int which) {
  thread_local std::vector<T> bufs[4];
  return bufs[which];
}

struct Conv2dDims {
  int64_t batch, cin, h, w, cout, kh, kw, oh, ow;
  int stride, pad;
  int64_t cols() const { return cin * kh * kw; }
  int64_t out_hw() const { return oh * ow; }
};

// One batch element: x[cin,h,w] -> col[oh*ow, cin*kh*kw], zero-padded.
template <typename T>
void im2col(const T* x, const Conv2dDims& d, T* col) {
  const int64_t khw = d.kh * d.kw;
  for (int64_t oy = 0; oy < d.oh; ++oy) {
    for (int64_t ox = 0; ox < d.ow; ++ox) {
      T* row = col + (oy * d.ow + ox) * d.cols();
      const int64_t iy0 = oy * d.stride - d.pad;
      const int64_t ix0 = ox * d.stride - d.pad;
      for (int64_t c = 0; c < d.cin; ++c) {
        const T* xc = x + c * d.h * d.w;
        T* rc = row + c * khw;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
          const int64_t iy = iy0 + ky;
          if (iy < 0 || iy >= d.h) {
            std::fill(rc + ky * d.kw, rc + (ky + 1) * d.kw, T(0));
            continue;
          }
          for (int64_t kx = 0; kx < d.kw; ++kx) {
            const int64_t ix = ix0 + kx;
            rc[ky * d.kw + kx] = (ix >= 0 && ix < d.w) ? xc[iy * d.w + ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of col grads back into gx[cin,h,w].
template <typename T>
void col2im_add(const T* col, const Conv2dDims& d, T* gx) {
  const int64_t khw = d.kh * d.kw;
  for (int64_t oy = 0; oy < d.oh; ++oy) {
    for (int64_t ox = 0; ox < d.ow; ++ox) {
      const T* row = col + (oy * d.ow + ox) * d.cols();
      const int64_t iy0 = oy * d.stride - d.pad;
      const int64_t ix0 = ox * d.stride - d.pad;
      for (int64_t c = 0; c < d.cin; ++c) {
        T* xc = gx + c * d.h * d.w;
        const T* rc = row + c * khw;
        for (int64_t ky = 0; ky < d.kh; ++ky) {
          const int64_t iy = iy0 + ky;
          if (iy < 0 || iy >= d.h) continue;
          for (int64_t kx = 0; kx < d.kw; ++kx) {
            const int64_t ix = ix0 + kx;
            if (ix >= 0 && ix < d.w) xc[iy * d.w + ix] += rc[ky * d.kw + kx];
          }
        }
      }
    }
  }
}

// Unary elementwise helper: forward computes out from x; backward multiplies
// the incoming grad by dfdx(x_i, out_i).
template <typename FwdT, typename BwdT>
Tensor unary_op(const char* name, const Tensor& x, FwdT fwd, BwdT dfdx) {
  auto xn = x.node();
  Tensor out = make_op(name, x.shape(), x.dtype(), {&x}, [xn, dfdx](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      if (!xn->requires_grad) return;
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      const T* xv = xn->vdata<T>();
      const T* ov = o.vdata<T>();
      T* gx = xn->gdata<T>();
      const int64_t n = o.numel();
      for (int64_t i = 0; i < n; ++i)
        gx[i] += go[i] * static_cast<T>(dfdx(static_cast<double>(xv[i]),
                                             static_cast<double>(ov[i])));
    });
  });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = x.node()->vdata<T>();
    T* ov = out.node()->vdata<T>();
    const int64_t n = x.numel();
    for (int64_t i = 0; i < n; ++i) ov[i] = static_cast<T>(fwd(static_cast<double>(xv[i])));
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  auto an = a.node(), bn = b.node();
  Tensor out = make_op("add", a.shape(), a.dtype(), {&a, &b}, [an, bn](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      const int64_t n = o.numel();
      if (an->requires_grad) {
        T* g = an->gdata<T>();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i];
      }
      if (bn->requires_grad) {
        T* g = bn->gdata<T>();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i];
      }
    });
  });
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* av = an->vdata<T>();
    const T* bv = bn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] + bv[i];
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  auto an = a.node(), bn = b.node();
  Tensor out = make_op("sub", a.shape(), a.dtype(), {&a, &b}, [an, bn](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      const int64_t n = o.numel();
      if (an->requires_grad) {
        T* g = an->gdata<T>();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i];
      }
      if (bn->requires_grad) {
        T* g = bn->gdata<T>();
        for (int64_t i = 0; i < n; ++i) g[i] -= go[i];
      }
    });
  });
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* av = an->vdata<T>();
    const T* bv = bn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] - bv[i];
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  auto an = a.node(), bn = b.node();
  Tensor out = make_op("mul", a.shape(), a.dtype(), {&a, &b}, [an, bn](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      const int64_t n = o.numel();
      if (an->requires_grad) {
        T* g = an->gdata<T>();
        const T* bv = bn->vdata<T>();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i] * bv[i];
      }
      if (bn->requires_grad) {
        T* g = bn->gdata<T>();
        const T* av = an->vdata<T>();
        for (int64_t i = 0; i < n; ++i) g[i] += go[i] * av[i];
      }
    });
  });
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* av = an->vdata<T>();
    const T* bv = bn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] * bv[i];
  });
  return out;
}

Tensor affine(const Tensor& x, double scale, double shift) {
  auto xn = x.node();
  Tensor out = make_op("affine", x.shape(), x.dtype(), {&x}, [xn, scale](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      if (!xn->requires_grad) return;
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      T* g = xn->gdata<T>();
      const T s = static_cast<T>(scale);
      for (int64_t i = 0; i < o.numel(); ++i) g[i] += go[i] * s;
    });
  });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    const T s = static_cast<T>(scale), t = static_cast<T>(shift);
    for (int64_t i = 0; i < x.numel(); ++i) ov[i] = s * xv[i] + t;
  });
  return out;
}

Tensor exp(const Tensor& x) {
  return unary_op("exp", x, [](double v) { return std::exp(v); },
                  [](double, double o) { return o; });
}

Tensor log(const Tensor& x) {
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = x.node()->vdata<T>();
    for (int64_t i = 0; i < x.numel(); ++i)
      if (!(xv[i] > T(0)))
        throw DomainError(strcat_msg("log: non-positive input ", static_cast<double>(xv[i]),
                                     " at flat index ", i));
  });
  return unary_op("log", x, [](double v) { return std::log(v); },
                  [](double v, double) { return 1.0 / v; });
}

Tensor tanh(const Tensor& x) {
  return unary_op("tanh", x, [](double v) { return std::tanh(v); },
                  [](double, double o) { return 1.0 - o * o; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op("sigmoid", x,
                  [](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                               : std::exp(v) / (1.0 + std::exp(v)); },
                  [](double, double o) { return o * (1.0 - o); });
}

Tensor relu(const Tensor& x) {
  return unary_op("relu", x, [](double v) { return v > 0 ? v : 0.0; },
                  [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  return unary_op("leaky_relu", x,
                  [slope](double v) { return v > 0 ? v : slope * v; },
                  [slope](double v, double) { return v > 0 ? 1.0 : slope; });
}

Tensor softplus(const Tensor& x) {
  return unary_op("softplus", x,
                  [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v))); },
                  [](double v, double) {
                    return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                                  : std::exp(v) / (1.0 + std::exp(v));
                  });
}

Tensor abs(const Tensor& x) {
  return unary_op("abs", x, [](double v) { return std::fabs(v); },
                  [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sum(const Tensor& x) {
  auto xn = x.node();
  Tensor out = make_op("sum", {}, x.dtype(), {&x}, [xn](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      if (!xn->requires_grad) return;
      const T go = reinterpret_cast<const T*>(o.grad.data())[0];
      T* g = xn->gdata<T>();
      for (int64_t i = 0; i < xn->numel(); ++i) g[i] += go;
    });
  });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    double acc = 0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += static_cast<double>(xv[i]);
    out.node()->vdata<T>()[0] = static_cast<T>(acc);
  });
  return out;
}

Tensor mean(const Tensor& x) {
  const int64_t n = x.numel();
  if (n == 0) throw DimensionError("mean: empty tensor");
  auto xn = x.node();
  Tensor out = make_op("mean", {}, x.dtype(), {&x}, [xn, n](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      if (!xn->requires_grad) return;
      const T go = reinterpret_cast<const T*>(o.grad.data())[0] / static_cast<T>(n);
      T* g = xn->gdata<T>();
      for (int64_t i = 0; i < n; ++i) g[i] += go;
    });
  });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    double acc = 0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(xv[i]);
    out.node()->vdata<T>()[0] = static_cast<T>(acc / static_cast<double>(n));
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError(strcat_msg("reshape: ", shape_str(x.shape()), " (", x.numel(),
                                    " elements) to ", shape_str(shape), " (",
                                    shape_numel(shape), ")"));
  auto xn = x.node();
  Tensor out = make_op("reshape", std::move(shape), x.dtype(), {&x}, [xn](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      if (!xn->requires_grad) return;
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      T* g = xn->gdata<T>();
      for (int64_t i = 0; i < o.numel(); ++i) g[i] += go[i];
    });
  });
  std::memcpy(out.node()->value.data(), xn->value.data(), xn->value.size());
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw DimensionError("concat_channels: expected rank-4 NCHW tensors");
  if (a.dtype() != b.dtype())
    throw ContractError("concat_channels: dtype mismatch");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw DimensionError(strcat_msg("concat_channels: incompatible shapes ",
                                    shape_str(a.shape()), " vs ", shape_str(b.shape())));
  const int64_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), HW = a.dim(2) * a.dim(3);
  auto an = a.node(), bn = b.node();
  Tensor out = make_op(
      "concat_channels", {B, Ca + Cb, a.dim(2), a.dim(3)}, a.dtype(), {&a, &b},
      [an, bn, B, Ca, Cb, HW](Node& o) {
        dispatch(o.dtype, [&](auto tag) {
          using T = decltype(tag);
          const T* go = reinterpret_cast<const T*>(o.grad.data());
          for (int64_t i = 0; i < B; ++i) {
            const T* gi = go + i * (Ca + Cb) * HW;
            if (an->requires_grad) {
              T* g = an->gdata<T>() + i * Ca * HW;
              for (int64_t j = 0; j < Ca * HW; ++j) g[j] += gi[j];
            }
            if (bn->requires_grad) {
              T* g = bn->gdata<T>() + i * Cb * HW;
              for (int64_t j = 0; j < Cb * HW; ++j) g[j] += gi[Ca * HW + j];
            }
          }
        });
      });
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* av = an->vdata<T>();
    const T* bv = bn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t i = 0; i < B; ++i) {
      std::memcpy(ov + i * (Ca + Cb) * HW, av + i * Ca * HW, sizeof(T) * Ca * HW);
      std::memcpy(ov + i * (Ca + Cb) * HW + Ca * HW, bv + i * Cb * HW, sizeof(T) * Cb * HW);
    }
  });
  return out;
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("upsample_nearest2x: expected rank-4 NCHW tensor");
  const int64_t BC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  auto xn = x.node();
  Tensor out = make_op("upsample_nearest2x", {x.dim(0), x.dim(1), 2 * H, 2 * W}, x.dtype(),
                       {&x}, [xn, BC, H, W](Node& o) {
                         dispatch(o.dtype, [&](auto tag) {
                           using T = decltype(tag);
                           if (!xn->requires_grad) return;
                           const T* go = reinterpret_cast<const T*>(o.grad.data());
                           T* g = xn->gdata<T>();
                           for (int64_t p = 0; p < BC; ++p) {
                             const T* gp = go + p * 4 * H * W;
                             T* gxp = g + p * H * W;
                             for (int64_t y = 0; y < H; ++y)
                               for (int64_t xq = 0; xq < W; ++xq)
                                 gxp[y * W + xq] += gp[(2 * y) * 2 * W + 2 * xq] +
                                                    gp[(2 * y) * 2 * W + 2 * xq + 1] +
                                                    gp[(2 * y + 1) * 2 * W + 2 * xq] +
                                                    gp[(2 * y + 1) * 2 * W + 2 * xq + 1];
                           }
                         });
                       });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t p = 0; p < BC; ++p) {
      const T* xp = xv + p * H * W;
      T* op = ov + p * 4 * H * W;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xq = 0; xq < W; ++xq) {
          const T v = xp[y * W + xq];
          op[(2 * y) * 2 * W + 2 * xq] = v;
          op[(2 * y) * 2 * W + 2 * xq + 1] = v;
          op[(2 * y + 1) * 2 * W + 2 * xq] = v;
          op[(2 * y + 1) * 2 * W + 2 * xq + 1] = v;
        }
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw DimensionError("linear: expected x:[B,I], w:[O,I], b:[O]");
  if (x.dim(1) != w.dim(1))
    throw DimensionError(strcat_msg("linear: input features ", x.dim(1),
                                    " != weight features ", w.dim(1), " (axis 1)"));
  if (w.dim(0) != b.dim(0))
    throw DimensionError(strcat_msg("linear: weight rows ", w.dim(0), " != bias size ",
                                    b.dim(0)));
  const int64_t B = x.dim(0), I = x.dim(1), O = w.dim(0);
  auto xn = x.node(), wn = w.node(), bn = b.node();
  Tensor out = make_op("linear", {B, O}, x.dtype(), {&x, &w, &b}, [xn, wn, bn, B, I, O](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      CMatMap<T> gy(reinterpret_cast<const T*>(o.grad.data()), B, O);
      if (xn->requires_grad) {
        MatMap<T> gx(xn->gdata<T>(), B, I);
        CMatMap<T> wv(wn->vdata<T>(), O, I);
        gx.noalias() += gy * wv;
      }
      if (wn->requires_grad) {
        MatMap<T> gw(wn->gdata<T>(), O, I);
        CMatMap<T> xv(xn->vdata<T>(), B, I);
        gw.noalias() += gy.transpose() * xv;
      }
      if (bn->requires_grad) {
        T* gb = bn->gdata<T>();
        const T* gyp = reinterpret_cast<const T*>(o.grad.data());
        for (int64_t i = 0; i < B; ++i)
          for (int64_t j = 0; j < O; ++j) gb[j] += gyp[i * O + j];
      }
    });
  });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    CMatMap<T> xv(xn->vdata<T>(), B, I);
    CMatMap<T> wv(wn->vdata<T>(), O, I);
    MatMap<T> y(out.node()->vdata<T>(), B, O);
    y.noalias() = xv * wv.transpose();
    const T* bv = bn->vdata<T>();
    T* yp = out.node()->vdata<T>();
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < O; ++j) yp[i * O + j] += bv[j];
  });
  return out;
}

Shape conv2d_output_shape(const Shape& x, const Shape& w, int stride, int pad) {
  if (x.size() != 4 || w.size() != 4)
    throw DimensionError("conv2d: expected x:[B,Cin,H,W], w:[Cout,Cin,kh,kw]");
  if (stride < 1) throw DimensionError(strcat_msg("conv2d: stride ", stride, " < 1"));
  if (pad < 0) throw DimensionError(strcat_msg("conv2d: pad ", pad, " < 0"));
  if (x[1] != w[1])
    throw DimensionError(strcat_msg("conv2d: input channels ", x[1], " != weight channels ",
                                    w[1], " (axis 1)"));
  const int64_t kh = w[2], kw = w[3];
  if (kh > x[2] + 2 * pad || kw > x[3] + 2 * pad)
    throw DimensionError(strcat_msg("conv2d: kernel ", kh, "x", kw, " larger than padded input ",
                                    x[2] + 2 * pad, "x", x[3] + 2 * pad, " (axes 2,3)"));
  const int64_t oh = (x[2] + 2 * pad - kh) / stride + 1;
  const int64_t ow = (x[3] + 2 * pad - kw) / stride + 1;
  return {x[0], w[0], oh, ow};
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  Shape osh = conv2d_output_shape(x.shape(), w.shape(), stride, pad);
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw DimensionError(strcat_msg("conv2d: bias shape ", shape_str(b.shape()),
                                    " does not match out channels ", w.dim(0)));
  Conv2dDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0),
               w.dim(2), w.dim(3), osh[2],   osh[3],   stride, pad};
  auto xn = x.node(), wn = w.node(), bn = b.node();

  Tensor out = make_op("conv2d", osh, x.dtype(), {&x, &w, &b}, [xn, wn, bn, d](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      const int64_t K = d.cols(), M = d.out_hw();
      std::vector<T>& col = scratch_buf<T>(0);
      std::vector<T>& gcol = scratch_buf<T>(1);
      col.resize(static_cast<size_t>(M * K));
      if (xn->requires_grad) gcol.resize(static_cast<size_t>(M * K));
      CMatMap<T> wv(wn->vdata<T>(), d.cout, K);
      for (int64_t i = 0; i < d.batch; ++i) {
        CMatMap<T> gy(reinterpret_cast<const T*>(o.grad.data()) + i * d.cout * M, d.cout, M);
        if (wn->requires_grad) {
          im2col(xn->vdata<T>() + i * d.cin * d.h * d.w, d, col.data());
          MatMap<T> gw(wn->gdata<T>(), d.cout, K);
          CMatMap<T> cm(col.data(), M, K);
          gw.noalias() += gy * cm;
        }
        if (xn->requires_grad) {
          MatMap<T> gc(gcol.data(), M, K);
          gc.noalias() = gy.transpose() * wv;
          col2im_add(gcol.data(), d, xn->gdata<T>() + i * d.cin * d.h * d.w);
        }
        if (bn->requires_grad) {
          T* gb = bn->gdata<T>();
          const T* gyp = reinterpret_cast<const T*>(o.grad.data()) + i * d.cout * M;
          for (int64_t c = 0; c < d.cout; ++c) {
            T acc = 0;
            for (int64_t j = 0; j < M; ++j) acc += gyp[c * M + j];
            gb[c] += acc;
          }
        }
      }
    });
  });

  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const int64_t K = d.cols(), M = d.out_hw();
    std::vector<T>& col = scratch_buf<T>(0);
    col.resize(static_cast<size_t>(M * K));
    CMatMap<T> wv(wn->vdata<T>(), d.cout, K);
    const T* bv = bn->vdata<T>();
    for (int64_t i = 0; i < d.batch; ++i) {
      im2col(xn->vdata<T>() + i * d.cin * d.h * d.w, d, col.data());
      CMatMap<T> cm(col.data(), M, K);
      MatMap<T> y(out.node()->vdata<T>() + i * d.cout * M, d.cout, M);
      y.noalias() = wv * cm.transpose();
      T* yp = out.node()->vdata<T>() + i * d.cout * M;
      for (int64_t c = 0; c < d.cout; ++c) {
        const T bc = bv[c];
        for (int64_t j = 0; j < M; ++j) yp[c * M + j] += bc;
      }
    }
  });
  return out;
}

Tensor batch_norm_train(const Tensor& x, double eps, BatchStats* stats) {
  if (x.rank() != 4) throw DimensionError("batch_norm_train: expected rank-4 NCHW tensor");
  if (!(eps > 0)) throw ContractError("batch_norm_train: eps must be > 0");
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const int64_t n = B * HW;
  if (n == 1)
    throw NumericError("batch_norm_train: degenerate statistics, batch*spatial size is 1");

  std::vector<double> mu(static_cast<size_t>(C), 0.0), var(static_cast<size_t>(C), 0.0);
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = x.node()->vdata<T>();
    for (int64_t c = 0; c < C; ++c) {
      double s = 0;
      for (int64_t i = 0; i < B; ++i) {
        const T* p = xv + (i * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j) s += static_cast<double>(p[j]);
      }
      mu[static_cast<size_t>(c)] = s / static_cast<double>(n);
      double v = 0;
      for (int64_t i = 0; i < B; ++i) {
        const T* p = xv + (i * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j) {
          const double dlt = static_cast<double>(p[j]) - mu[static_cast<size_t>(c)];
          v += dlt * dlt;
        }
      }
      var[static_cast<size_t>(c)] = v / static_cast<double>(n);
    }
  });

  std::vector<double> invstd(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c)
    invstd[static_cast<size_t>(c)] = 1.0 / std::sqrt(var[static_cast<size_t>(c)] + eps);

  if (stats) {
    stats->mean = mu;
    stats->var.resize(static_cast<size_t>(C));
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    for (int64_t c = 0; c < C; ++c)
      stats->var[static_cast<size_t>(c)] = var[static_cast<size_t>(c)] * unbias;
  }

  auto xn = x.node();
  Tensor out = make_op("batch_norm_train", x.shape(), x.dtype(), {&x},
                       [xn, invstd, B, C, HW, n](Node& o) {
                         dispatch(o.dtype, [&](auto tag) {
                           using T = decltype(tag);
                           if (!xn->requires_grad) return;
                           const T* go = reinterpret_cast<const T*>(o.grad.data());
                           const T* y = o.vdata<T>();  // normalized output
                           T* gx = xn->gdata<T>();
                           for (int64_t c = 0; c < C; ++c) {
                             double s1 = 0, s2 = 0;
                             for (int64_t i = 0; i < B; ++i) {
                               const int64_t base = (i * C + c) * HW;
                               for (int64_t j = 0; j < HW; ++j) {
                                 s1 += static_cast<double>(go[base + j]);
                                 s2 += static_cast<double>(go[base + j]) *
                                       static_cast<double>(y[base + j]);
                               }
                             }
                             const double m1 = s1 / static_cast<double>(n);
                             const double m2 = s2 / static_cast<double>(n);
                             const double is = invstd[static_cast<size_t>(c)];
                             for (int64_t i = 0; i < B; ++i) {
                               const int64_t base = (i * C + c) * HW;
                               for (int64_t j = 0; j < HW; ++j)
                                 gx[base + j] += static_cast<T>(
                                     is * (static_cast<double>(go[base + j]) - m1 -
                                           static_cast<double>(y[base + j]) * m2));
                             }
                           }
                         });
                       });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t c = 0; c < C; ++c) {
      const double m = mu[static_cast<size_t>(c)], is = invstd[static_cast<size_t>(c)];
      for (int64_t i = 0; i < B; ++i) {
        const int64_t base = (i * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j)
          ov[base + j] = static_cast<T>((static_cast<double>(xv[base + j]) - m) * is);
      }
    }
  });
  return out;
}

Tensor channel_affine(const Tensor& x, std::span<const double> scale,
                      std::span<const double> shift) {
  if (x.rank() != 4) throw DimensionError("channel_affine: expected rank-4 NCHW tensor");
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (static_cast<int64_t>(scale.size()) != C || static_cast<int64_t>(shift.size()) != C)
    throw DimensionError(strcat_msg("channel_affine: coefficient size ", scale.size(),
                                    " != channels ", C));
  std::vector<double> sc(scale.begin(), scale.end());
  auto xn = x.node();
  Tensor out = make_op("channel_affine", x.shape(), x.dtype(), {&x}, [xn, sc, B, C, HW](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      if (!xn->requires_grad) return;
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      T* gx = xn->gdata<T>();
      for (int64_t i = 0; i < B; ++i)
        for (int64_t c = 0; c < C; ++c) {
          const T s = static_cast<T>(sc[static_cast<size_t>(c)]);
          const int64_t base = (i * C + c) * HW;
          for (int64_t j = 0; j < HW; ++j) gx[base + j] += go[base + j] * s;
        }
    });
  });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t i = 0; i < B; ++i)
      for (int64_t c = 0; c < C; ++c) {
        const T s = static_cast<T>(scale[static_cast<size_t>(c)]);
        const T t = static_cast<T>(shift[static_cast<size_t>(c)]);
        const int64_t base = (i * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j) ov[base + j] = s * xv[base + j] + t;
      }
  });
  return out;
}

Tensor channel_scale_bias(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4) throw DimensionError("channel_scale_bias: expected rank-4 NCHW tensor");
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (w.rank() != 1 || w.dim(0) != C || b.rank() != 1 || b.dim(0) != C)
    throw DimensionError(strcat_msg("channel_scale_bias: coefficients must be [", C, "]"));
  auto xn = x.node(), wn = w.node(), bn = b.node();
  Tensor out = make_op(
      "channel_scale_bias", x.shape(), x.dtype(), {&x, &w, &b}, [xn, wn, bn, B, C, HW](Node& o) {
        dispatch(o.dtype, [&](auto tag) {
          using T = decltype(tag);
          const T* go = reinterpret_cast<const T*>(o.grad.data());
          const T* xv = xn->vdata<T>();
          const T* wv = wn->vdata<T>();
          for (int64_t c = 0; c < C; ++c) {
            double gw = 0, gb = 0;
            for (int64_t i = 0; i < B; ++i) {
              const int64_t base = (i * C + c) * HW;
              for (int64_t j = 0; j < HW; ++j) {
                gw += static_cast<double>(go[base + j]) * static_cast<double>(xv[base + j]);
                gb += static_cast<double>(go[base + j]);
              }
            }
            if (wn->requires_grad) wn->gdata<T>()[c] += static_cast<T>(gw);
            if (bn->requires_grad) bn->gdata<T>()[c] += static_cast<T>(gb);
            if (xn->requires_grad) {
              T* gx = xn->gdata<T>();
              const T s = wv[c];
              for (int64_t i = 0; i < B; ++i) {
                const int64_t base = (i * C + c) * HW;
                for (int64_t j = 0; j < HW; ++j) gx[base + j] += go[base + j] * s;
              }
            }
          }
        });
      });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    const T* wv = wn->vdata<T>();
    const T* bv = bn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t i = 0; i < B; ++i)
      for (int64_t c = 0; c < C; ++c) {
        const int64_t base = (i * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j) ov[base + j] = wv[c] * xv[base + j] + bv[c];
      }
  });
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("global_avg_pool: expected rank-4 NCHW tensor");
  const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  auto xn = x.node();
  Tensor out = make_op("global_avg_pool", {B, C}, x.dtype(), {&x}, [xn, B, C, HW](Node& o) {
    dispatch(o.dtype, [&](auto tag) {
      using T = decltype(tag);
      if (!xn->requires_grad) return;
      const T* go = reinterpret_cast<const T*>(o.grad.data());
      T* gx = xn->gdata<T>();
      for (int64_t i = 0; i < B; ++i)
        for (int64_t c = 0; c < C; ++c) {
          const T g = go[i * C + c] / static_cast<T>(HW);
          T* p = gx + (i * C + c) * HW;
          for (int64_t j = 0; j < HW; ++j) p[j] += g;
        }
    });
  });
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xv = xn->vdata<T>();
    T* ov = out.node()->vdata<T>();
    for (int64_t i = 0; i < B; ++i)
      for (int64_t c = 0; c < C; ++c) {
        double acc = 0;
        const T* p = xv + (i * C + c) * HW;
        for (int64_t j = 0; j < HW; ++j) acc += static_cast<double>(p[j]);
        ov[i * C + c] = static_cast<T>(acc / static_cast<double>(HW));
      }
  });
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int64_t> labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy: expected logits [B,C]");
  const int64_t B = logits.dim(0), C = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw DimensionError(strcat_msg("softmax_cross_entropy: ", labels.size(), " labels for batch ",
                                    B));
  for (int64_t i = 0; i < B; ++i)
    if (labels[static_cast<size_t>(i)] < 0 || labels[static_cast<size_t>(i)] >= C)
      throw InputError(strcat_msg("softmax_cross_entropy: label ", labels[static_cast<size_t>(i)],
                                  " out of range [0,", C, ") at index ", i));
  std::vector<int64_t> lab(labels.begin(), labels.end());
  auto ln = logits.node();
  Tensor out = make_op("softmax_cross_entropy", {}, logits.dtype(), {&logits},
                       [ln, lab, B, C](Node& o) {
                         dispatch(o.dtype, [&](auto tag) {
                           using T = decltype(tag);
                           if (!ln->requires_grad) return;
                           const T go = reinterpret_cast<const T*>(o.grad.data())[0];
                           const T* lv = ln->vdata<T>();
                           T* gl = ln->gdata<T>();
                           for (int64_t i = 0; i < B; ++i) {
                             const T* row = lv + i * C;
                             double m = static_cast<double>(row[0]);
                             for (int64_t j = 1; j < C; ++j)
                               m = std::max(m, static_cast<double>(row[j]));
                             double z = 0;
                             for (int64_t j = 0; j < C; ++j)
                               z += std::exp(static_cast<double>(row[j]) - m);
                             for (int64_t j = 0; j < C; ++j) {
                               double p = std::exp(static_cast<double>(row[j]) - m) / z;
                               if (j == lab[static_cast<size_t>(i)]) p -= 1.0;
                               gl[i * C + j] += static_cast<T>(
                                   static_cast<double>(go) * p / static_cast<double>(B));
                             }
                           }
                         });
                       });
  dispatch(logits.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* lv = ln->vdata<T>();
    double total = 0;
    for (int64_t i = 0; i < B; ++i) {
      const T* row = lv + i * C;
      double m = static_cast<double>(row[0]);
      for (int64_t j = 1; j < C; ++j) m = std::max(m, static_cast<double>(row[j]));
      double z = 0;
      for (int64_t j = 0; j < C; ++j) z += std::exp(static_cast<double>(row[j]) - m);
      total += m + std::log(z) - static_cast<double>(row[lab[static_cast<size_t>(i)]]);
    }
    out.node()->vdata<T>()[0] = static_cast<T>(total / static_cast<double>(B));
  });
  return out;
}

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    for (auto& v : d) v = static_cast<T>(rng.uniform(lo, hi));
  });
}

void fill_normal(Tensor& t, Rng& rng, double mean, double stddev) {
  dispatch(t.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto d = t.data<T>();
    for (auto& v : d) v = static_cast<T>(rng.normal(mean, stddev));
  });
}

Tensor randn(Shape shape, Rng& rng, DType dt) {
  Tensor t = Tensor::zeros(std::move(shape), dt);
  fill_normal(t, rng, 0.0, 1.0);
  return t;
}

void kaiming_uniform(Tensor& w, Rng& rng, int64_t fan_in, double leaky_slope) {
  if (fan_in <= 0) throw ContractError("kaiming_uniform: fan_in must be positive");
  const double gain = std::sqrt(2.0 / (1.0 + leaky_slope * leaky_slope));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  fill_uniform(w, rng, -bound, bound);
}

}  // namespace repaint
