#pragma once

#include <algorithm>
#include <cstring>
#include <memory>
#include <numeric>
#include <span>
#include <unordered_set>

#include "core/common.hpp"
#include "core/gemm.hpp"

namespace lfsr::ad {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Kernel geometry for conv2d. Output extents follow
///   out = floor((in + 2*pad - dilation*(kernel-1) - 1) / stride) + 1
/// and must be >= 1.
struct ConvSpec {
  int64_t kernel_h = 1, kernel_w = 1;
  int64_t stride_h = 1, stride_w = 1;
  int64_t dilation_h = 1, dilation_w = 1;
  int64_t pad_h = 0, pad_w = 0;
  int64_t in_channels = 0, out_channels = 0;

  int64_t out_extent(int64_t in, int64_t kernel, int64_t stride, int64_t dilation, int64_t pad) const {
    return (in + 2 * pad - dilation * (kernel - 1) - 1) / stride + 1;
  }
  int64_t out_h(int64_t in_h) const { return out_extent(in_h, kernel_h, stride_h, dilation_h, pad_h); }
  int64_t out_w(int64_t in_w) const { return out_extent(in_w, kernel_w, stride_w, dilation_w, pad_w); }

  void validate() const {
    if (kernel_h < 1 || kernel_w < 1) fail_invalid("conv2d: kernel extents must be positive");
    if (stride_h < 1 || stride_w < 1) fail_invalid("conv2d: strides must be positive");
    if (dilation_h < 1 || dilation_w < 1) fail_invalid("conv2d: dilations must be positive");
    if (pad_h < 0 || pad_w < 0) fail_invalid("conv2d: padding must be nonnegative");
    if (in_channels < 1 || out_channels < 1) fail_invalid("conv2d: channel counts must be positive");
  }
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // allocated on first use
  bool requires_grad = false;

  // Tape edges, released once backward() has consumed them.
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  int64_t numel() const { return int64_t(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

namespace detail {
inline thread_local int g_no_grad_depth = 0;
}

inline bool grad_enabled() { return detail::g_no_grad_depth == 0; }

/// Disables tape recording in the current thread while alive.
struct NoGradGuard {
  NoGradGuard() { ++detail::g_no_grad_depth; }
  ~NoGradGuard() { --detail::g_no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

/// Value-semantic handle to an immutable dense array. Every operation
/// produces a fresh tensor; parameters are the only tensors whose storage is
/// updated in place, and only between forward passes (see Adam).
template <typename T>
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(Shape shape) { return filled(std::move(shape), T(0)); }
  static Tensor filled(Shape shape, T v) {
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->value.assign(shape_numel(shape), v);
    t.node_->shape = std::move(shape);
    return t;
  }
  static Tensor from(Shape shape, std::vector<T> data) {
    if (int64_t(data.size()) != shape_numel(shape))
      fail_invalid("tensor: data length ", data.size(), " does not match shape ", shape_str(shape));
    Tensor t;
    t.node_ = std::make_shared<Node<T>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    return t;
  }
  static Tensor scalar(T v) { return from({}, {v}); }
  /// Leaf tensor that accumulates gradients.
  static Tensor param(Shape shape, std::vector<T> data) {
    Tensor t = from(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t dim(size_t i) const { return node_->shape.at(i); }
  int64_t rank() const { return int64_t(node_->shape.size()); }
  int64_t numel() const { return node_->numel(); }
  bool requires_grad() const { return node_->requires_grad; }

  const std::vector<T>& values() const { return node_->value; }
  /// In-place access for optimizer updates; never call during a forward pass.
  std::vector<T>& mutable_values() { return node_->value; }

  bool has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
  const std::vector<T>& grad() const {
    if (!has_grad()) fail_invalid("tensor: gradient not populated; run backward() first");
    return node_->grad;
  }
  void zero_grad() {
    if (node_) node_->grad.clear();
  }

  T item() const {
    if (numel() != 1) fail_invalid("tensor: item() requires a single-element tensor, got shape ", shape_str(shape()));
    return node_->value[0];
  }

  std::shared_ptr<Node<T>> node() const { return node_; }

private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.values())
    if (!std::isfinite(double(v))) return false;
  return true;
}

template <typename T, typename U>
Tensor<U> cast(const Tensor<T>& t) {
  std::vector<U> v(t.values().begin(), t.values().end());
  return Tensor<U>::from(t.shape(), std::move(v));
}

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                  std::function<void(Node<T>&)> bwd) {
  Tensor<T> out = Tensor<T>::from(std::move(shape), std::move(value));
  if (grad_enabled()) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      auto n = out.node();
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (const auto& in : inputs) n->parents.push_back(in.node());
      n->backward_fn = std::move(bwd);
    }
  }
  return out;
}

template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    fail_invalid(op, ": shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  std::vector<T> v(a.numel());
  const auto &av = a.values(), &bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] + bv[i];
  auto an = a.node().get();
  auto bn = b.node().get();
  return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [an, bn](Node<T>& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  std::vector<T> v(a.numel());
  const auto &av = a.values(), &bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] - bv[i];
  auto an = a.node().get();
  auto bn = b.node().get();
  return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [an, bn](Node<T>& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  std::vector<T> v(a.numel());
  const auto &av = a.values(), &bv = b.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * bv[i];
  auto an = a.node().get();
  auto bn = b.node().get();
  return detail::make_op<T>(a.shape(), std::move(v), {a, b}, [an, bn](Node<T>& n) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (size_t i = 0; i < v.size(); ++i) v[i] = av[i] * s;
  auto an = a.node().get();
  return detail::make_op<T>(a.shape(), std::move(v), {a}, [an, s](Node<T>& n) {
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * s;
  });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  std::vector<T> v(a.numel());
  const auto& av = a.values();
  for (size_t i = 0; i < v.size(); ++i) {
    T sig = T(1) / (T(1) + std::exp(-av[i]));
    v[i] = av[i] * sig;
  }
  auto an = a.node().get();
  return detail::make_op<T>(a.shape(), std::move(v), {a}, [an](Node<T>& n) {
    an->ensure_grad();
    for (size_t i = 0; i < n.grad.size(); ++i) {
      T x = an->value[i];
      T sig = T(1) / (T(1) + std::exp(-x));
      an->grad[i] += n.grad[i] * sig * (T(1) + x * (T(1) - sig));
    }
  });
}

/// x[B,C,H,W] + e broadcast over spatial positions. e is [C] or [B,C].
template <typename T>
Tensor<T> add_channel_bias(const Tensor<T>& x, const Tensor<T>& e) {
  if (x.rank() != 4) fail_invalid("add_channel_bias: input must be 4-D, got ", shape_str(x.shape()));
  int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  bool per_batch;
  if (e.shape() == Shape{c})
    per_batch = false;
  else if (e.shape() == Shape{b, c})
    per_batch = true;
  else
    fail_invalid("add_channel_bias: bias shape ", shape_str(e.shape()), " incompatible with input ",
                 shape_str(x.shape()));
  std::vector<T> v(x.numel());
  const auto &xv = x.values(), &ev = e.values();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci) {
      T bias = ev[per_batch ? bi * c + ci : ci];
      const T* src = xv.data() + (bi * c + ci) * hw;
      T* dst = v.data() + (bi * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] + bias;
    }
  auto xn = x.node().get();
  auto en = e.node().get();
  return detail::make_op<T>(x.shape(), std::move(v), {x, e}, [xn, en, b, c, hw, per_batch](Node<T>& n) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (size_t i = 0; i < n.grad.size(); ++i) xn->grad[i] += n.grad[i];
    }
    if (en->requires_grad) {
      en->ensure_grad();
      for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 0; ci < c; ++ci) {
          const T* g = n.grad.data() + (bi * c + ci) * hw;
          T acc = 0;
          for (int64_t i = 0; i < hw; ++i) acc += g[i];
          en->grad[per_batch ? bi * c + ci : ci] += acc;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.values()) acc += v;
  auto an = a.node().get();
  return detail::make_op<T>({}, {acc}, {a}, [an](Node<T>& n) {
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  T inv = T(1) / T(a.numel());
  T acc = 0;
  for (T v : a.values()) acc += v;
  acc *= inv;
  auto an = a.node().get();
  return detail::make_op<T>({}, {acc}, {a}, [an, inv](Node<T>& n) {
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0] * inv;
  });
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("l1_loss", a, b);
  T inv = T(1) / T(a.numel());
  T acc = 0;
  const auto &av = a.values(), &bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) acc += std::abs(av[i] - bv[i]);
  acc *= inv;
  auto an = a.node().get();
  auto bn = b.node().get();
  return detail::make_op<T>({}, {acc}, {a, b}, [an, bn, inv](Node<T>& n) {
    for (size_t i = 0; i < an->value.size(); ++i) {
      T d = an->value[i] - bn->value[i];
      T s = (d > 0) ? T(1) : (d < 0 ? T(-1) : T(0));
      if (an->requires_grad) {
        an->ensure_grad();
        an->grad[i] += n.grad[0] * inv * s;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad[i] -= n.grad[0] * inv * s;
      }
    }
  });
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mse_loss", a, b);
  T inv = T(1) / T(a.numel());
  T acc = 0;
  const auto &av = a.values(), &bv = b.values();
  for (size_t i = 0; i < av.size(); ++i) {
    T d = av[i] - bv[i];
    acc += d * d;
  }
  acc *= inv;
  auto an = a.node().get();
  auto bn = b.node().get();
  return detail::make_op<T>({}, {acc}, {a, b}, [an, bn, inv](Node<T>& n) {
    for (size_t i = 0; i < an->value.size(); ++i) {
      T d = an->value[i] - bn->value[i];
      if (an->requires_grad) {
        an->ensure_grad();
        an->grad[i] += n.grad[0] * inv * T(2) * d;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        bn->grad[i] -= n.grad[0] * inv * T(2) * d;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Layout ops

/// PyTorch-convention sub-pixel rearrangement:
/// out(b, c, r*h + i, r*w + j) = in(b, c*r^2 + i*r + j, h, w).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int64_t r) {
  if (x.rank() != 4) fail_invalid("pixel_shuffle: input must be 4-D");
  if (r < 1) fail_invalid("pixel_shuffle: factor must be positive");
  int64_t b = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c_in % (r * r) != 0)
    fail_invalid("pixel_shuffle: channel count ", c_in, " not divisible by r^2=", r * r);
  int64_t c = c_in / (r * r);
  Shape out_shape{b, c, h * r, w * r};
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  auto fwd = [&](std::vector<T>& dst, const std::vector<T>& src) {
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < r; ++j) {
            const T* s = src.data() + (((bi * c_in) + ci * r * r + i * r + j) * h) * w;
            for (int64_t hi = 0; hi < h; ++hi) {
              T* d = dst.data() + ((bi * c + ci) * h * r + hi * r + i) * (w * r) + j;
              for (int64_t wi = 0; wi < w; ++wi) d[wi * r] = s[hi * w + wi];
            }
          }
  };
  fwd(v, xv);
  auto xn = x.node().get();
  return detail::make_op<T>(out_shape, std::move(v), {x}, [xn, b, c, c_in, h, w, r](Node<T>& n) {
    xn->ensure_grad();
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < r; ++i)
          for (int64_t j = 0; j < r; ++j) {
            T* s = xn->grad.data() + (((bi * c_in) + ci * r * r + i * r + j) * h) * w;
            for (int64_t hi = 0; hi < h; ++hi) {
              const T* d = n.grad.data() + ((bi * c + ci) * h * r + hi * r + i) * (w * r) + j;
              for (int64_t wi = 0; wi < w; ++wi) s[hi * w + wi] += d[wi * r];
            }
          }
  });
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int64_t r) {
  if (x.rank() != 4) fail_invalid("pixel_unshuffle: input must be 4-D");
  if (r < 1) fail_invalid("pixel_unshuffle: factor must be positive");
  int64_t b = x.dim(0), c = x.dim(1), hr = x.dim(2), wr = x.dim(3);
  if (hr % r != 0 || wr % r != 0)
    fail_invalid("pixel_unshuffle: spatial extents ", hr, "x", wr, " not divisible by r=", r);
  int64_t h = hr / r, w = wr / r, c_out = c * r * r;
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < r; ++j) {
          T* d = v.data() + ((bi * c_out) + ci * r * r + i * r + j) * h * w;
          for (int64_t hi = 0; hi < h; ++hi) {
            const T* s = xv.data() + ((bi * c + ci) * hr + hi * r + i) * wr + j;
            for (int64_t wi = 0; wi < w; ++wi) d[hi * w + wi] = s[wi * r];
          }
        }
  auto xn = x.node().get();
  return detail::make_op<T>({b, c_out, h, w}, std::move(v), {x},
                            [xn, b, c, c_out, h, w, hr, wr, r](Node<T>& n) {
                              xn->ensure_grad();
                              for (int64_t bi = 0; bi < b; ++bi)
                                for (int64_t ci = 0; ci < c; ++ci)
                                  for (int64_t i = 0; i < r; ++i)
                                    for (int64_t j = 0; j < r; ++j) {
                                      const T* d = n.grad.data() + ((bi * c_out) + ci * r * r + i * r + j) * h * w;
                                      for (int64_t hi = 0; hi < h; ++hi) {
                                        T* s = xn->grad.data() + ((bi * c + ci) * hr + hi * r + i) * wr + j;
                                        for (int64_t wi = 0; wi < w; ++wi) s[wi * r] += d[hi * w + wi];
                                      }
                                    }
                            });
}

enum class Axis1d { height, width };

/// One-axis variant: out along width is
/// out(b, c, h, r*w + j) = in(b, c*r + j, h, w); height is symmetric.
template <typename T>
Tensor<T> pixel_shuffle_1d(const Tensor<T>& x, int64_t r, Axis1d axis) {
  if (x.rank() != 4) fail_invalid("pixel_shuffle_1d: input must be 4-D");
  if (r < 1) fail_invalid("pixel_shuffle_1d: factor must be positive");
  int64_t b = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c_in % r != 0) fail_invalid("pixel_shuffle_1d: channel count ", c_in, " not divisible by r=", r);
  int64_t c = c_in / r;
  bool on_w = (axis == Axis1d::width);
  Shape out_shape{b, c, on_w ? h : h * r, on_w ? w * r : w};
  std::vector<T> v(shape_numel(out_shape));
  const auto& xv = x.values();
  int64_t oh = out_shape[2], ow = out_shape[3];
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t j = 0; j < r; ++j) {
        const T* s = xv.data() + ((bi * c_in) + ci * r + j) * h * w;
        for (int64_t hi = 0; hi < h; ++hi)
          for (int64_t wi = 0; wi < w; ++wi) {
            int64_t yo = on_w ? hi : hi * r + j;
            int64_t xo = on_w ? wi * r + j : wi;
            v[((bi * c + ci) * oh + yo) * ow + xo] = s[hi * w + wi];
          }
      }
  auto xn = x.node().get();
  return detail::make_op<T>(out_shape, std::move(v), {x},
                            [xn, b, c, c_in, h, w, r, oh, ow, on_w](Node<T>& n) {
                              xn->ensure_grad();
                              for (int64_t bi = 0; bi < b; ++bi)
                                for (int64_t ci = 0; ci < c; ++ci)
                                  for (int64_t j = 0; j < r; ++j) {
                                    T* s = xn->grad.data() + ((bi * c_in) + ci * r + j) * h * w;
                                    for (int64_t hi = 0; hi < h; ++hi)
                                      for (int64_t wi = 0; wi < w; ++wi) {
                                        int64_t yo = on_w ? hi : hi * r + j;
                                        int64_t xo = on_w ? wi * r + j : wi;
                                        s[hi * w + wi] += n.grad[((bi * c + ci) * oh + yo) * ow + xo];
                                      }
                                  }
                            });
}

template <typename T>
Tensor<T> pixel_unshuffle_1d(const Tensor<T>& x, int64_t r, Axis1d axis) {
  if (x.rank() != 4) fail_invalid("pixel_unshuffle_1d: input must be 4-D");
  if (r < 1) fail_invalid("pixel_unshuffle_1d: factor must be positive");
  int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  bool on_w = (axis == Axis1d::width);
  if ((on_w ? w : h) % r != 0)
    fail_invalid("pixel_unshuffle_1d: axis extent not divisible by r=", r);
  int64_t ih = on_w ? h : h / r, iw = on_w ? w / r : w, c_out = c * r;
  Shape out_shape{b, c_out, ih, iw};
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t ci = 0; ci < c; ++ci)
      for (int64_t j = 0; j < r; ++j) {
        T* d = v.data() + ((bi * c_out) + ci * r + j) * ih * iw;
        for (int64_t hi = 0; hi < ih; ++hi)
          for (int64_t wi = 0; wi < iw; ++wi) {
            int64_t ys = on_w ? hi : hi * r + j;
            int64_t xs = on_w ? wi * r + j : wi;
            d[hi * iw + wi] = xv[((bi * c + ci) * h + ys) * w + xs];
          }
      }
  auto xn = x.node().get();
  return detail::make_op<T>(out_shape, std::move(v), {x},
                            [xn, b, c, c_out, h, w, ih, iw, r, on_w](Node<T>& n) {
                              xn->ensure_grad();
                              for (int64_t bi = 0; bi < b; ++bi)
                                for (int64_t ci = 0; ci < c; ++ci)
                                  for (int64_t j = 0; j < r; ++j) {
                                    const T* d = n.grad.data() + ((bi * c_out) + ci * r + j) * ih * iw;
                                    for (int64_t hi = 0; hi < ih; ++hi)
                                      for (int64_t wi = 0; wi < iw; ++wi) {
                                        int64_t ys = on_w ? hi : hi * r + j;
                                        int64_t xs = on_w ? wi * r + j : wi;
                                        xn->grad[((bi * c + ci) * h + ys) * w + xs] += d[hi * iw + wi];
                                      }
                                  }
                            });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int64_t axis) {
  if (xs.empty()) fail_invalid("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis < 0 || axis >= int64_t(s0.size())) fail_invalid("concat: axis ", axis, " out of range");
  Shape out_shape = s0;
  int64_t axis_total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    if (s.size() != s0.size()) fail_invalid("concat: rank mismatch");
    for (size_t d = 0; d < s.size(); ++d)
      if (int64_t(d) != axis && s[d] != s0[d])
        fail_invalid("concat: shape mismatch at dim ", d, ": ", shape_str(s), " vs ", shape_str(s0));
    axis_total += s[axis];
  }
  out_shape[axis] = axis_total;
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  std::vector<T> v(shape_numel(out_shape));
  int64_t out_stride = axis_total * inner;
  int64_t offset = 0;
  for (const auto& x : xs) {
    int64_t ax = x.dim(axis), blk = ax * inner;
    const auto& xv = x.values();
    for (int64_t o = 0; o < outer; ++o)
      std::memcpy(v.data() + o * out_stride + offset, xv.data() + o * blk, size_t(blk) * sizeof(T));
    offset += blk;
  }
  std::vector<Node<T>*> nodes;
  std::vector<int64_t> blks;
  for (const auto& x : xs) {
    nodes.push_back(x.node().get());
    blks.push_back(x.dim(axis) * inner);
  }
  return detail::make_op<T>(out_shape, std::move(v), xs,
                            [nodes, blks, outer, out_stride](Node<T>& n) {
                              int64_t offset = 0;
                              for (size_t i = 0; i < nodes.size(); ++i) {
                                if (nodes[i]->requires_grad) {
                                  nodes[i]->ensure_grad();
                                  for (int64_t o = 0; o < outer; ++o) {
                                    const T* g = n.grad.data() + o * out_stride + offset;
                                    T* dst = nodes[i]->grad.data() + o * blks[i];
                                    for (int64_t j = 0; j < blks[i]; ++j) dst[j] += g[j];
                                  }
                                }
                                offset += blks[i];
                              }
                            });
}

/// MacPI [B,C,A*H,A*W] -> per-view batch [B*A*A,C,H,W], where MacPI pixel
/// (au + A*h, av + A*w) belongs to view (au, av).
template <typename T>
Tensor<T> macpi_to_views(const Tensor<T>& x, int64_t a) {
  if (x.rank() != 4) fail_invalid("macpi_to_views: input must be 4-D");
  int64_t b = x.dim(0), c = x.dim(1), ah = x.dim(2), aw = x.dim(3);
  if (ah % a != 0 || aw % a != 0)
    fail_invalid("macpi_to_views: extents ", ah, "x", aw, " not divisible by A=", a);
  int64_t h = ah / a, w = aw / a;
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t au = 0; au < a; ++au)
      for (int64_t av = 0; av < a; ++av)
        for (int64_t ci = 0; ci < c; ++ci) {
          T* d = v.data() + ((((bi * a + au) * a + av) * c + ci) * h) * w;
          const T* s = xv.data() + ((bi * c + ci) * ah + au) * aw + av;
          for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t wi = 0; wi < w; ++wi) d[hi * w + wi] = s[hi * a * aw + wi * a];
        }
  auto xn = x.node().get();
  return detail::make_op<T>({b * a * a, c, h, w}, std::move(v), {x},
                            [xn, b, c, a, h, w, ah, aw](Node<T>& n) {
                              xn->ensure_grad();
                              for (int64_t bi = 0; bi < b; ++bi)
                                for (int64_t au = 0; au < a; ++au)
                                  for (int64_t av = 0; av < a; ++av)
                                    for (int64_t ci = 0; ci < c; ++ci) {
                                      const T* d = n.grad.data() + ((((bi * a + au) * a + av) * c + ci) * h) * w;
                                      T* s = xn->grad.data() + ((bi * c + ci) * ah + au) * aw + av;
                                      for (int64_t hi = 0; hi < h; ++hi)
                                        for (int64_t wi = 0; wi < w; ++wi) s[hi * a * aw + wi * a] += d[hi * w + wi];
                                    }
                            });
}

template <typename T>
Tensor<T> views_to_macpi(const Tensor<T>& x, int64_t a) {
  if (x.rank() != 4) fail_invalid("views_to_macpi: input must be 4-D");
  int64_t ba = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (ba % (a * a) != 0) fail_invalid("views_to_macpi: batch ", ba, " not divisible by A^2=", a * a);
  int64_t b = ba / (a * a), ah = h * a, aw = w * a;
  std::vector<T> v(x.numel());
  const auto& xv = x.values();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t au = 0; au < a; ++au)
      for (int64_t av = 0; av < a; ++av)
        for (int64_t ci = 0; ci < c; ++ci) {
          const T* s = xv.data() + ((((bi * a + au) * a + av) * c + ci) * h) * w;
          T* d = v.data() + ((bi * c + ci) * ah + au) * aw + av;
          for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t wi = 0; wi < w; ++wi) d[hi * a * aw + wi * a] = s[hi * w + wi];
        }
  auto xn = x.node().get();
  return detail::make_op<T>({b, c, ah, aw}, std::move(v), {x},
                            [xn, b, c, a, h, w, ah, aw](Node<T>& n) {
                              xn->ensure_grad();
                              for (int64_t bi = 0; bi < b; ++bi)
                                for (int64_t au = 0; au < a; ++au)
                                  for (int64_t av = 0; av < a; ++av)
                                    for (int64_t ci = 0; ci < c; ++ci) {
                                      T* s = xn->grad.data() + ((((bi * a + au) * a + av) * c + ci) * h) * w;
                                      const T* d = n.grad.data() + ((bi * c + ci) * ah + au) * aw + av;
                                      for (int64_t hi = 0; hi < h; ++hi)
                                        for (int64_t wi = 0; wi < w; ++wi) s[hi * w + wi] += d[hi * a * aw + wi * a];
                                    }
                            });
}

// ---------------------------------------------------------------------------
// conv2d / linear / group_norm / bilinear  (implementations in tensor_impl.hpp)

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const ConvSpec& spec);

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int64_t groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int64_t out_h, int64_t out_w);

/// Reverse-mode sweep from a scalar loss. Populates .grad on every
/// requires_grad tensor reachable from the loss, then releases the tape
/// (parent links and backward closures) of all visited nodes.
template <typename T>
void backward(const Tensor<T>& loss);

}  // namespace lfsr::ad

#include "core/tensor_impl.hpp"
