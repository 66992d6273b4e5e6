#pragma once

// Implementation half of tensor.hpp: the GEMM-backed and reduction-heavy ops
// plus the backward sweep. Included at the end of tensor.hpp.

namespace lfsr::ad {

namespace detail {

// Scatters input patches into a [K x N] column matrix, K = Cin*kh*kw,
// N = outH*outW. Zero padding.
template <typename T>
void im2col(const T* x, int64_t c_in, int64_t h, int64_t w, const ConvSpec& sp, int64_t out_h,
            int64_t out_w, int64_t n0, int64_t n1, T* col, int64_t ldcol) {
  for (int64_t ci = 0; ci < c_in; ++ci)
    for (int64_t ki = 0; ki < sp.kernel_h; ++ki)
      for (int64_t kj = 0; kj < sp.kernel_w; ++kj) {
        int64_t krow = (ci * sp.kernel_h + ki) * sp.kernel_w + kj;
        T* dst = col + krow * ldcol;
        for (int64_t n = n0; n < n1; ++n) {
          int64_t oy = n / out_w, ox = n % out_w;
          int64_t iy = oy * sp.stride_h + ki * sp.dilation_h - sp.pad_h;
          int64_t ix = ox * sp.stride_w + kj * sp.dilation_w - sp.pad_w;
          dst[n - n0] =
              (iy < 0 || iy >= h || ix < 0 || ix >= w) ? T(0) : x[(ci * h + iy) * w + ix];
        }
      }
}

// Transpose of im2col: accumulates column-matrix gradients back into the
// input gradient. Overlapping windows make this a scatter-add; callers keep
// it single-threaded per sample.
template <typename T>
void col2im_add(const T* col, int64_t c_in, int64_t h, int64_t w, const ConvSpec& sp, int64_t out_h,
                int64_t out_w, T* dx) {
  int64_t n_total = out_h * out_w;
  for (int64_t ci = 0; ci < c_in; ++ci)
    for (int64_t ki = 0; ki < sp.kernel_h; ++ki)
      for (int64_t kj = 0; kj < sp.kernel_w; ++kj) {
        int64_t krow = (ci * sp.kernel_h + ki) * sp.kernel_w + kj;
        const T* src = col + krow * n_total;
        for (int64_t n = 0; n < n_total; ++n) {
          int64_t oy = n / out_w, ox = n % out_w;
          int64_t iy = oy * sp.stride_h + ki * sp.dilation_h - sp.pad_h;
          int64_t ix = ox * sp.stride_w + kj * sp.dilation_w - sp.pad_w;
          if (iy >= 0 && iy < h && ix >= 0 && ix < w) dx[(ci * h + iy) * w + ix] += src[n];
        }
      }
}

}  // namespace detail

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, const ConvSpec& spec) {
  spec.validate();
  if (x.rank() != 4) fail_invalid("conv2d: input must be [B,Cin,H,W], got ", shape_str(x.shape()));
  if (w.rank() != 4) fail_invalid("conv2d: weight must be [Cout,Cin,kh,kw], got ", shape_str(w.shape()));
  int64_t b = x.dim(0), c_in = x.dim(1), h = x.dim(2), ww = x.dim(3);
  if (c_in != spec.in_channels)
    fail_invalid("conv2d: input channel dim is ", c_in, ", spec expects ", spec.in_channels);
  if (w.dim(0) != spec.out_channels || w.dim(1) != spec.in_channels || w.dim(2) != spec.kernel_h ||
      w.dim(3) != spec.kernel_w)
    fail_invalid("conv2d: weight shape ", shape_str(w.shape()), " does not match spec [",
                 spec.out_channels, ",", spec.in_channels, ",", spec.kernel_h, ",", spec.kernel_w, "]");
  if (bias.shape() != Shape{spec.out_channels})
    fail_invalid("conv2d: bias shape ", shape_str(bias.shape()), " must be [", spec.out_channels, "]");
  int64_t out_h = spec.out_h(h), out_w = spec.out_w(ww);
  if (out_h < 1 || out_w < 1)
    fail_invalid("conv2d: output extent ", out_h, "x", out_w, " invalid for input ", h, "x", ww);

  int64_t c_out = spec.out_channels;
  int64_t k = c_in * spec.kernel_h * spec.kernel_w;
  int64_t n_total = out_h * out_w;
  std::vector<T> y(size_t(b) * c_out * n_total);
  const auto& xv = x.values();
  const auto& wv = w.values();
  const auto& bv = bias.values();

  // Tasks split over (sample, output-pixel block); each writes a disjoint
  // slice of y, so the result is thread-count independent.
  int64_t blk = std::max<int64_t>(2048, (n_total + 3) / 4);
  int64_t nblk = (n_total + blk - 1) / blk;
  parallel_for(b * nblk, [&](int64_t task) {
    int64_t bi = task / nblk;
    int64_t n0 = (task % nblk) * blk, n1 = std::min(n_total, n0 + blk);
    std::vector<T> col(size_t(k) * (n1 - n0));
    detail::im2col(xv.data() + bi * c_in * h * ww, c_in, h, ww, spec, out_h, out_w, n0, n1, col.data(),
                   n1 - n0);
    T* yb = y.data() + bi * c_out * n_total + n0;
    gemm(false, false, c_out, n1 - n0, k, T(1), wv.data(), k, col.data(), n1 - n0, T(0), yb, n_total);
    for (int64_t co = 0; co < c_out; ++co) {
      T bval = bv[co];
      T* row = y.data() + (bi * c_out + co) * n_total;
      for (int64_t n = n0; n < n1; ++n) row[n] += bval;
    }
  });

  auto xn = x.node().get();
  auto wn = w.node().get();
  auto bn = bias.node().get();
  return detail::make_op<T>(
      {b, c_out, out_h, out_w}, std::move(y), {x, w, bias},
      [xn, wn, bn, spec, b, c_in, c_out, h, ww, out_h, out_w, k, n_total](Node<T>& node) {
        const T* dy = node.grad.data();
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t co = 0; co < c_out; ++co) {
              const T* row = dy + (bi * c_out + co) * n_total;
              T acc = 0;
              for (int64_t n = 0; n < n_total; ++n) acc += row[n];
              bn->grad[co] += acc;
            }
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          // Per-sample partials, reduced in sample order.
          std::vector<std::vector<T>> partial(b);
          parallel_for(b, [&](int64_t bi) {
            std::vector<T> col(size_t(k) * n_total);
            detail::im2col(xn->value.data() + bi * c_in * h * ww, c_in, h, ww, spec, out_h, out_w, 0,
                           n_total, col.data(), n_total);
            partial[bi].assign(size_t(c_out) * k, T(0));
            gemm(false, true, c_out, k, n_total, T(1), dy + bi * c_out * n_total, n_total, col.data(),
                 n_total, T(0), partial[bi].data(), k);
          });
          for (int64_t bi = 0; bi < b; ++bi)
            for (size_t i = 0; i < partial[bi].size(); ++i) wn->grad[i] += partial[bi][i];
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          parallel_for(b, [&](int64_t bi) {
            std::vector<T> dcol(size_t(k) * n_total);
            gemm(true, false, k, n_total, c_out, T(1), wn->value.data(), k, dy + bi * c_out * n_total,
                 n_total, T(0), dcol.data(), n_total);
            detail::col2im_add(dcol.data(), c_in, h, ww, spec, out_h, out_w,
                               xn->grad.data() + bi * c_in * h * ww);
          });
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.rank() != 2) fail_invalid("linear: input must be [B,K], got ", shape_str(x.shape()));
  if (w.rank() != 2) fail_invalid("linear: weight must be [M,K], got ", shape_str(w.shape()));
  int64_t b = x.dim(0), k = x.dim(1), m = w.dim(0);
  if (w.dim(1) != k) fail_invalid("linear: weight inner dim ", w.dim(1), " != input dim ", k);
  if (bias.shape() != Shape{m}) fail_invalid("linear: bias shape must be [", m, "]");
  std::vector<T> y(size_t(b) * m);
  gemm(false, true, b, m, k, T(1), x.values().data(), k, w.values().data(), k, T(0), y.data(), m);
  const auto& bv = bias.values();
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t mi = 0; mi < m; ++mi) y[bi * m + mi] += bv[mi];
  auto xn = x.node().get();
  auto wn = w.node().get();
  auto bn = bias.node().get();
  return detail::make_op<T>({b, m}, std::move(y), {x, w, bias}, [xn, wn, bn, b, k, m](Node<T>& n) {
    const T* dy = n.grad.data();
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t mi = 0; mi < m; ++mi) bn->grad[mi] += dy[bi * m + mi];
    }
    if (wn->requires_grad) {
      wn->ensure_grad();
      gemm(true, false, m, k, b, T(1), dy, m, xn->value.data(), k, T(1), wn->grad.data(), k);
    }
    if (xn->requires_grad) {
      xn->ensure_grad();
      gemm(false, false, b, k, m, T(1), dy, m, wn->value.data(), k, T(1), xn->grad.data(), k);
    }
  });
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, int64_t groups, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps) {
  if (x.rank() != 4) fail_invalid("group_norm: input must be 4-D, got ", shape_str(x.shape()));
  int64_t b = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups < 1 || c % groups != 0)
    fail_invalid("group_norm: channel count ", c, " not divisible by groups=", groups);
  if (gamma.shape() != Shape{c} || beta.shape() != Shape{c})
    fail_invalid("group_norm: scale/shift must be [", c, "]");
  int64_t cg = c / groups, glen = cg * hw;

  std::vector<T> y(x.numel());
  auto stats = std::make_shared<std::vector<double>>(size_t(b) * groups * 2);  // mean, rstd pairs
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  parallel_for(b * groups, [&](int64_t t) {
    int64_t bi = t / groups, gi = t % groups;
    const T* src = xv.data() + (bi * c + gi * cg) * hw;
    double mean = 0;
    for (int64_t i = 0; i < glen; ++i) mean += double(src[i]);
    mean /= double(glen);
    double var = 0;
    for (int64_t i = 0; i < glen; ++i) {
      double d = double(src[i]) - mean;
      var += d * d;
    }
    var /= double(glen);
    double rstd = 1.0 / std::sqrt(var + double(eps));
    (*stats)[t * 2] = mean;
    (*stats)[t * 2 + 1] = rstd;
    T* dst = y.data() + (bi * c + gi * cg) * hw;
    for (int64_t ci = 0; ci < cg; ++ci) {
      T g = gv[gi * cg + ci], be = bv[gi * cg + ci];
      for (int64_t i = 0; i < hw; ++i) {
        double xh = (double(src[ci * hw + i]) - mean) * rstd;
        dst[ci * hw + i] = T(xh) * g + be;
      }
    }
  });

  auto xn = x.node().get();
  auto gn = gamma.node().get();
  auto bn = beta.node().get();
  return detail::make_op<T>(
      x.shape(), std::move(y), {x, gamma, beta}, [xn, gn, bn, stats, b, c, cg, hw, groups](Node<T>& n) {
        int64_t glen = cg * hw;
        if (gn->requires_grad || bn->requires_grad) {
          gn->ensure_grad();
          bn->ensure_grad();
          for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t gi = 0; gi < groups; ++gi) {
              double mean = (*stats)[(bi * groups + gi) * 2], rstd = (*stats)[(bi * groups + gi) * 2 + 1];
              for (int64_t ci = 0; ci < cg; ++ci) {
                const T* src = xn->value.data() + (bi * c + gi * cg + ci) * hw;
                const T* dy = n.grad.data() + (bi * c + gi * cg + ci) * hw;
                double dg = 0, db = 0;
                for (int64_t i = 0; i < hw; ++i) {
                  double xh = (double(src[i]) - mean) * rstd;
                  dg += double(dy[i]) * xh;
                  db += double(dy[i]);
                }
                gn->grad[gi * cg + ci] += T(dg);
                bn->grad[gi * cg + ci] += T(db);
              }
            }
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          parallel_for(b * groups, [&](int64_t t) {
            int64_t bi = t / groups, gi = t % groups;
            double mean = (*stats)[t * 2], rstd = (*stats)[t * 2 + 1];
            const T* src = xn->value.data() + (bi * c + gi * cg) * hw;
            const T* dy = n.grad.data() + (bi * c + gi * cg) * hw;
            double sum_dxh = 0, sum_dxh_xh = 0;
            for (int64_t ci = 0; ci < cg; ++ci) {
              double g = double(gn->value[gi * cg + ci]);
              for (int64_t i = 0; i < hw; ++i) {
                double xh = (double(src[ci * hw + i]) - mean) * rstd;
                double dxh = double(dy[ci * hw + i]) * g;
                sum_dxh += dxh;
                sum_dxh_xh += dxh * xh;
              }
            }
            double m1 = sum_dxh / double(glen), m2 = sum_dxh_xh / double(glen);
            T* dx = xn->grad.data() + (bi * c + gi * cg) * hw;
            for (int64_t ci = 0; ci < cg; ++ci) {
              double g = double(gn->value[gi * cg + ci]);
              for (int64_t i = 0; i < hw; ++i) {
                double xh = (double(src[ci * hw + i]) - mean) * rstd;
                double dxh = double(dy[ci * hw + i]) * g;
                dx[ci * hw + i] += T(rstd * (dxh - m1 - xh * m2));
              }
            }
          });
        }
      });
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  if (x.rank() != 4) fail_invalid("bilinear_upsample: input must be 4-D");
  if (out_h < 1 || out_w < 1) fail_invalid("bilinear_upsample: bad output extent");
  int64_t b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);

  // Half-pixel source mapping with clamped edges.
  struct Tap {
    int64_t i0, i1;
    double w0, w1;
  };
  auto make_taps = [](int64_t in, int64_t out) {
    std::vector<Tap> taps(out);
    double scale = double(in) / double(out);
    for (int64_t o = 0; o < out; ++o) {
      double src = (double(o) + 0.5) * scale - 0.5;
      double fl = std::floor(src);
      int64_t i0 = int64_t(fl);
      double f = src - fl;
      auto clamp = [&](int64_t i) { return std::min(in - 1, std::max<int64_t>(0, i)); };
      taps[o] = {clamp(i0), clamp(i0 + 1), 1.0 - f, f};
    }
    return taps;
  };
  auto ty = std::make_shared<std::vector<Tap>>(make_taps(h, out_h));
  auto tx = std::make_shared<std::vector<Tap>>(make_taps(w, out_w));

  std::vector<T> y(size_t(b) * c * out_h * out_w);
  const auto& xv = x.values();
  parallel_for(b * c, [&](int64_t p) {
    const T* src = xv.data() + p * h * w;
    T* dst = y.data() + p * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const Tap& a = (*ty)[oy];
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const Tap& bt = (*tx)[ox];
        double v = a.w0 * (bt.w0 * double(src[a.i0 * w + bt.i0]) + bt.w1 * double(src[a.i0 * w + bt.i1])) +
                   a.w1 * (bt.w0 * double(src[a.i1 * w + bt.i0]) + bt.w1 * double(src[a.i1 * w + bt.i1]));
        dst[oy * out_w + ox] = T(v);
      }
    }
  });
  auto xn = x.node().get();
  return detail::make_op<T>({b, c, out_h, out_w}, std::move(y), {x},
                            [xn, ty, tx, b, c, h, w, out_h, out_w](Node<T>& n) {
                              xn->ensure_grad();
                              parallel_for(b * c, [&](int64_t p) {
                                const T* dy = n.grad.data() + p * out_h * out_w;
                                T* dx = xn->grad.data() + p * h * w;
                                for (int64_t oy = 0; oy < out_h; ++oy) {
                                  const Tap& a = (*ty)[oy];
                                  for (int64_t ox = 0; ox < out_w; ++ox) {
                                    const Tap& bt = (*tx)[ox];
                                    double g = double(dy[oy * out_w + ox]);
                                    dx[a.i0 * w + bt.i0] += T(a.w0 * bt.w0 * g);
                                    dx[a.i0 * w + bt.i1] += T(a.w0 * bt.w1 * g);
                                    dx[a.i1 * w + bt.i0] += T(a.w1 * bt.w0 * g);
                                    dx[a.i1 * w + bt.i1] += T(a.w1 * bt.w1 * g);
                                  }
                                }
                              });
                            });
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined()) fail_invalid("backward: undefined tensor");
  if (loss.numel() != 1)
    fail_invalid("backward: loss must be scalar, got shape ", shape_str(loss.shape()));
  if (!loss.requires_grad()) fail_invalid("backward: loss does not require grad (empty tape)");

  // Iterative post-order DFS over the recorded tape.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* p = node->parents[idx++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad();
  loss.node()->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
  // Release the tape; leaf gradients stay until zero_grad.
  for (Node<T>* node : order) {
    node->backward_fn = nullptr;
    node->parents.clear();
    node->parents.shrink_to_fit();
  }
}

}  // namespace lfsr::ad
