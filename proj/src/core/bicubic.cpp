#include "core/bicubic.hpp"

#include <algorithm>
#include <cmath>

namespace lfsr::lf {

double keys_cubic(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return (((x - 5.0) * x + 8.0) * x - 4.0) * a;
  return 0.0;
}

namespace {

struct TapSet {
  int64_t first;                // index of the first tap (pre-clamp)
  std::vector<double> weights;  // normalized
};

// One output coordinate's source taps. Half-pixel mapping:
// src = (dst + 0.5) * (in/out) - 0.5.
std::vector<TapSet> make_taps(int64_t in, int64_t out, bool antialias) {
  double ratio = double(in) / double(out);
  double support = (antialias && ratio > 1.0) ? ratio : 1.0;
  double radius = 2.0 * support;
  std::vector<TapSet> taps(out);
  for (int64_t o = 0; o < out; ++o) {
    double src = (double(o) + 0.5) * ratio - 0.5;
    int64_t lo = int64_t(std::ceil(src - radius));
    int64_t hi = int64_t(std::floor(src + radius));
    TapSet t;
    t.first = lo;
    t.weights.resize(size_t(hi - lo + 1));
    double sum = 0.0;
    for (int64_t i = lo; i <= hi; ++i) {
      double w = keys_cubic((double(i) - src) / support);
      t.weights[size_t(i - lo)] = w;
      sum += w;
    }
    if (sum != 0.0)
      for (auto& w : t.weights) w /= sum;
    taps[o] = std::move(t);
  }
  return taps;
}

template <typename T>
std::vector<T> resize_impl(const std::vector<T>& img, int64_t in_h, int64_t in_w, int64_t out_h,
                           int64_t out_w, bool antialias) {
  if (in_h < 1 || in_w < 1) fail_invalid("bicubic_resize: empty input");
  if (out_h < 1 || out_w < 1) fail_invalid("bicubic_resize: output extents must be positive");
  if (int64_t(img.size()) != in_h * in_w)
    fail_invalid("bicubic_resize: data length ", img.size(), " != ", in_h, "x", in_w);
  if (in_h == out_h && in_w == out_w) return img;

  auto clampi = [](int64_t i, int64_t n) { return std::min(n - 1, std::max<int64_t>(0, i)); };

  // Horizontal pass, then vertical; accumulation in double throughout.
  std::vector<double> tmp(size_t(in_h) * out_w);
  auto tx = make_taps(in_w, out_w, antialias);
  for (int64_t y = 0; y < in_h; ++y) {
    const T* row = img.data() + y * in_w;
    for (int64_t x = 0; x < out_w; ++x) {
      const TapSet& t = tx[x];
      double acc = 0.0;
      for (size_t k = 0; k < t.weights.size(); ++k)
        acc += t.weights[k] * double(row[clampi(t.first + int64_t(k), in_w)]);
      tmp[size_t(y) * out_w + x] = acc;
    }
  }
  std::vector<T> out(size_t(out_h) * out_w);
  auto ty = make_taps(in_h, out_h, antialias);
  for (int64_t y = 0; y < out_h; ++y) {
    const TapSet& t = ty[y];
    for (int64_t x = 0; x < out_w; ++x) {
      double acc = 0.0;
      for (size_t k = 0; k < t.weights.size(); ++k)
        acc += t.weights[k] * tmp[size_t(clampi(t.first + int64_t(k), in_h)) * out_w + x];
      out[size_t(y) * out_w + x] = T(acc);
    }
  }
  return out;
}

}  // namespace

std::vector<double> bicubic_resize(const std::vector<double>& img, int64_t in_h, int64_t in_w,
                                   int64_t out_h, int64_t out_w, bool antialias) {
  return resize_impl(img, in_h, in_w, out_h, out_w, antialias);
}

std::vector<float> bicubic_resize(const std::vector<float>& img, int64_t in_h, int64_t in_w,
                                  int64_t out_h, int64_t out_w, bool antialias) {
  return resize_impl(img, in_h, in_w, out_h, out_w, antialias);
}

}  // namespace lfsr::lf
