#include "core/metrics.hpp"

#include <cmath>

namespace lfsr::metrics {

double mse(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.empty())
    fail_invalid("mse: size mismatch (", x.size(), " vs ", y.size(), ")");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double d = x[i] - y[i];
    acc += d * d;
  }
  return acc / double(x.size());
}

double psnr_from_mse(double mse_value) {
  if (mse_value <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse_value));
}

double psnr(const std::vector<double>& x, const std::vector<double>& y) {
  return psnr_from_mse(mse(x, y));
}

namespace {

std::vector<double> gaussian_window(int64_t size, double sigma) {
  std::vector<double> w(size_t(size) * size);
  int64_t c = size / 2;
  double sum = 0.0;
  for (int64_t i = 0; i < size; ++i)
    for (int64_t j = 0; j < size; ++j) {
      double d2 = double((i - c) * (i - c) + (j - c) * (j - c));
      double v = std::exp(-d2 / (2.0 * sigma * sigma));
      w[size_t(i * size + j)] = v;
      sum += v;
    }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

double ssim(const std::vector<double>& x, const std::vector<double>& y, int64_t h, int64_t w) {
  constexpr int64_t win = 11;
  constexpr double sigma = 1.5;
  constexpr double c1 = 0.01 * 0.01;  // (K1*L)^2, L = 1
  constexpr double c2 = 0.03 * 0.03;
  if (int64_t(x.size()) != h * w || x.size() != y.size())
    fail_invalid("ssim: size mismatch for ", h, "x", w);
  if (h < win || w < win)
    fail_invalid("ssim: image ", h, "x", w, " smaller than the ", win, "x", win, " window");

  static const std::vector<double> kw = gaussian_window(win, sigma);
  double total = 0.0;
  int64_t count = 0;
  for (int64_t oy = 0; oy + win <= h; ++oy) {
    for (int64_t ox = 0; ox + win <= w; ++ox) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int64_t i = 0; i < win; ++i)
        for (int64_t j = 0; j < win; ++j) {
          double g = kw[size_t(i * win + j)];
          double a = x[size_t((oy + i) * w + ox + j)];
          double b = y[size_t((oy + i) * w + ox + j)];
          mx += g * a;
          my += g * b;
          mxx += g * a * a;
          myy += g * b * b;
          mxy += g * a * b;
        }
      double vx = mxx - mx * mx;
      double vy = myy - my * my;
      double cov = mxy - mx * my;
      double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
      double den = (mx * mx + my * my + c1) * (vx + vy + c2);
      total += num / den;
      ++count;
    }
  }
  return total / double(count);
}

std::vector<double> per_pixel_std(const std::vector<std::vector<double>>& samples) {
  if (samples.size() < 2) fail_invalid("per_pixel_std: need at least 2 samples, got ", samples.size());
  size_t n = samples[0].size();
  for (const auto& s : samples)
    if (s.size() != n) fail_invalid("per_pixel_std: sample size mismatch");
  double k = double(samples.size());
  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) {
    double mean = 0.0;
    for (const auto& s : samples) mean += s[i];
    mean /= k;
    double var = 0.0;
    for (const auto& s : samples) {
      double d = s[i] - mean;
      var += d * d;
    }
    out[i] = std::sqrt(var / (k - 1.0));
  }
  return out;
}

double aggregate(const std::vector<std::vector<double>>& per_sai_scores_by_scene) {
  if (per_sai_scores_by_scene.empty()) fail_invalid("aggregate: no scenes");
  double scene_sum = 0.0;
  for (const auto& scene : per_sai_scores_by_scene) {
    if (scene.empty()) fail_invalid("aggregate: scene with no SAI scores");
    double s = 0.0;
    for (double v : scene) s += v;
    scene_sum += s / double(scene.size());
  }
  return scene_sum / double(per_sai_scores_by_scene.size());
}

}  // namespace lfsr::metrics
