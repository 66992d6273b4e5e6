#pragma once

#include <optional>
#include <vector>

#include "core/common.hpp"

namespace lfsr::metrics {

/// PSNR cap used when mse == 0 (peak is fixed at 1.0 internally).
inline constexpr double kPsnrCap = 99.0;

struct MetricRecord {
  double psnr = 0.0;
  double ssim = 0.0;
  double mse = 0.0;
  std::optional<double> per_pixel_std_mean;
};

double mse(const std::vector<double>& x, const std::vector<double>& y);

/// 10*log10(peak^2 / mse) with peak = 1.0; returns the 99 dB sentinel for a
/// perfect match.
double psnr(const std::vector<double>& x, const std::vector<double>& y);
double psnr_from_mse(double mse_value);

/// Standard single-scale SSIM: Gaussian window 11, sigma 1.5, K1=0.01,
/// K2=0.03, dynamic range 1.0, averaged over valid window positions only.
/// Both extents must be >= 11.
double ssim(const std::vector<double>& x, const std::vector<double>& y, int64_t h, int64_t w);

/// Per-pixel sample standard deviation (unbiased, K-1) across K >= 2 images.
std::vector<double> per_pixel_std(const std::vector<std::vector<double>>& samples);

/// The two-level aggregation protocol: mean over SAIs within each scene,
/// then mean over scenes.
double aggregate(const std::vector<std::vector<double>>& per_sai_scores_by_scene);

}  // namespace lfsr::metrics
