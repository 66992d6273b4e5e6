#pragma once

#include <vector>

#include "core/common.hpp"

namespace lfsr::lf {

/// Keys cubic kernel with a = -0.5. Support is |x| < 2; interpolating
/// (k(0)=1, k(n)=0 for integer n != 0) and a partition of unity on the
/// integer grid.
double keys_cubic(double x);

/// Separable bicubic resize with half-pixel coordinate mapping and clamped
/// edges. When downsampling with `antialias`, the kernel is stretched by the
/// scale ratio and the tap weights renormalized.
std::vector<double> bicubic_resize(const std::vector<double>& img, int64_t in_h, int64_t in_w,
                                   int64_t out_h, int64_t out_w, bool antialias);

std::vector<float> bicubic_resize(const std::vector<float>& img, int64_t in_h, int64_t in_w,
                                  int64_t out_h, int64_t out_w, bool antialias);

}  // namespace lfsr::lf
