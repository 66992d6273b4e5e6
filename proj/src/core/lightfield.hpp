#pragma once

#include <vector>

#include "core/common.hpp"

namespace lfsr::lf {

/// 4-D light field L(u,v,h,w): angular extents U,V, spatial extents H,W.
/// Values are normalized luminance in [0,1] after I/O. Storage is row-major
/// in (u,v,h,w) order.
struct LightField {
  int64_t U = 0, V = 0, H = 0, W = 0;
  std::vector<float> data;

  static LightField zeros(int64_t u, int64_t v, int64_t h, int64_t w) {
    LightField lf{u, v, h, w, {}};
    lf.data.assign(size_t(u * v * h * w), 0.f);
    return lf;
  }
  int64_t views() const { return U * V; }
  int64_t numel() const { return U * V * H * W; }
  bool square_angular() const { return U == V; }

  size_t index(int64_t u, int64_t v, int64_t h, int64_t w) const {
    return size_t(((u * V + v) * H + h) * W + w);
  }
  float at(int64_t u, int64_t v, int64_t h, int64_t w) const { return data[index(u, v, h, w)]; }
  float& at(int64_t u, int64_t v, int64_t h, int64_t w) { return data[index(u, v, h, w)]; }

  const float* view(int64_t u, int64_t v) const { return data.data() + size_t((u * V + v) * H * W); }
  float* view(int64_t u, int64_t v) { return data.data() + size_t((u * V + v) * H * W); }
};

/// Macro-pixel relayout of a square-angular field: pixel (au + A*h, av + A*w)
/// holds L(au, av, h, w). Bijective with LightField when U == V == A.
struct MacPIImage {
  int64_t A = 0, H = 0, W = 0;
  std::vector<float> data;  // (A*H) x (A*W) row-major

  int64_t rows() const { return A * H; }
  int64_t cols() const { return A * W; }
  float at(int64_t r, int64_t c) const { return data[size_t(r * cols() + c)]; }
};

MacPIImage sai_to_macpi(const LightField& lf);
LightField macpi_to_sai(const MacPIImage& m);

/// Horizontal EPI: fixes (v, w), returns the [U x H] slice row-major.
std::vector<float> extract_epi_h(const LightField& lf, int64_t v, int64_t w);
/// Vertical EPI: fixes (u, h), returns the [V x W] slice row-major.
std::vector<float> extract_epi_v(const LightField& lf, int64_t u, int64_t h);

/// Integer super-resolution scale; valid values are 2, 4, 8 (and 1 as the
/// degenerate pass-through).
struct ScaleFactor {
  int value = 4;
  explicit ScaleFactor(int v = 4) : value(v) {
    if (v != 1 && v != 2 && v != 4 && v != 8) fail_invalid("scale factor must be one of {1,2,4,8}, got ", v);
  }
};

/// Per-view antialiased bicubic downsample by s. H and W must be divisible.
LightField degrade(const LightField& lf, ScaleFactor s);
/// Per-view bicubic upsample by s (no antialias on upsampling).
LightField upsample_bicubic(const LightField& lf, ScaleFactor s);

struct PatchPair {
  LightField lr, hr;
  int64_t hr_h0 = 0, hr_w0 = 0;  // origin of the HR crop in the source field
};

/// Spatially aligned LR/HR patch pairs with full coverage; the final patch in
/// each axis is re-anchored flush to the border.
std::vector<PatchPair> crop_patches(const LightField& lr, const LightField& hr, int64_t hr_patch,
                                    int64_t stride);

enum class AugmentOp { flip_h, flip_v, rot90 };

/// Structure-preserving augmentation: the angular axes transform jointly with
/// the spatial axes so epipolar geometry stays valid.
LightField augment(const LightField& lf, AugmentOp op);
void augment_pair(PatchPair& pair, AugmentOp op);

}  // namespace lfsr::lf
