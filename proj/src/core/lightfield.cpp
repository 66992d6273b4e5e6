#include "core/lightfield.hpp"

#include "core/bicubic.hpp"

namespace lfsr::lf {

MacPIImage sai_to_macpi(const LightField& lf) {
  if (!lf.square_angular())
    fail_invalid("sai_to_macpi: angular grid must be square, got U=", lf.U, " V=", lf.V);
  MacPIImage m{lf.U, lf.H, lf.W, {}};
  m.data.resize(size_t(lf.numel()));
  int64_t a = m.A, cols = m.cols();
  for (int64_t au = 0; au < a; ++au)
    for (int64_t av = 0; av < a; ++av) {
      const float* src = lf.view(au, av);
      for (int64_t h = 0; h < lf.H; ++h)
        for (int64_t w = 0; w < lf.W; ++w)
          m.data[size_t((au + a * h) * cols + (av + a * w))] = src[h * lf.W + w];
    }
  return m;
}

LightField macpi_to_sai(const MacPIImage& m) {
  LightField lf = LightField::zeros(m.A, m.A, m.H, m.W);
  int64_t a = m.A, cols = m.cols();
  for (int64_t au = 0; au < a; ++au)
    for (int64_t av = 0; av < a; ++av) {
      float* dst = lf.view(au, av);
      for (int64_t h = 0; h < m.H; ++h)
        for (int64_t w = 0; w < m.W; ++w)
          dst[h * m.W + w] = m.data[size_t((au + a * h) * cols + (av + a * w))];
    }
  return lf;
}

std::vector<float> extract_epi_h(const LightField& lf, int64_t v, int64_t w) {
  if (v < 0 || v >= lf.V) fail_invalid("extract_epi_h: v=", v, " out of range [0,", lf.V, ")");
  if (w < 0 || w >= lf.W) fail_invalid("extract_epi_h: w=", w, " out of range [0,", lf.W, ")");
  std::vector<float> epi(size_t(lf.U * lf.H));
  for (int64_t u = 0; u < lf.U; ++u)
    for (int64_t h = 0; h < lf.H; ++h) epi[size_t(u * lf.H + h)] = lf.at(u, v, h, w);
  return epi;
}

std::vector<float> extract_epi_v(const LightField& lf, int64_t u, int64_t h) {
  if (u < 0 || u >= lf.U) fail_invalid("extract_epi_v: u=", u, " out of range [0,", lf.U, ")");
  if (h < 0 || h >= lf.H) fail_invalid("extract_epi_v: h=", h, " out of range [0,", lf.H, ")");
  std::vector<float> epi(size_t(lf.V * lf.W));
  for (int64_t v = 0; v < lf.V; ++v)
    for (int64_t w = 0; w < lf.W; ++w) epi[size_t(v * lf.W + w)] = lf.at(u, v, h, w);
  return epi;
}

namespace {

LightField resize_views(const LightField& lf, int64_t out_h, int64_t out_w, bool antialias) {
  LightField out = LightField::zeros(lf.U, lf.V, out_h, out_w);
  std::vector<float> view(size_t(lf.H * lf.W));
  for (int64_t u = 0; u < lf.U; ++u)
    for (int64_t v = 0; v < lf.V; ++v) {
      const float* src = lf.view(u, v);
      view.assign(src, src + lf.H * lf.W);
      auto resized = bicubic_resize(view, lf.H, lf.W, out_h, out_w, antialias);
      std::copy(resized.begin(), resized.end(), out.view(u, v));
    }
  return out;
}

}  // namespace

LightField degrade(const LightField& lf, ScaleFactor s) {
  if (s.value == 1) return lf;
  if (lf.H % s.value != 0 || lf.W % s.value != 0)
    fail_invalid("degrade: extents ", lf.H, "x", lf.W, " not divisible by scale ", s.value);
  return resize_views(lf, lf.H / s.value, lf.W / s.value, /*antialias=*/true);
}

LightField upsample_bicubic(const LightField& lf, ScaleFactor s) {
  if (s.value == 1) return lf;
  return resize_views(lf, lf.H * s.value, lf.W * s.value, /*antialias=*/false);
}

std::vector<PatchPair> crop_patches(const LightField& lr, const LightField& hr, int64_t hr_patch,
                                    int64_t stride) {
  if (hr.H % lr.H != 0 || hr.W % lr.W != 0 || hr.H / lr.H != hr.W / lr.W)
    fail_invalid("crop_patches: LR/HR extents are not an integer scale pair");
  int64_t s = hr.H / lr.H;
  if (hr_patch % s != 0 || stride % s != 0)
    fail_invalid("crop_patches: patch ", hr_patch, " and stride ", stride, " must be divisible by scale ", s);
  if (hr_patch > hr.H || hr_patch > hr.W)
    fail_invalid("crop_patches: patch ", hr_patch, " larger than image ", hr.H, "x", hr.W);
  if (stride < 1) fail_invalid("crop_patches: stride must be positive");

  auto positions = [&](int64_t extent) {
    std::vector<int64_t> pos;
    for (int64_t p = 0; p + hr_patch <= extent; p += stride) pos.push_back(p);
    if (pos.back() != extent - hr_patch) pos.push_back(extent - hr_patch);  // flush to border
    return pos;
  };
  auto crop = [](const LightField& f, int64_t h0, int64_t w0, int64_t ph, int64_t pw) {
    LightField out = LightField::zeros(f.U, f.V, ph, pw);
    for (int64_t u = 0; u < f.U; ++u)
      for (int64_t v = 0; v < f.V; ++v) {
        const float* src = f.view(u, v);
        float* dst = out.view(u, v);
        for (int64_t h = 0; h < ph; ++h)
          for (int64_t w = 0; w < pw; ++w) dst[h * pw + w] = src[(h0 + h) * f.W + (w0 + w)];
      }
    return out;
  };

  std::vector<PatchPair> out;
  for (int64_t h0 : positions(hr.H))
    for (int64_t w0 : positions(hr.W)) {
      PatchPair p;
      p.hr = crop(hr, h0, w0, hr_patch, hr_patch);
      p.lr = crop(lr, h0 / s, w0 / s, hr_patch / s, hr_patch / s);
      p.hr_h0 = h0;
      p.hr_w0 = w0;
      out.push_back(std::move(p));
    }
  return out;
}

LightField augment(const LightField& lf, AugmentOp op) {
  switch (op) {
    case AugmentOp::flip_h: {
      // Spatial w-flip paired with angular v-flip.
      LightField out = LightField::zeros(lf.U, lf.V, lf.H, lf.W);
      for (int64_t u = 0; u < lf.U; ++u)
        for (int64_t v = 0; v < lf.V; ++v)
          for (int64_t h = 0; h < lf.H; ++h)
            for (int64_t w = 0; w < lf.W; ++w)
              out.at(u, v, h, w) = lf.at(u, lf.V - 1 - v, h, lf.W - 1 - w);
      return out;
    }
    case AugmentOp::flip_v: {
      LightField out = LightField::zeros(lf.U, lf.V, lf.H, lf.W);
      for (int64_t u = 0; u < lf.U; ++u)
        for (int64_t v = 0; v < lf.V; ++v)
          for (int64_t h = 0; h < lf.H; ++h)
            for (int64_t w = 0; w < lf.W; ++w)
              out.at(u, v, h, w) = lf.at(lf.U - 1 - u, v, lf.H - 1 - h, w);
      return out;
    }
    case AugmentOp::rot90: {
      if (!lf.square_angular())
        fail_invalid("augment: rot90 requires a square angular grid, got U=", lf.U, " V=", lf.V);
      // Counterclockwise quarter turn applied to both grids:
      // out(u,v,h,w) = in(v, V-1-u, w, W-1-h). Extents swap (H<->W).
      LightField out = LightField::zeros(lf.V, lf.U, lf.W, lf.H);
      for (int64_t u = 0; u < out.U; ++u)
        for (int64_t v = 0; v < out.V; ++v)
          for (int64_t h = 0; h < out.H; ++h)
            for (int64_t w = 0; w < out.W; ++w)
              out.at(u, v, h, w) = lf.at(v, lf.V - 1 - u, w, lf.W - 1 - h);
      return out;
    }
  }
  fail_invalid("augment: unknown op");
}

void augment_pair(PatchPair& pair, AugmentOp op) {
  pair.lr = augment(pair.lr, op);
  pair.hr = augment(pair.hr, op);
}

}  // namespace lfsr::lf
