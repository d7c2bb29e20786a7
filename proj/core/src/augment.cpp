#include "dueb/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dueb {

MixMask::MixMask(int h, int w, std::vector<std::uint8_t> pixels, std::vector<Rect> rects)
    : h_(h), w_(w), pixels_(std::move(pixels)), rects_(std::move(rects)) {}

MixMask::MixMask(int h, int w, std::vector<Rect> rects)
    : h_(h), w_(w), pixels_(static_cast<std::size_t>(h) * w, 0), rects_(std::move(rects)) {
  if (h <= 0 || w <= 0) throw std::invalid_argument("MixMask: empty extent");
  for (const Rect& r : rects_) {
    const int x0 = std::max(r.x, 0), x1 = std::min(r.x + r.w, w);
    const int y0 = std::max(r.y, 0), y1 = std::min(r.y + r.h, h);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) pixels_[static_cast<std::size_t>(y) * w + x] = 1;
  }
}

MixMask MixMask::from_pixels(int h, int w, std::vector<std::uint8_t> pixels) {
  if (h <= 0 || w <= 0 || pixels.size() != static_cast<std::size_t>(h) * w)
    throw std::invalid_argument("MixMask::from_pixels: size mismatch");
  for (auto v : pixels)
    if (v > 1) throw std::invalid_argument("MixMask::from_pixels: values must be 0 or 1");
  return MixMask(h, w, std::move(pixels), {});
}

MixMask MixMask::filled(int h, int w, std::uint8_t value) {
  return from_pixels(h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, value));
}

double MixMask::coverage() const {
  std::size_t on = 0;
  for (auto v : pixels_) on += v;
  return static_cast<double>(on) / static_cast<double>(pixels_.size());
}

MixMask sample_mask(int h, int w, Rng& rng, const MaskSampling& cfg) {
  if (h < 8 || w < 8) throw std::invalid_argument("sample_mask: image must be at least 8x8");
  std::uniform_real_distribution<double> area_dist(cfg.min_area, cfg.max_area);
  std::uniform_real_distribution<double> aspect_dist(cfg.min_aspect, cfg.max_aspect);
  const double total = static_cast<double>(h) * w;
  const auto lo = static_cast<int>(std::ceil(cfg.min_area * total));
  const auto hi = static_cast<int>(std::floor(cfg.max_area * total));

  std::vector<Rect> rects;
  rects.reserve(cfg.num_rects);
  for (int i = 0; i < cfg.num_rects; ++i) {
    const double area = area_dist(rng) * total;
    const double aspect = aspect_dist(rng);  // width / height
    int rw = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 1, w);
    int rh = std::clamp(static_cast<int>(std::lround(area / rw)), 1, h);
    // Integer rounding and clamping can push the area out of range; nudge the
    // side with slack until it is back inside [lo, hi].
    while (rw * rh < lo) {
      if (rh < h && (rw >= w || rh <= rw)) ++rh; else ++rw;
    }
    while (rw * rh > hi) {
      if (rh > 1 && (rh >= rw || rw <= 1)) --rh; else --rw;
    }
    const int x = std::uniform_int_distribution<int>(0, w - rw)(rng);
    const int y = std::uniform_int_distribution<int>(0, h - rh)(rng);
    rects.push_back({x, y, rw, rh});
  }
  return MixMask(h, w, std::move(rects));
}

namespace {

void check_pair(const Shape& a, const Shape& b, int mh, int mw) {
  if (!(a == b))
    throw std::invalid_argument("mix: shape mismatch " + to_string(a) + " vs " + to_string(b));
  if (a.h != mh || a.w != mw)
    throw std::invalid_argument("mix: mask extent does not match field");
}

}  // namespace

Tensor mix(const Tensor& a, const Tensor& b, std::span<const MixMask> masks) {
  if (masks.size() != static_cast<std::size_t>(a.n()))
    throw std::invalid_argument("mix: need one mask per sample");
  Tensor out(a.shape());
  const std::size_t plane = a.shape().plane();
  for (int n = 0; n < a.n(); ++n) {
    check_pair(a.shape(), b.shape(), masks[n].h(), masks[n].w());
    const auto& px = masks[n].pixels();
    for (int c = 0; c < a.c(); ++c) {
      const std::size_t off = a.index(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const double m = px[i];
        out.data()[off + i] = (1.0 - m) * a.data()[off + i] + m * b.data()[off + i];
      }
    }
  }
  return out;
}

Tensor mix(const Tensor& a, const Tensor& b, const MixMask& m) {
  check_pair(a.shape(), b.shape(), m.h(), m.w());
  std::vector<MixMask> masks(static_cast<std::size_t>(a.n()), m);
  return mix(a, b, masks);
}

LabelMap mix(const LabelMap& a, const LabelMap& b, std::span<const MixMask> masks) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw std::invalid_argument("mix: label map shape mismatch");
  if (masks.size() != static_cast<std::size_t>(a.n()))
    throw std::invalid_argument("mix: need one mask per sample");
  LabelMap out(a.n(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    if (masks[n].h() != a.h() || masks[n].w() != a.w())
      throw std::invalid_argument("mix: mask extent does not match label map");
    const std::size_t off = a.index(n, 0, 0);
    const auto& px = masks[n].pixels();
    for (std::size_t i = 0; i < px.size(); ++i)
      out[off + i] = px[i] ? b[off + i] : a[off + i];
  }
  return out;
}

LabelMap mix(const LabelMap& a, const LabelMap& b, const MixMask& m) {
  std::vector<MixMask> masks(static_cast<std::size_t>(a.n()), m);
  return mix(a, b, masks);
}

}  // namespace dueb
