#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dueb/rng.hpp"
#include "dueb/tensor.hpp"

namespace dueb {

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  [[nodiscard]] int area() const { return w * h; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Binary CutMix mask. Immutable once built so the same object can be handed
/// to the input mix and to the output mix of one image pair.
class MixMask {
 public:
  /// Union of `rects`, clipped to the image.
  MixMask(int h, int w, std::vector<Rect> rects);
  /// Arbitrary binary mask (values must be 0/1); carries no rectangles.
  static MixMask from_pixels(int h, int w, std::vector<std::uint8_t> pixels);
  static MixMask filled(int h, int w, std::uint8_t value);

  [[nodiscard]] int h() const { return h_; }
  [[nodiscard]] int w() const { return w_; }
  [[nodiscard]] std::uint8_t at(int y, int x) const {
    return pixels_[static_cast<std::size_t>(y) * w_ + x];
  }
  [[nodiscard]] const std::vector<std::uint8_t>& pixels() const { return pixels_; }
  [[nodiscard]] const std::vector<Rect>& rects() const { return rects_; }
  [[nodiscard]] double coverage() const;

  friend bool operator==(const MixMask&, const MixMask&) = default;

 private:
  MixMask(int h, int w, std::vector<std::uint8_t> pixels, std::vector<Rect> rects);

  int h_;
  int w_;
  std::vector<std::uint8_t> pixels_;
  std::vector<Rect> rects_;
};

struct MaskSampling {
  int num_rects = 3;
  double min_area = 0.25;
  double max_area = 0.5;
  double min_aspect = 0.5;
  double max_aspect = 2.0;
};

/// Three independent rectangles, area ratio uniform in [0.25, 0.5] and aspect
/// uniform in [0.5, 2], placed uniformly inside the image. Rectangles may
/// overlap. Requires h, w >= 8.
MixMask sample_mask(int h, int w, Rng& rng, const MaskSampling& cfg = {});

/// (1 - m) * a + m * b with one mask shared by every sample of the batch.
Tensor mix(const Tensor& a, const Tensor& b, const MixMask& m);
/// Per-sample masks; masks.size() must equal the batch size.
Tensor mix(const Tensor& a, const Tensor& b, std::span<const MixMask> masks);

/// Per-pixel selection for categorical maps.
LabelMap mix(const LabelMap& a, const LabelMap& b, const MixMask& m);
LabelMap mix(const LabelMap& a, const LabelMap& b, std::span<const MixMask> masks);

}  // namespace dueb
