#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "dueb/raster.hpp"
#include "dueb/tensor.hpp"

namespace dueb {

/// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes)
      : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

  [[nodiscard]] int num_classes() const { return classes_; }
  std::int64_t& at(int gt, int pred) { return counts_[static_cast<std::size_t>(gt) * classes_ + pred]; }
  [[nodiscard]] std::int64_t at(int gt, int pred) const {
    return counts_[static_cast<std::size_t>(gt) * classes_ + pred];
  }
  [[nodiscard]] std::int64_t total() const;

  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

/// Adds one count per pixel; ground-truth ignore pixels are skipped.
void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt);

enum class AbsentClassPolicy { kExclude, kCountAsZero };

struct IouResult {
  std::vector<std::optional<double>> per_class;  // nullopt: class absent from gt and pred
  std::optional<double> miou;                    // nullopt: nothing to average
};

IouResult iou(const ConfusionMatrix& cm, AbsentClassPolicy policy = AbsentClassPolicy::kExclude);

using Rgb = std::array<std::uint8_t, 3>;

struct Palette {
  std::vector<Rgb> colors;
  /// Distinct colors for `num_classes` classes.
  static Palette standard(int num_classes);
};

Raster render(const LabelMap& labels, int n, const Palette& palette);
/// Exact color lookup back to class ids.
LabelMap unrender(const Raster& raster, const Palette& palette);
/// Sample `n` of an image batch in [0, 1] as an 8-bit RGB (or gray) raster.
Raster to_raster(const Tensor& images, int n);
/// input | prediction | ground truth, side by side.
Raster panel(const Raster& input, const Raster& pred, const Raster& gt);

/// JSON summary with per-class IoU and mIoU.
void write_metrics_summary(const IouResult& result, const std::filesystem::path& path);

}  // namespace dueb
