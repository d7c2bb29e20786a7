#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dueb/tensor.hpp"

namespace dueb {

/// Parameters of the synthetic scene family. A scene is a background of
/// class 0 with a few disks, rectangles and triangles painted on top, each
/// one carrying a foreground class id.
struct SceneSpec {
  int image_size = 64;
  int num_classes = 4;
  int min_shapes = 1;
  int max_shapes = 4;
  double noise_std = 0.04;
  std::uint64_t seed = 7;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct Scene {
  Tensor image;    // (1, 3, H, W), values in [0, 1]
  LabelMap label;  // (1, H, W), values in {0..C-1}
};

/// Throws std::invalid_argument for C < 2, image_size < 8, or a bad shape range.
void validate(const SceneSpec& spec);

/// Pure function of (spec, index). Shapes are drawn in order so later shapes
/// occlude earlier ones; edge pixels are linearly blended over one pixel.
Scene generate_scene(const SceneSpec& spec, std::int64_t index);

/// Labeled fraction 1/denominator; only 2, 4, 8 and 16 are accepted.
class LabeledFraction {
 public:
  explicit LabeledFraction(int denominator);
  /// Parses "1/8" style strings.
  static LabeledFraction parse(std::string_view text);

  [[nodiscard]] int denominator() const { return denominator_; }
  [[nodiscard]] double value() const { return 1.0 / denominator_; }
  [[nodiscard]] std::string str() const;

  friend bool operator==(const LabeledFraction&, const LabeledFraction&) = default;

 private:
  int denominator_;
};

struct PartitionProtocol {
  LabeledFraction labeled_fraction{8};
  int total_images = 160;
  std::uint64_t seed = 0;
};

struct Partition {
  std::vector<int> labeled;    // ascending
  std::vector<int> unlabeled;  // ascending
};

/// Labeled count is floor(total / denominator). Requires total_images >= 16.
Partition split_partition(const PartitionProtocol& protocol);

/// Writes one PPM image and one PGM label raster per scene plus manifest.txt
/// with lines "<index> <image> <label> <labeled|unlabeled>".
void dump_dataset(const SceneSpec& spec, const PartitionProtocol& protocol,
                  const std::filesystem::path& dir);

}  // namespace dueb
