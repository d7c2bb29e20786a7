#include "dueb/synthgen.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "dueb/raster.hpp"
#include "dueb/rng.hpp"

namespace dueb {
namespace {

using Color = std::array<double, 3>;

Color class_color(int cls) {
  static constexpr std::array<Color, 8> kBase{{
      {0.15, 0.15, 0.15},
      {0.85, 0.20, 0.20},
      {0.20, 0.75, 0.25},
      {0.20, 0.30, 0.90},
      {0.90, 0.85, 0.20},
      {0.80, 0.30, 0.85},
      {0.20, 0.85, 0.85},
      {0.95, 0.55, 0.15},
  }};
  if (cls < static_cast<int>(kBase.size())) return kBase[cls];
  const std::uint64_t h = splitmix64(static_cast<std::uint64_t>(cls));
  return {0.2 + 0.7 * ((h & 0xff) / 255.0), 0.2 + 0.7 * (((h >> 8) & 0xff) / 255.0),
          0.2 + 0.7 * (((h >> 16) & 0xff) / 255.0)};
}

enum class ShapeKind { kDisk, kRect, kTriangle };

struct Shape2d {
  ShapeKind kind{};
  int cls = 0;
  double cx = 0, cy = 0;
  double rx = 0, ry = 0;  // disk uses rx; rect uses half extents
  std::array<double, 6> tri{};  // counter-clockwise vertices

  // Signed distance (negative inside). Exact for disks; the max-of-planes
  // approximation for rectangles and triangles is exact inside.
  [[nodiscard]] double distance(double px, double py) const {
    switch (kind) {
      case ShapeKind::kDisk:
        return std::hypot(px - cx, py - cy) - rx;
      case ShapeKind::kRect:
        return std::max(std::abs(px - cx) - rx, std::abs(py - cy) - ry);
      case ShapeKind::kTriangle: {
        double d = -1e300;
        for (int e = 0; e < 3; ++e) {
          const double x0 = tri[2 * e], y0 = tri[2 * e + 1];
          const double x1 = tri[(2 * e + 2) % 6], y1 = tri[(2 * e + 3) % 6];
          const double ex = x1 - x0, ey = y1 - y0;
          const double len = std::hypot(ex, ey);
          // outward normal of a CCW edge
          const double nx = ey / len, ny = -ex / len;
          d = std::max(d, nx * (px - x0) + ny * (py - y0));
        }
        return d;
      }
    }
    return 0.0;
  }
};

Shape2d sample_shape(Rng& rng, int size, int cls) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Shape2d s;
  s.cls = cls;
  s.kind = static_cast<ShapeKind>(std::uniform_int_distribution<int>(0, 2)(rng));
  const double r = size * (0.10 + 0.12 * unit(rng));
  s.cx = size * (0.15 + 0.70 * unit(rng));
  s.cy = size * (0.15 + 0.70 * unit(rng));
  switch (s.kind) {
    case ShapeKind::kDisk:
      s.rx = r;
      break;
    case ShapeKind::kRect:
      s.rx = r * (0.6 + 0.8 * unit(rng));
      s.ry = r * (0.6 + 0.8 * unit(rng));
      break;
    case ShapeKind::kTriangle: {
      const double rot = 2.0 * std::numbers::pi * unit(rng);
      const double rr = 1.3 * r;
      for (int v = 0; v < 3; ++v) {
        const double a = rot + v * 2.0 * std::numbers::pi / 3.0 + 0.3 * (unit(rng) - 0.5);
        s.tri[2 * v] = s.cx + rr * std::cos(a);
        s.tri[2 * v + 1] = s.cy + rr * std::sin(a);
      }
      const double cross = (s.tri[2] - s.tri[0]) * (s.tri[5] - s.tri[1]) -
                           (s.tri[3] - s.tri[1]) * (s.tri[4] - s.tri[0]);
      if (cross < 0) {  // keep positive orientation for the edge normals
        std::swap(s.tri[2], s.tri[4]);
        std::swap(s.tri[3], s.tri[5]);
      }
      break;
    }
  }
  return s;
}

}  // namespace

void validate(const SceneSpec& spec) {
  if (spec.num_classes < 2)
    throw std::invalid_argument("SceneSpec: num_classes must be >= 2");
  if (spec.image_size < 8)
    throw std::invalid_argument("SceneSpec: image_size must be >= 8");
  if (spec.min_shapes < 0 || spec.max_shapes < spec.min_shapes)
    throw std::invalid_argument("SceneSpec: invalid shapes_per_image range");
  if (!(spec.noise_std >= 0.0))
    throw std::invalid_argument("SceneSpec: noise_std must be >= 0");
}

Scene generate_scene(const SceneSpec& spec, std::int64_t index) {
  validate(spec);
  if (index < 0) throw std::invalid_argument("generate_scene: negative index");

  const int size = spec.image_size;
  Rng rng = make_rng(spec.seed, static_cast<std::uint64_t>(index));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  const double brightness = jitter(rng);

  const int count =
      std::uniform_int_distribution<int>(spec.min_shapes, spec.max_shapes)(rng);
  std::uniform_int_distribution<int> pick_class(1, spec.num_classes - 1);
  std::vector<Shape2d> shapes;
  shapes.reserve(count);
  for (int i = 0; i < count; ++i) {
    // The topmost shape cycles through the foreground classes so every class
    // is guaranteed to be visible somewhere in any run of C-1 scenes.
    const int cls = i + 1 == count
                        ? 1 + static_cast<int>(index % (spec.num_classes - 1))
                        : pick_class(rng);
    shapes.push_back(sample_shape(rng, size, cls));
  }

  Scene scene{Tensor({1, 3, size, size}), LabelMap(1, size, size, 0)};
  const Color bg = class_color(0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int ch = 0; ch < 3; ++ch) scene.image.at(0, ch, y, x) = bg[ch] + brightness;

  for (const auto& s : shapes) {
    const Color col = class_color(s.cls);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d = s.distance(x + 0.5, y + 0.5);
        const double alpha = std::clamp(0.5 - d, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        for (int ch = 0; ch < 3; ++ch) {
          double& v = scene.image.at(0, ch, y, x);
          v = (1.0 - alpha) * v + alpha * (col[ch] + brightness);
        }
        if (d < 0.0) scene.label.at(0, y, x) = s.cls;
      }
    }
  }

  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (double& v : scene.image.data()) v += noise(rng);
  }
  for (double& v : scene.image.data()) v = std::clamp(v, 0.0, 1.0);
  return scene;
}

LabeledFraction::LabeledFraction(int denominator) : denominator_(denominator) {
  if (denominator != 2 && denominator != 4 && denominator != 8 && denominator != 16)
    throw std::invalid_argument("labeled fraction must be one of 1/2, 1/4, 1/8, 1/16");
}

LabeledFraction LabeledFraction::parse(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos || text.substr(0, slash) != "1")
    throw std::invalid_argument("labeled fraction must look like 1/N: " + std::string(text));
  const auto digits = text.substr(slash + 1);
  int den = 0;
  const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), den);
  if (ec != std::errc{} || ptr != digits.data() + digits.size())
    throw std::invalid_argument("labeled fraction must look like 1/N: " + std::string(text));
  return LabeledFraction(den);
}

std::string LabeledFraction::str() const { return "1/" + std::to_string(denominator_); }

Partition split_partition(const PartitionProtocol& protocol) {
  if (protocol.total_images < 16)
    throw std::invalid_argument("split_partition: total_images must be >= 16");
  std::vector<int> order(protocol.total_images);
  for (int i = 0; i < protocol.total_images; ++i) order[i] = i;
  Rng rng = make_rng(protocol.seed, 0x9a27);
  std::shuffle(order.begin(), order.end(), rng);

  const int labeled = protocol.total_images / protocol.labeled_fraction.denominator();
  Partition p;
  p.labeled.assign(order.begin(), order.begin() + labeled);
  p.unlabeled.assign(order.begin() + labeled, order.end());
  std::sort(p.labeled.begin(), p.labeled.end());
  std::sort(p.unlabeled.begin(), p.unlabeled.end());
  return p;
}

void dump_dataset(const SceneSpec& spec, const PartitionProtocol& protocol,
                  const std::filesystem::path& dir) {
  const Partition part = split_partition(protocol);
  std::vector<bool> is_labeled(protocol.total_images, false);
  for (int i : part.labeled) is_labeled[i] = true;

  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw std::runtime_error("dump_dataset: cannot write manifest");
  for (int i = 0; i < protocol.total_images; ++i) {
    const Scene s = generate_scene(spec, i);
    const int size = spec.image_size;
    Raster img(size, size, 3);
    Raster lab(size, size, 1);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        for (int ch = 0; ch < 3; ++ch)
          img.px(x, y)[ch] = static_cast<std::uint8_t>(
              std::lround(255.0 * s.image.at(0, ch, y, x)));
        lab.px(x, y)[0] = static_cast<std::uint8_t>(s.label.at(0, y, x));
      }
    }
    char stem[32];
    std::snprintf(stem, sizeof stem, "%05d", i);
    const std::string image_name = std::string("image_") + stem + ".ppm";
    const std::string label_name = std::string("label_") + stem + ".pgm";
    write_pnm(img, dir / image_name);
    write_pnm(lab, dir / label_name);
    manifest << i << ' ' << image_name << ' ' << label_name << ' '
             << (is_labeled[i] ? "labeled" : "unlabeled") << '\n';
  }
}

}  // namespace dueb
