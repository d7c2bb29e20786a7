#include "dueb/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>

namespace dueb {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto v : counts_) s += v;
  return s;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) throw std::invalid_argument("ConfusionMatrix: class count mismatch");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt) {
  if (pred.n() != gt.n() || pred.h() != gt.h() || pred.w() != gt.w())
    throw std::invalid_argument("accumulate: prediction and ground truth differ in shape");
  const int C = cm.num_classes();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const int g = gt[i];
    const int p = pred[i];
    if (g == ignore_label(C)) continue;
    if (g < 0 || g > C || p < 0 || p >= C)
      throw std::invalid_argument("accumulate: class value out of range");
    ++cm.at(g, p);
  }
}

IouResult iou(const ConfusionMatrix& cm, AbsentClassPolicy policy) {
  const int C = cm.num_classes();
  IouResult r;
  r.per_class.resize(C);
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < C; ++c) {
    std::int64_t row = 0, col = 0;
    for (int k = 0; k < C; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const std::int64_t tp = cm.at(c, c);
    const std::int64_t denom = row + col - tp;  // tp + fn + fp
    if (denom > 0) {
      r.per_class[c] = static_cast<double>(tp) / static_cast<double>(denom);
      sum += *r.per_class[c];
      ++counted;
    } else if (policy == AbsentClassPolicy::kCountAsZero) {
      ++counted;
    }
  }
  if (counted > 0 && cm.total() > 0) r.miou = sum / counted;
  return r;
}

Palette Palette::standard(int num_classes) {
  static constexpr std::array<Rgb, 8> kBase{{
      {0, 0, 0},
      {220, 40, 40},
      {40, 180, 60},
      {50, 80, 230},
      {235, 215, 40},
      {200, 70, 215},
      {40, 210, 210},
      {245, 140, 30},
  }};
  Palette p;
  for (int c = 0; c < num_classes; ++c) {
    if (c < static_cast<int>(kBase.size())) {
      p.colors.push_back(kBase[c]);
    } else {
      // Walk the RGB cube in coarse steps; distinct for up to 216 classes.
      const int k = c - static_cast<int>(kBase.size());
      p.colors.push_back({static_cast<std::uint8_t>(25 + 40 * (k % 6)),
                          static_cast<std::uint8_t>(25 + 40 * ((k / 6) % 6)),
                          static_cast<std::uint8_t>(25 + 40 * ((k / 36) % 6))});
    }
  }
  return p;
}

Raster render(const LabelMap& labels, int n, const Palette& palette) {
  Raster r(labels.w(), labels.h(), 3);
  for (int y = 0; y < labels.h(); ++y) {
    for (int x = 0; x < labels.w(); ++x) {
      const int c = labels.at(n, y, x);
      if (c < 0 || c >= static_cast<int>(palette.colors.size()))
        throw std::invalid_argument("render: no palette entry for class " + std::to_string(c));
      std::copy(palette.colors[c].begin(), palette.colors[c].end(), r.px(x, y));
    }
  }
  return r;
}

LabelMap unrender(const Raster& raster, const Palette& palette) {
  if (raster.channels != 3) throw std::invalid_argument("unrender: expected an RGB raster");
  std::map<Rgb, int> lookup;
  for (std::size_t c = 0; c < palette.colors.size(); ++c) lookup.emplace(palette.colors[c], static_cast<int>(c));
  LabelMap out(1, raster.height, raster.width);
  for (int y = 0; y < raster.height; ++y) {
    for (int x = 0; x < raster.width; ++x) {
      const auto* p = raster.px(x, y);
      const auto it = lookup.find({p[0], p[1], p[2]});
      if (it == lookup.end()) throw std::invalid_argument("unrender: color not in palette");
      out.at(0, y, x) = it->second;
    }
  }
  return out;
}

Raster to_raster(const Tensor& images, int n) {
  const int ch = images.c() >= 3 ? 3 : 1;
  Raster r(images.w(), images.h(), ch);
  for (int y = 0; y < images.h(); ++y)
    for (int x = 0; x < images.w(); ++x)
      for (int c = 0; c < ch; ++c)
        r.px(x, y)[c] = static_cast<std::uint8_t>(
            std::lround(255.0 * std::clamp(images.at(n, c, y, x), 0.0, 1.0)));
  return r;
}

Raster panel(const Raster& input, const Raster& pred, const Raster& gt) {
  const int w = input.width;
  const int h = input.height;
  if (pred.width != w || gt.width != w || pred.height != h || gt.height != h)
    throw std::invalid_argument("panel: rasters differ in size");
  Raster out(3 * w, h, 3);
  const Raster* parts[] = {&input, &pred, &gt};
  for (int i = 0; i < 3; ++i) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const auto* src = parts[i]->px(x, y);
        auto* dst = out.px(i * w + x, y);
        for (int c = 0; c < 3; ++c) dst[c] = parts[i]->channels == 3 ? src[c] : src[0];
      }
    }
  }
  return out;
}

void write_metrics_summary(const IouResult& result, const std::filesystem::path& path) {
  nlohmann::json j;
  j["miou"] = result.miou ? nlohmann::json(*result.miou) : nlohmann::json(nullptr);
  j["per_class_iou"] = nlohmann::json::array();
  for (std::size_t c = 0; c < result.per_class.size(); ++c) {
    j["per_class_iou"].push_back(
        {{"class", c},
         {"iou", result.per_class[c] ? nlohmann::json(*result.per_class[c]) : nlohmann::json(nullptr)}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_summary: cannot open " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace dueb
