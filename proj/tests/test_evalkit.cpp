#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <nlohmann/json.hpp>

#include "dueb/evalkit.hpp"
#include "oracles.hpp"

using namespace dueb;

namespace {

ConfusionMatrix from_rows(const std::vector<std::vector<std::int64_t>>& rows) {
  ConfusionMatrix cm(static_cast<int>(rows.size()));
  for (std::size_t g = 0; g < rows.size(); ++g)
    for (std::size_t p = 0; p < rows.size(); ++p) cm.at(static_cast<int>(g), static_cast<int>(p)) = rows[g][p];
  return cm;
}

}  // namespace

TEST(Iou, HandTwoClass) {
  const IouResult r = iou(from_rows({{5, 5}, {0, 10}}));
  EXPECT_NEAR(*r.per_class[0], 0.5, 1e-15);
  EXPECT_NEAR(*r.per_class[1], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(*r.miou, 7.0 / 12.0, 1e-15);
}

TEST(Iou, EmptyDiagonalAndAbsentClass) {
  const IouResult empty = iou(ConfusionMatrix(3));
  EXPECT_FALSE(empty.miou.has_value());
  for (const auto& v : empty.per_class) EXPECT_FALSE(v.has_value());

  const IouResult diag = iou(from_rows({{4, 0, 0}, {0, 9, 0}, {0, 0, 1}}));
  EXPECT_EQ(*diag.miou, 1.0);

  const auto cm = from_rows({{4, 0, 0}, {0, 0, 0}, {0, 0, 2}});
  EXPECT_FALSE(iou(cm).per_class[1].has_value());
  EXPECT_EQ(*iou(cm).miou, 1.0);
  EXPECT_NEAR(*iou(cm, AbsentClassPolicy::kCountAsZero).miou, 2.0 / 3.0, 1e-15);
}

TEST(Iou, SinglePixel) {
  ConfusionMatrix cm(3);
  accumulate(cm, LabelMap(1, 1, 1, 2), LabelMap(1, 1, 1, 1));
  const IouResult r = iou(cm);
  EXPECT_EQ(*r.per_class[1], 0.0);
  EXPECT_EQ(*r.per_class[2], 0.0);
  EXPECT_FALSE(r.per_class[0].has_value());
  EXPECT_EQ(*r.miou, 0.0);
}

TEST(Iou, MatchesSetOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const int C = 2 + trial % 4;
    const LabelMap pred = oracle::random_labels(2, 6, 5, C, rng);
    LabelMap gt = oracle::random_labels(2, 6, 5, C, rng);
    gt[trial] = C;
    ConfusionMatrix cm(C);
    accumulate(cm, pred, gt);
    const IouResult r = iou(cm);
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < C; ++c) {
      int inter = 0, uni = 0;
      for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] == C) continue;
        const bool a = pred[i] == c, b = gt[i] == c;
        inter += a && b;
        uni += a || b;
      }
      if (uni == 0) {
        EXPECT_FALSE(r.per_class[c].has_value());
        continue;
      }
      EXPECT_NEAR(*r.per_class[c], static_cast<double>(inter) / uni, 1e-15);
      sum += static_cast<double>(inter) / uni;
      ++present;
    }
    EXPECT_NEAR(*r.miou, sum / present, 1e-15);
    EXPECT_EQ(cm.total(), 59);
  }
}

TEST(Iou, AccumulationIsAdditive) {
  std::mt19937_64 rng(2);
  const LabelMap p1 = oracle::random_labels(1, 4, 4, 3, rng), g1 = oracle::random_labels(1, 4, 4, 3, rng);
  const LabelMap p2 = oracle::random_labels(1, 4, 4, 3, rng), g2 = oracle::random_labels(1, 4, 4, 3, rng);
  ConfusionMatrix a(3), b(3), both(3);
  accumulate(a, p1, g1);
  accumulate(b, p2, g2);
  accumulate(both, p1, g1);
  accumulate(both, p2, g2);
  a += b;
  EXPECT_EQ(a, both);
  ConfusionMatrix wrong(4);
  EXPECT_THROW(a += wrong, std::invalid_argument);
}

TEST(Iou, PermutingClassesPermutesScores) {
  std::mt19937_64 rng(3);
  const LabelMap pred = oracle::random_labels(1, 8, 8, 4, rng), gt = oracle::random_labels(1, 8, 8, 4, rng);
  const int perm[4] = {2, 0, 3, 1};
  LabelMap pp = pred, gp = gt;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pp[i] = perm[pred[i]];
    gp[i] = perm[gt[i]];
  }
  ConfusionMatrix a(4), b(4);
  accumulate(a, pred, gt);
  accumulate(b, pp, gp);
  const IouResult ra = iou(a), rb = iou(b);
  for (int c = 0; c < 4; ++c) EXPECT_EQ(ra.per_class[c], rb.per_class[perm[c]]);
  EXPECT_NEAR(*ra.miou, *rb.miou, 1e-15);
}

TEST(Iou, AccumulateRejectsBadInput) {
  ConfusionMatrix cm(2);
  EXPECT_THROW(accumulate(cm, LabelMap(1, 2, 2), LabelMap(1, 2, 3)), std::invalid_argument);
  EXPECT_THROW(accumulate(cm, LabelMap(1, 2, 2, 2), LabelMap(1, 2, 2)), std::invalid_argument);
  accumulate(cm, LabelMap(1, 2, 2, 1), LabelMap(1, 2, 2, 2));
  EXPECT_EQ(cm.total(), 0);
}

TEST(Render, RoundTripAndConstantMap) {
  std::mt19937_64 rng(4);
  for (const int C : {2, 5, 12}) {
    const Palette pal = Palette::standard(C);
    std::set<Rgb> distinct(pal.colors.begin(), pal.colors.end());
    EXPECT_EQ(distinct.size(), static_cast<std::size_t>(C));
    const LabelMap m = oracle::random_labels(2, 5, 7, C, rng);
    EXPECT_EQ(unrender(render(m, 1, pal), pal), slice(m, 1));
  }
  const Palette pal = Palette::standard(3);
  const Raster r = render(LabelMap(1, 3, 4, 2), 0, pal);
  EXPECT_EQ(r.width, 4);
  EXPECT_EQ(r.height, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(r.px(x, y)[c], pal.colors[2][c]);
  EXPECT_THROW(render(LabelMap(1, 2, 2, 3), 0, pal), std::invalid_argument);
}

TEST(Render, PanelLayout) {
  Tensor img({1, 3, 2, 3}, 0.0);
  img.at(0, 0, 1, 2) = 1.0;
  img.at(0, 1, 0, 0) = 0.5;
  const Raster in = to_raster(img, 0);
  EXPECT_EQ(in.px(2, 1)[0], 255);
  EXPECT_EQ(in.px(0, 0)[1], 128);
  const Palette pal = Palette::standard(2);
  const Raster pred = render(LabelMap(1, 2, 3, 1), 0, pal);
  const Raster gt = render(LabelMap(1, 2, 3, 0), 0, pal);
  const Raster p = panel(in, pred, gt);
  EXPECT_EQ(p.width, 9);
  EXPECT_EQ(p.height, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 3; ++x)
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(p.px(x, y)[c], in.px(x, y)[c]);
        EXPECT_EQ(p.px(3 + x, y)[c], pred.px(x, y)[c]);
        EXPECT_EQ(p.px(6 + x, y)[c], gt.px(x, y)[c]);
      }
  EXPECT_THROW(panel(in, render(LabelMap(1, 3, 3), 0, pal), gt), std::invalid_argument);
}

TEST(Render, GrayInputIsReplicated) {
  Tensor img({1, 1, 1, 1}, 0.2);
  const Raster gray = to_raster(img, 0);
  EXPECT_EQ(gray.channels, 1);
  const Palette pal = Palette::standard(2);
  const Raster lab = render(LabelMap(1, 1, 1), 0, pal);
  const Raster p = panel(gray, lab, lab);
  for (int c = 0; c < 3; ++c) EXPECT_EQ(p.px(0, 0)[c], 51);
}

TEST(MetricsSummary, Json) {
  const auto path = std::filesystem::temp_directory_path() / "dueb_metrics_test.json";
  write_metrics_summary(iou(from_rows({{5, 5, 0}, {0, 10, 0}, {0, 0, 0}})), path);
  nlohmann::json j;
  std::ifstream(path) >> j;
  EXPECT_NEAR(j["miou"].get<double>(), 7.0 / 12.0, 1e-15);
  ASSERT_EQ(j["per_class_iou"].size(), 3u);
  EXPECT_EQ(j["per_class_iou"][1]["class"], 1);
  EXPECT_NEAR(j["per_class_iou"][1]["iou"].get<double>(), 2.0 / 3.0, 1e-15);
  EXPECT_TRUE(j["per_class_iou"][2]["iou"].is_null());
  std::filesystem::remove(path);
}
