#include <gtest/gtest.h>

#include "dueb/augment.hpp"
#include "oracles.hpp"

using namespace dueb;

namespace {

MixMask random_pixel_mask(int h, int w, std::mt19937_64& rng) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * w);
  for (auto& v : px) v = rng() & 1u;
  return MixMask::from_pixels(h, w, px);
}

}  // namespace

TEST(Mix, Identities) {
  std::mt19937_64 rng(1);
  const Tensor a = oracle::random_tensor({2, 3, 8, 8}, rng);
  const Tensor b = oracle::random_tensor({2, 3, 8, 8}, rng);
  EXPECT_EQ(mix(a, b, MixMask::filled(8, 8, 0)), a);
  EXPECT_EQ(mix(a, b, MixMask::filled(8, 8, 1)), b);
  const MixMask m = random_pixel_mask(8, 8, rng);
  EXPECT_EQ(mix(a, a, m), a);

  const LabelMap la = oracle::random_labels(2, 8, 8, 4, rng);
  const LabelMap lb = oracle::random_labels(2, 8, 8, 4, rng);
  EXPECT_EQ(mix(la, lb, MixMask::filled(8, 8, 0)), la);
  EXPECT_EQ(mix(la, lb, MixMask::filled(8, 8, 1)), lb);
  EXPECT_EQ(mix(la, la, m), la);
}

TEST(Mix, PerPixelSelectionAndComplement) {
  std::mt19937_64 rng(2);
  const Tensor a = oracle::random_tensor({1, 2, 8, 8}, rng);
  const Tensor b = oracle::random_tensor({1, 2, 8, 8}, rng);
  const MixMask m = random_pixel_mask(8, 8, rng);
  const Tensor ab = mix(a, b, m);
  const Tensor ba = mix(b, a, m);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x) {
        EXPECT_EQ(ab.at(0, c, y, x), m.at(y, x) ? b.at(0, c, y, x) : a.at(0, c, y, x));
        EXPECT_DOUBLE_EQ(ab.at(0, c, y, x) + ba.at(0, c, y, x), a.at(0, c, y, x) + b.at(0, c, y, x));
      }

  const LabelMap la = oracle::random_labels(1, 8, 8, 3, rng);
  const LabelMap lb = oracle::random_labels(1, 8, 8, 3, rng);
  const LabelMap lab = mix(la, lb, m);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(lab.at(0, y, x), m.at(y, x) ? lb.at(0, y, x) : la.at(0, y, x));
}

TEST(Mix, PerSampleMasks) {
  std::mt19937_64 rng(3);
  const Tensor a = oracle::random_tensor({2, 1, 8, 8}, rng);
  const Tensor b = oracle::random_tensor({2, 1, 8, 8}, rng);
  const std::vector<MixMask> masks = {MixMask::filled(8, 8, 0), MixMask::filled(8, 8, 1)};
  const Tensor out = mix(a, b, masks);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_EQ(out.at(0, 0, y, x), a.at(0, 0, y, x));
      EXPECT_EQ(out.at(1, 0, y, x), b.at(1, 0, y, x));
    }
  EXPECT_THROW(mix(a, b, std::span<const MixMask>(masks.data(), 1)), std::invalid_argument);
}

TEST(Mix, RejectsShapeMismatch) {
  std::mt19937_64 rng(4);
  const Tensor a = oracle::random_tensor({1, 1, 8, 8}, rng);
  const Tensor b = oracle::random_tensor({1, 1, 8, 16}, rng);
  EXPECT_THROW(mix(a, b, MixMask::filled(8, 8, 0)), std::invalid_argument);
  EXPECT_THROW(mix(a, a, MixMask::filled(16, 8, 0)), std::invalid_argument);
  EXPECT_THROW(MixMask::from_pixels(2, 2, {0, 1, 2, 0}), std::invalid_argument);
}

TEST(SampleMask, AreaBoundsOver1000Draws) {
  Rng rng = make_rng(42);
  for (const auto& [h, w] : {std::pair{64, 64}, std::pair{32, 48}, std::pair{8, 8}}) {
    const double area = static_cast<double>(h) * w;
    for (int i = 0; i < 1000; ++i) {
      const MixMask m = sample_mask(h, w, rng);
      ASSERT_EQ(m.rects().size(), 3u);
      for (const Rect& r : m.rects()) {
        const double ratio = r.area() / area;
        ASSERT_GE(ratio, 0.25) << h << "x" << w << " draw " << i;
        ASSERT_LE(ratio, 0.5) << h << "x" << w << " draw " << i;
        ASSERT_GE(r.x, 0);
        ASSERT_GE(r.y, 0);
        ASSERT_LE(r.x + r.w, w);
        ASSERT_LE(r.y + r.h, h);
      }
      const double cov = m.coverage();
      ASSERT_GE(cov, 0.25);
      ASSERT_LE(cov, 1.0);
      for (const auto v : m.pixels()) ASSERT_TRUE(v == 0 || v == 1);
    }
  }
}

TEST(SampleMask, MaskIsUnionOfRects) {
  Rng rng = make_rng(5);
  for (int i = 0; i < 50; ++i) {
    const MixMask m = sample_mask(32, 32, rng);
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        bool inside = false;
        for (const Rect& r : m.rects())
          inside = inside || (x >= r.x && x < r.x + r.w && y >= r.y && y < r.y + r.h);
        ASSERT_EQ(m.at(y, x), inside ? 1 : 0);
      }
  }
}

TEST(SampleMask, Deterministic) {
  Rng a = make_rng(9);
  Rng b = make_rng(9);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(sample_mask(64, 64, a), sample_mask(64, 64, b));
  EXPECT_THROW(sample_mask(4, 64, a), std::invalid_argument);
}
