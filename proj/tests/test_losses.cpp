#include <gtest/gtest.h>

#include <numeric>

#include "dueb/losses.hpp"
#include "oracles.hpp"

using namespace dueb;

namespace {

// Central differences of f over every entry of t.
template <typename F>
std::vector<double> numeric_grad(Tensor& t, F f, double h = 1e-4) {
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double orig = t.data()[i];
    t.data()[i] = orig + h;
    const double up = f();
    t.data()[i] = orig - h;
    const double down = f();
    t.data()[i] = orig;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

}  // namespace

TEST(CrossEntropy, NearPerfectAndUniform) {
  Tensor z({1, 4, 2, 2});
  LabelMap y(1, 2, 2);
  for (int i = 0; i < 4; ++i) {
    y[i] = i;
    z.at(0, i, i / 2, i % 2) = 10.0;
  }
  for (const double v : ce_pixelwise(z, y)) {
    EXPECT_LT(v, 1e-3);
    EXPECT_NEAR(v, std::log(1 + 3 * std::exp(-10.0)), 1e-12);
  }
  for (const double v : ce_pixelwise(Tensor({1, 4, 2, 2}, 0.3), y)) EXPECT_NEAR(v, std::log(4.0), 1e-12);
}

TEST(CrossEntropy, MatchesLoopOracleAndIgnoresMarker) {
  std::mt19937_64 rng(1);
  const Tensor z = oracle::random_tensor({2, 3, 4, 4}, rng);
  LabelMap y = oracle::random_labels(2, 4, 4, 3, rng);
  y.at(0, 1, 1) = 3;
  const auto ce = ce_pixelwise(z, y);
  for (int n = 0; n < 2; ++n)
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) {
        const double expect = y.at(n, r, c) == 3 ? 0.0 : oracle::ce(oracle::pixel(z, n, r, c), y.at(n, r, c));
        EXPECT_NEAR(ce[y.index(n, r, c)], expect, 1e-12);
      }
  y.at(1, 0, 0) = 4;
  EXPECT_THROW(ce_pixelwise(z, y), std::invalid_argument);
}

TEST(WeightedCe, UnitWeightsEqualMeanAndHalfIgnored) {
  std::mt19937_64 rng(2);
  const Tensor z = oracle::random_tensor({1, 3, 4, 4}, rng);
  LabelMap y = oracle::random_labels(1, 4, 4, 3, rng);
  const auto ce = ce_pixelwise(z, y);
  EXPECT_NEAR(weighted_pseudo_ce(z, y).value, std::accumulate(ce.begin(), ce.end(), 0.0) / 16, 1e-12);

  double kept = 0.0;
  for (int i = 0; i < 16; ++i) {
    if (i % 2) y[i] = 3;
    else kept += ce[i];
  }
  const LossValue half = weighted_pseudo_ce(z, y);
  EXPECT_EQ(half.valid_pixels, 8u);
  EXPECT_NEAR(half.value, kept / 8, 1e-12);
}

TEST(WeightedCe, WeightedLoopOracleAndAllIgnored) {
  std::mt19937_64 rng(3);
  const Tensor z = oracle::random_tensor({2, 4, 3, 3}, rng);
  LabelMap y = oracle::random_labels(2, 3, 3, 4, rng);
  y[4] = 4;
  y[11] = 4;
  const Tensor w = oracle::random_tensor({2, 1, 3, 3}, rng, 0.1, 1.0);
  double sum = 0.0;
  int valid = 0;
  for (int n = 0; n < 2; ++n)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        if (y.at(n, r, c) == 4) continue;
        sum += w.at(n, 0, r, c) * oracle::ce(oracle::pixel(z, n, r, c), y.at(n, r, c));
        ++valid;
      }
  EXPECT_NEAR(weighted_pseudo_ce(z, y, w).value, sum / valid, 1e-12);

  const LossValue none = weighted_pseudo_ce(z, LabelMap(2, 3, 3, 4), w);
  EXPECT_EQ(none.value, 0.0);
  EXPECT_TRUE(none.no_valid_pixels());
}

TEST(WeightedCe, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  Tensor z = oracle::random_tensor({1, 3, 2, 2}, rng);
  LabelMap y = oracle::random_labels(1, 2, 2, 3, rng);
  y[3] = 3;
  const Tensor w = oracle::random_tensor({1, 1, 2, 2}, rng, 0.2, 1.0);
  const LossValue v = weighted_pseudo_ce(z, y, w);
  const auto fd = numeric_grad(z, [&] { return weighted_pseudo_ce(z, y, w).value; });
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(v.d_logits.data()[i], fd[i], 1e-8);
}

TEST(Aleatoric, StraightLineOracleT3) {
  std::mt19937_64 rng(5);
  const Tensor z = oracle::random_tensor({1, 2, 2, 2}, rng);
  const Tensor var = oracle::random_tensor({1, 1, 2, 2}, rng, 0.05, 0.8);
  const LabelMap y = oracle::random_labels(1, 2, 2, 2, rng);
  Rng r = make_rng(77);
  const AleatoricNoise noise = draw_aleatoric_noise(z.shape(), 3, r);
  ASSERT_EQ(noise.z.size(), 3u);
  EXPECT_NEAR(aleatoric_loss(z, var, y, noise).value, oracle::aleatoric(z, var, y, noise.z), 1e-12);

  Rng a = make_rng(77);
  Rng b = make_rng(77);
  EXPECT_EQ(aleatoric_loss(z, var, y, 3, a).value, aleatoric_loss(z, var, y, 3, b).value);
}

TEST(Aleatoric, CollapsesToCeAtVarianceFloor) {
  std::mt19937_64 rng(6);
  for (const double s2 : {1e-6, 1e-4}) {
    const Tensor z = oracle::random_tensor({2, 4, 32, 32}, rng);
    const LabelMap y = oracle::random_labels(2, 32, 32, 4, rng);
    Rng r = make_rng(3);
    const double ale = aleatoric_loss(z, Tensor({2, 1, 32, 32}, s2), y, 10, r).value;
    const double ce = weighted_pseudo_ce(z, y).value;
    EXPECT_LT(std::abs(ale - ce), s2 == 1e-6 ? 1e-4 : 1e-2) << "var " << s2;
  }
}

TEST(Aleatoric, UniformLogitsLowerBound) {
  const Tensor z({1, 3, 2, 2}, 1.5);
  std::mt19937_64 rng(7);
  const Tensor var = oracle::random_tensor({1, 1, 2, 2}, rng, 0.1, 0.9);
  const LabelMap y = oracle::random_labels(1, 2, 2, 3, rng);
  Rng r = make_rng(1);
  const double v = aleatoric_loss(z, var, y, 5, r).value;
  const double min_var = *std::min_element(var.data().begin(), var.data().end());
  EXPECT_GE(v, std::exp(min_var) - 1.0);
}

TEST(Aleatoric, IgnoredPixelsDoNotMatter) {
  std::mt19937_64 rng(8);
  Tensor z = oracle::random_tensor({1, 3, 2, 2}, rng);
  const Tensor var = oracle::random_tensor({1, 1, 2, 2}, rng, 0.1, 0.5);
  LabelMap y = oracle::random_labels(1, 2, 2, 3, rng);
  y[0] = 3;
  Rng r = make_rng(2);
  const AleatoricNoise noise = draw_aleatoric_noise(z.shape(), 4, r);
  const double before = aleatoric_loss(z, var, y, noise).value;
  for (int c = 0; c < 3; ++c) z.at(0, c, 0, 0) += 5.0;
  EXPECT_EQ(aleatoric_loss(z, var, y, noise).value, before);
  EXPECT_EQ(weighted_pseudo_ce(z, y).value, weighted_pseudo_ce(z, y).value);
}

TEST(Aleatoric, RejectsBadArguments) {
  const Tensor z({1, 2, 2, 2});
  const LabelMap y(1, 2, 2);
  Rng r = make_rng(1);
  EXPECT_THROW(aleatoric_loss(z, Tensor({1, 1, 2, 2}, 0.1), y, 0, r), std::invalid_argument);
  EXPECT_THROW(aleatoric_loss(z, Tensor({1, 1, 2, 2}, 0.0), y, 2, r), std::invalid_argument);
}

TEST(Aleatoric, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor z = oracle::random_tensor({1, 2, 2, 2}, rng);
    Tensor var = oracle::random_tensor({1, 1, 2, 2}, rng, 0.1, 1.0);
    const LabelMap y = oracle::random_labels(1, 2, 2, 2, rng);
    Rng r = make_rng(100 + trial);
    const AleatoricNoise noise = draw_aleatoric_noise(z.shape(), 4, r);
    const LossValue v = aleatoric_loss(z, var, y, noise);
    auto f = [&] { return aleatoric_loss(z, var, y, noise).value; };
    const auto gz = numeric_grad(z, f);
    const auto gv = numeric_grad(var, f);
    for (std::size_t i = 0; i < gz.size(); ++i)
      EXPECT_LT(oracle::rel_err(v.d_logits.data()[i], gz[i]), 1e-3) << "logit " << i;
    for (std::size_t i = 0; i < gv.size(); ++i)
      EXPECT_LT(oracle::rel_err(v.d_variance.data()[i], gv[i]), 1e-3) << "variance " << i;
  }
}

TEST(Energy, ClosedForms) {
  const Tensor zero5 = log_sum_exp(Tensor({1, 5, 3, 3}));
  for (const double v : zero5.data()) EXPECT_NEAR(v, std::log(5.0), 1e-12);
  EXPECT_NEAR(energy_loss(Tensor({2, 5, 3, 3})).value, std::log(5.0), 1e-9);
  const Tensor flat = log_sum_exp(Tensor({1, 4, 2, 2}, 2.5));
  for (const double v : flat.data())
    EXPECT_NEAR(v, 2.5 + std::log(4.0), 1e-12);

  Tensor z({1, 3, 1, 1});
  z.at(0, 0, 0, 0) = 1.0;
  z.at(0, 1, 0, 0) = 2.0;
  z.at(0, 2, 0, 0) = 0.5;
  EXPECT_NEAR(log_sum_exp(z).data()[0], std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5)), 1e-12);
  EXPECT_NEAR(energy(z).data()[0], -log_sum_exp(z).data()[0], 0.0);
}

TEST(Energy, ShiftEquivarianceAndStability) {
  std::mt19937_64 rng(10);
  const Tensor z = oracle::random_tensor({1, 4, 3, 3}, rng);
  for (const double c : {-3.0, 0.5, 7.0}) {
    Tensor s = z;
    for (double& v : s.data()) v += c;
    const Tensor a = log_sum_exp(z);
    const Tensor b = log_sum_exp(s);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(b.data()[i] - a.data()[i], c, 1e-12);
  }
  const Tensor big({1, 3, 1, 1}, 1000.0);
  EXPECT_NEAR(log_sum_exp(big).data()[0], 1000.0 + std::log(3.0), 1e-9);
}

TEST(Energy, SignMaskAndGradient) {
  std::mt19937_64 rng(11);
  Tensor z = oracle::random_tensor({1, 2, 2, 2}, rng);
  const std::vector<std::uint8_t> valid = {1, 0, 1, 1};
  const LossValue pos = energy_loss(z, valid, +1);
  const LossValue neg = energy_loss(z, valid, -1);
  EXPECT_EQ(pos.value, -neg.value);
  EXPECT_EQ(pos.valid_pixels, 3u);
  double s = 0.0;
  for (int i : {0, 2, 3}) s += oracle::lse(oracle::pixel(z, 0, i / 2, i % 2));
  EXPECT_NEAR(pos.value, s / 3, 1e-12);

  for (const int sign : {+1, -1}) {
    const LossValue v = energy_loss(z, valid, sign);
    const auto fd = numeric_grad(z, [&] { return energy_loss(z, valid, sign).value; });
    for (std::size_t i = 0; i < fd.size(); ++i)
      EXPECT_LT(oracle::rel_err(v.d_logits.data()[i], fd[i]), 1e-3);
  }
  EXPECT_THROW(energy_loss(z, valid, 0), std::invalid_argument);
}

TEST(Combine, SumsAndScales) {
  const LossParts p{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
  LossConfig cfg;
  EXPECT_DOUBLE_EQ(combine(p, cfg).total, 28.0);

  LossConfig only_sup;
  only_sup.gamma_int = only_sup.gamma_uni = only_sup.gamma_ale = only_sup.gamma_e = 0.0;
  EXPECT_DOUBLE_EQ(combine(p, only_sup).total, 1.0);

  LossConfig twice = cfg;
  twice.gamma_e = 2.0;
  EXPECT_DOUBLE_EQ(combine(p, twice).total - 15.0, 2.0 * (combine(p, cfg).total - 15.0));

  LossConfig off = cfg;
  off.use_ale = false;
  off.use_energy = false;
  EXPECT_DOUBLE_EQ(combine(p, off).total, 6.0);
}

TEST(Combine, NamesNonFinitePart) {
  LossParts p{1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
  p.ale_p = std::nan("");
  try {
    combine(p, {});
    FAIL() << "expected LossError";
  } catch (const LossError& e) {
    EXPECT_EQ(e.part(), "ale_p");
  }
  p.ale_p = 0.0;
  p.e_c = INFINITY;
  EXPECT_THROW(combine(p, {}), LossError);
}
