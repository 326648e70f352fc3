#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "strucdiff/numeric.hpp"

namespace strucdiff {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Direct mixture density, summed without log-sum-exp.
double reference_nll(const GmmParams& p, double x) {
  double density = 0.0;
  for (int k = 0; k < p.size(); ++k) {
    const double z = (x - p.means[k]) / p.scales[k];
    density += p.weights[k] * std::exp(-0.5 * z * z) / (p.scales[k] * std::sqrt(2.0 * std::numbers::pi));
  }
  return -std::log(density);
}

GmmRaw random_raw(Rng& rng, int m) {
  GmmRaw raw;
  for (int k = 0; k < m; ++k) {
    raw.logits.push_back(rng.normal(0, 1.5));
    raw.means.push_back(rng.normal(0, 1));
    raw.scale_raw.push_back(rng.normal(-0.5, 1));
  }
  return raw;
}

TEST(Gmm, StandardNormalAtMode) { EXPECT_NEAR(gmm_nll(GmmParams{{1}, {0}, {1}}, 0.0), 0.918939, 1e-6); }

TEST(Gmm, KnownValues) {
  EXPECT_NEAR(gmm_nll(GmmParams{{1}, {0}, {1}}, 0.0), kHalfLog2Pi, 1e-12);
  EXPECT_NEAR(gmm_nll(GmmParams{{0.5, 0.5}, {-1, 1}, {1, 1}}, 0.0), 0.5 + kHalfLog2Pi, 1e-12);
  EXPECT_NEAR(gmm_nll(GmmParams{{0.3, 0.7}, {0, 0}, {1, 1}}, 1.7), gmm_nll(GmmParams{{1}, {0}, {1}}, 1.7), 1e-12);
}

TEST(Gmm, MatchesDirectDensityAndIsPermutationInvariant) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const GmmParams p = gmm_from_raw(random_raw(rng, 4));
    const double x = rng.normal(0, 1.5);
    EXPECT_NEAR(gmm_nll(p, x), reference_nll(p, x), 1e-10);
    GmmParams q = p;
    std::reverse(q.weights.begin(), q.weights.end());
    std::reverse(q.means.begin(), q.means.end());
    std::reverse(q.scales.begin(), q.scales.end());
    EXPECT_NEAR(gmm_nll(q, x), gmm_nll(p, x), 1e-12);
  }
}

TEST(Gmm, StableFarFromAllComponents) {
  const double v = gmm_nll(GmmParams{{0.5, 0.5}, {0, 1}, {1e-3, 1e-3}}, 50.0);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_GT(v, 1e8);
}

TEST(Gmm, RawGradientMatchesFiniteDifferences) {
  Rng rng(5);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    GmmRaw raw = random_raw(rng, 1 + trial % 5);
    const double x = rng.normal(0, 1);
    GmmGrad g;
    gmm_nll(raw, x, &g);
    auto check = [&](std::vector<double>& v, const std::vector<double>& analytic) {
      for (std::size_t k = 0; k < v.size(); ++k) {
        const double keep = v[k];
        v[k] = keep + h;
        const double up = gmm_nll(raw, x, nullptr);
        v[k] = keep - h;
        const double down = gmm_nll(raw, x, nullptr);
        v[k] = keep;
        const double fd = (up - down) / (2 * h);
        EXPECT_NEAR(analytic[k], fd, 1e-4 * std::max(1.0, std::abs(fd)));
      }
    };
    check(raw.logits, g.logits);
    check(raw.means, g.means);
    check(raw.scale_raw, g.scale_raw);
  }
}

TEST(Gmm, RawAndConstrainedAgree) {
  Rng rng(6);
  const GmmRaw raw = random_raw(rng, 3);
  const GmmParams p = gmm_from_raw(raw);
  EXPECT_NEAR(gmm_nll(raw, 0.3, nullptr), gmm_nll(p, 0.3), 1e-12);
  for (double s : p.scales) EXPECT_GE(s, kScaleFloor);
  double total = 0.0;
  for (double w : p.weights) total += w;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Gmm, ValidateRejectsBadParameters) {
  EXPECT_THROW((GmmParams{{0.5, 0.4}, {0, 0}, {1, 1}}.validate()), std::invalid_argument);
  EXPECT_THROW((GmmParams{{1}, {0}, {0}}.validate()), std::invalid_argument);
  EXPECT_THROW((GmmParams{{1}, {0, 1}, {1}}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((GmmParams{{0.25, 0.75}, {0, 1}, {1, 2}}.validate()));
}

TEST(Gmm, PointIsWeightedMean) {
  EXPECT_DOUBLE_EQ(gmm_point(GmmParams{{1}, {2.5}, {1}}), 2.5);
  EXPECT_DOUBLE_EQ(gmm_point(GmmParams{{0.5, 0.5}, {-1, 1}, {1, 1}}), 0.0);
  EXPECT_DOUBLE_EQ(gmm_point(GmmParams{{0.2, 0.8}, {0, 10}, {1, 1}}), 8.0);
}

TEST(Gmm, DegenerateComponentConcentrates) {
  Rng rng(7);
  const GmmParams p{{1}, {3}, {kScaleFloor}};
  double sum = 0, sq = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double s = gmm_sample(p, rng);
    sum += s;
    sq += s * s;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 3.0, 1e-3);
  EXPECT_LE(std::sqrt(sq / n - mean * mean), 2 * kScaleFloor);
}

TEST(Gmm, TwoModeSamplesAreBimodal) {
  Rng rng(8);
  const GmmParams p{{0.5, 0.5}, {-1, 1}, {0.1, 0.1}};
  const int n = 10000;
  double sum = 0;
  int centre = 0;
  for (int i = 0; i < n; ++i) {
    const double s = gmm_sample(p, rng);
    sum += s;
    centre += std::abs(s) <= 0.5;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.05);
  EXPECT_LT(static_cast<double>(centre) / n, 0.05);
}

TEST(Gmm, SamplingIsDeterministic) {
  const GmmParams p{{0.3, 0.7}, {0, 1}, {0.2, 0.4}};
  Rng a(9), b(9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(gmm_sample(p, a), gmm_sample(p, b));
}

TEST(Gmm, EmpiricalNllMatchesDifferentialEntropy) {
  // For a well-separated mixture the entropy is H(w) + sum_k w_k (1/2) ln(2 pi e s_k^2).
  const GmmParams p{{0.4, 0.6}, {-3, 3}, {0.5, 0.8}};
  double entropy = 0.0;
  for (int k = 0; k < 2; ++k)
    entropy += -p.weights[k] * std::log(p.weights[k]) +
               p.weights[k] * 0.5 * std::log(2 * std::numbers::pi * std::numbers::e * p.scales[k] * p.scales[k]);
  Rng rng(10);
  double total = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) total += gmm_nll(p, gmm_sample(p, rng));
  EXPECT_NEAR(total / n, entropy, 0.02 * std::abs(entropy));
}

TEST(UnitGaussian, ReducesToSquaredError) {
  double d = 0.0;
  EXPECT_NEAR(unit_gaussian_nll(0, 0, &d), kHalfLog2Pi, 1e-15);
  EXPECT_NEAR(unit_gaussian_nll(1, 0, &d), 0.5 + kHalfLog2Pi, 1e-15);
  EXPECT_NEAR(d, 1.0, 1e-15);
  // The minimizer over the mean is the target itself.
  const double x = 0.37;
  EXPECT_NEAR(unit_gaussian_nll(x, x, &d), kHalfLog2Pi, 1e-15);
  EXPECT_EQ(d, 0.0);
  EXPECT_NEAR(unit_gaussian_nll(0.2, 0.7), gmm_nll(GmmParams{{1}, {0.2}, {1}}, 0.7), 1e-12);
}

TEST(Embedding, PeriodicAtZero) {
  NumericEmbeddingConfig cfg;
  cfg.dim = 8;
  cfg.frequencies = {1.0, 2.0, 3.5, -4.0};
  const auto e = embed_numeric(0.0, cfg);
  ASSERT_EQ(e.size(), 8u);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(e[i], 0.0);
    EXPECT_EQ(e[4 + i], 1.0);
  }
  EXPECT_EQ(embed_numeric(0.7, cfg), embed_numeric(0.7, cfg));
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

TEST(Embedding, DiceSimilarityFallsWithDistance) {
  NumericEmbeddingConfig cfg;
  cfg.kind = NumericEmbeddingKind::dice;
  cfg.dim = 9;
  cfg.dice_min = -2.0;
  cfg.dice_max = 5.0;
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    double v[3] = {rng.uniform(-2, 5), rng.uniform(-2, 5), rng.uniform(-2, 5)};
    std::sort(v, v + 3);
    if (v[1] - v[0] < 1e-6 || v[2] - v[1] < 1e-6) continue;
    const auto ex = embed_numeric(v[0], cfg), ey = embed_numeric(v[1], cfg), ez = embed_numeric(v[2], cfg);
    EXPECT_GT(cosine(ex, ey), cosine(ex, ez));
    // Independent construction: similarity is the cosine of the angle gap.
    EXPECT_NEAR(cosine(ex, ez), std::cos(std::numbers::pi * (v[2] - v[0]) / 7.0), 1e-12);
  }
}

TEST(GmmRows, TapeGradientMatchesScalarGradient) {
  Rng rng(13);
  const int m = 3;
  Parameter head{"head", Tensor(2, 3 * m), {}, 1.0, true};
  for (double& v : head.value.data) v = rng.normal(0, 1);
  const std::vector<double> targets{0.2, -0.4};
  Tape tape;
  Var loss = ad::sum(ad::gmm_nll_rows(tape.param(head), targets, m, false));
  head.zero_grad();
  tape.backward(loss);
  double expected = 0.0;
  for (int r = 0; r < 2; ++r) {
    GmmRaw raw;
    for (int k = 0; k < m; ++k) {
      raw.logits.push_back(head.value(r, k));
      raw.means.push_back(head.value(r, m + k));
      raw.scale_raw.push_back(head.value(r, 2 * m + k));
    }
    GmmGrad g;
    expected += gmm_nll(raw, targets[static_cast<std::size_t>(r)], &g);
    for (int k = 0; k < m; ++k) {
      EXPECT_NEAR(head.grad(r, k), g.logits[k], 1e-12);
      EXPECT_NEAR(head.grad(r, m + k), g.means[k], 1e-12);
      EXPECT_NEAR(head.grad(r, 2 * m + k), g.scale_raw[k], 1e-12);
    }
  }
  EXPECT_NEAR(loss.scalar(), expected, 1e-12);
}

}  // namespace
}  // namespace strucdiff
