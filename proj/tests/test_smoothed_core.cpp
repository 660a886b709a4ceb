#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "entclt/smoothed_core.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace entclt;

namespace {

const AtomCloud kCoin({-1.0, 1.0}, {0.5, 0.5});

oracle::Mixture as_mixture(const SmoothedScalar& X) { return {X.cloud().atoms(), X.cloud().weights(), X.tau()}; }

oracle::Pair as_pair(const SmoothedPair& P) { return {P.xs(), P.ys(), P.weights(), P.tau()}; }

SmoothedPair comonotone(double tau = 1.0) { return {{-1.0, 1.0}, {-1.0, 1.0}, {0.5, 0.5}, tau}; }

}  // namespace

TEST(AtomCloud, Invariants) {
  EXPECT_THROW(AtomCloud({}, {}), std::domain_error);
  EXPECT_THROW(AtomCloud({0.0, 1.0}, {0.5, 0.6}), std::domain_error);
  EXPECT_THROW(AtomCloud({0.0, 1.0}, {1.5, -0.5}), std::domain_error);
  EXPECT_THROW(AtomCloud({NAN}, {1.0}), std::domain_error);
  EXPECT_NO_THROW(AtomCloud({0.0, 1.0}, {0.5, 0.5 + 5e-13}));
}

TEST(AtomCloud, DropsZeroWeightsAndMergesDuplicates) {
  const AtomCloud c({2.0, 0.0, 2.0, 5.0}, {0.25, 0.5, 0.25, 0.0});
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.atoms()[0], 0.0);
  EXPECT_EQ(c.atoms()[1], 2.0);
  EXPECT_DOUBLE_EQ(c.weights()[1], 0.5);
}

TEST(AtomCloud, EmpiricalMoments) {
  const std::vector<double> s{1.0, 2.0, 2.0, 3.0};
  const auto c = AtomCloud::empirical(s);
  EXPECT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c.mean(), 2.0);
  EXPECT_DOUBLE_EQ(c.variance(), 0.5);
  EXPECT_DOUBLE_EQ(c.second_moment(), 4.5);
}

TEST(AtomCloud, CsvRoundTrip) {
  const AtomCloud c({-0.1, 1.0 / 3.0, 7.25}, {0.2, 0.3, 0.5});
  std::stringstream ss;
  write_cloud_csv(c, ss);
  EXPECT_EQ(ss.str().substr(0, 12), "atom,weight\n");
  const auto back = read_cloud_csv(ss);
  EXPECT_EQ(back.atoms(), c.atoms());
  EXPECT_EQ(back.weights(), c.weights());
}

TEST(SmoothedScalar, VarianceIsCloudPlusTau) {
  const SmoothedScalar X(AtomCloud({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25}), 0.5);
  EXPECT_DOUBLE_EQ(X.variance(), X.cloud().variance() + 0.5);
  EXPECT_THROW(SmoothedScalar(kCoin, 0.0), std::domain_error);
}

TEST(Density, StandardNormalAtOrigin) {
  EXPECT_NEAR(density(SmoothedScalar(AtomCloud::point(), 1.0), 0.0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 1e-15);
}

TEST(Density, TwoAtomAtOrigin) {
  EXPECT_NEAR(density(SmoothedScalar(kCoin, 1.0), 0.0), 0.24197072451914337, 1e-15);
}

TEST(Density, FarTailStaysPositiveAndFinite) {
  const SmoothedScalar X(kCoin, 0.5);
  EXPECT_GT(density(X, 1.0 + 25.0 * std::sqrt(0.5)), 0.0);
  const double x = 1.0 + 40.0 * std::sqrt(0.5);
  EXPECT_NEAR(log_density(X, x), -0.5 * std::log(std::numbers::pi) - 1600.0 * 0.5 - std::log(2.0), 1e-9);
  EXPECT_TRUE(std::isfinite(score(X, 1e3)));
  EXPECT_NEAR(score(X, 1e3), -(1e3 - 1.0) / 0.5, 1e-6);
  EXPECT_THROW(density(X, INFINITY), std::domain_error);
}

TEST(Density, IntegratesToOne) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(1, c);
    const auto X = gen::scalar(g);
    const auto v = evaluate_on_grid(X, standard_grid(X));
    double m = 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < v.x.size(); ++i) {
      m += v.w[i] * v.p[i];
      s += v.w[i] * v.p[i] * v.score[i];
    }
    EXPECT_NEAR(m, 1.0, 1e-9) << "case " << c;
    EXPECT_NEAR(s, 0.0, 1e-9) << "case " << c;
  }
}

TEST(Score, GaussianIsLinear) {
  const SmoothedScalar X(AtomCloud::point(), 1.0);
  EXPECT_DOUBLE_EQ(score(X, 2.0), -2.0);
  EXPECT_DOUBLE_EQ(score(SmoothedScalar(AtomCloud::point(), 0.25), 1.0), -4.0);
}

TEST(Score, TwoAtomValues) {
  const SmoothedScalar X(kCoin, 1.0);
  EXPECT_NEAR(score(X, 0.0), 0.0, 1e-16);
  EXPECT_NEAR(score(X, 1.0), oracle::kScoreTwoAtomX1, 1e-14);
}

TEST(Score, MatchesBruteForceMixture) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(2, c);
    const auto X = gen::scalar(g);
    const auto m = as_mixture(X);
    for (double z : {-2.0, -0.3, 0.0, 0.7, 2.5}) {
      EXPECT_NEAR(score(X, z), oracle::score(m, z), 1e-10 * (1.0 + std::fabs(z) / X.tau())) << "case " << c;
      EXPECT_NEAR(density(X, z), static_cast<double>(oracle::density(m, z)), 1e-13) << "case " << c;
    }
  }
}

TEST(Score, GridMatchesPointwise) {
  const SmoothedScalar X(AtomCloud({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25}), 0.5);
  const auto v = evaluate_on_grid(X, standard_grid(X));
  for (std::size_t i = 0; i < v.x.size(); i += 97) {
    EXPECT_NEAR(v.score[i], score(X, v.x[i]), 1e-9 * (1.0 + std::fabs(v.score[i])));
    EXPECT_NEAR(v.log_p[i], log_density(X, v.x[i]), 1e-9);
  }
}

TEST(Score, FiniteDifferenceConsistency) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(3, c);
    const auto X = gen::scalar(g);
    const double h = 1e-5 * std::sqrt(X.tau());
    for (double u = -6.0; u <= 6.0; u += 0.5) {
      const double x = X.mean() + u * X.sd();
      const double fd = (density(X, x + h) - density(X, x - h)) / (2.0 * h);
      const double an = density_derivative(X, x);
      EXPECT_LE(std::fabs(fd - an), 1e-5 * std::fabs(an) + 1e-12) << "case " << c << " x " << x;
    }
  }
}

TEST(Score, OneDimensionalStein) {
  const SmoothedScalar X(AtomCloud({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25}), 0.5);
  const auto v = evaluate_on_grid(X, standard_grid(X));
  double r1 = 0.0;
  double r2 = 0.0;
  double r3 = 0.0;
  for (std::size_t i = 0; i < v.x.size(); ++i) {
    const double m = v.w[i] * v.p[i];
    const double x = v.x[i];
    r1 += m * (v.score[i] * x + 1.0);
    r2 += m * (v.score[i] * x * x + 2.0 * x);
    r3 += m * (v.score[i] * std::sin(x) + std::cos(x));
  }
  EXPECT_LT(std::fabs(r1), 1e-6);
  EXPECT_LT(std::fabs(r2), 1e-6);
  EXPECT_LT(std::fabs(r3), 1e-6);
}

TEST(PairDensity, Examples) {
  const SmoothedPair origin({0.0}, {0.0}, {1.0}, 1.0);
  EXPECT_NEAR(pair_density(origin, 0.0, 0.0), 1.0 / (2.0 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(pair_density(comonotone(), 0.0, 0.0), 0.05854983152431917, 1e-15);
  EXPECT_DOUBLE_EQ(pair_partial_score(origin, 1, 3.0, -5.0), -3.0);
  EXPECT_DOUBLE_EQ(pair_partial_score(origin, 2, 3.0, -5.0), 5.0);
}

TEST(PairDensity, IndependentFactorizes) {
  const AtomCloud three({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25});
  const auto P = SmoothedPair::product(kCoin, three, 0.7);
  const auto X = P.marginal_x();
  const auto Y = P.marginal_y();
  for (double x : {-2.0, 0.1, 1.3})
    for (double y : {-1.0, 0.0, 2.2}) {
      EXPECT_NEAR(pair_density(P, x, y), density(X, x) * density(Y, y), 1e-12);
      EXPECT_NEAR(pair_partial_score(P, 1, x, y), score(X, x), 1e-12);
      EXPECT_NEAR(pair_partial_score(P, 2, x, y), score(Y, y), 1e-12);
    }
}

TEST(PairDensity, PartialScoreMatchesFiniteDifferences) {
  const auto P = comonotone();
  EXPECT_NEAR(pair_partial_score(P, 2, 0.0, 1.0), oracle::fd_partial_score(as_pair(P), 2, 0.0, 1.0), 1e-6);
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(4, c);
    const auto Q = gen::pair(g);
    const auto o = oracle::Pair{Q.xs(), Q.ys(), Q.weights(), Q.tau()};
    for (int which : {1, 2})
      EXPECT_NEAR(pair_partial_score(Q, which, 0.4, -0.3), oracle::fd_partial_score(o, which, 0.4, -0.3),
                  1e-6 * (1.0 + 1.0 / Q.tau()))
          << "case " << c;
  }
}

TEST(PairDensity, SwapSymmetry) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(5, c);
    const auto P = gen::pair(g);
    const auto Q = P.swapped();
    EXPECT_NEAR(pair_density(P, 0.3, -1.1), pair_density(Q, -1.1, 0.3), 1e-15);
    EXPECT_NEAR(pair_partial_score(P, 1, 0.3, -1.1), pair_partial_score(Q, 2, -1.1, 0.3), 1e-12);
  }
}

TEST(PairDensity, GridNormalizationAndMarginals) {
  for (int c = 0; c < 12; ++c) {
    auto g = gen::engine_for(6, c);
    const auto P = gen::pair(g);
    const auto v = evaluate_pair_on_grid(P);
    double m = 0.0;
    double worst = 0.0;
    for (int i = 0; i < v.grid.node_count; ++i) {
      double row = 0.0;
      for (int j = 0; j < v.grid.node_count; ++j) {
        m += v.w[i] * v.w[j] * v.p(i, j);
        row += v.w[j] * v.p(i, j);
      }
      worst = std::max(worst, std::fabs(row - v.mx.p[i]));
    }
    EXPECT_NEAR(m, 1.0, 1e-7) << "case " << c;
    EXPECT_LT(worst, 1e-9) << "case " << c;
  }
}

TEST(PairDensity, JointLowerBoundHolds) {
  for (int c = 0; c < 12; ++c) {
    auto g = gen::engine_for(7, c);
    const auto P = gen::pair(g);
    const double K = P.moment_ratio();
    const auto v = evaluate_pair_on_grid(P);
    for (int i = 0; i < v.grid.node_count; i += 7)
      for (int j = 0; j < v.grid.node_count; j += 7) {
        const double lb = std::exp(-4.0 * K) / 4.0 * normal_pdf(v.x[i], P.tau() / 2.0) * normal_pdf(v.x[j], P.tau() / 2.0);
        ASSERT_GE(v.p(i, j), lb * (1.0 - 1e-12)) << "case " << c;
      }
  }
}

TEST(SumScore, IndependentGaussiansGiveStandardScore) {
  const auto P = SmoothedPair::product(AtomCloud::point(), AtomCloud::point(), 1.0);
  const double a = std::sqrt(0.5);
  for (double z : {-2.0, 0.0, 0.4, 3.0}) {
    EXPECT_NEAR(sum_score(P, a, a, z), -z, 1e-9);
    EXPECT_NEAR(sum_score_projection(P, a, a, z), -z, 1e-9);
  }
}

TEST(SumScore, DegenerateWeightIsMarginal) {
  const AtomCloud three({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25});
  const auto P = SmoothedPair::product(kCoin, three, 0.6);
  for (double z : {-1.0, 0.5}) {
    EXPECT_NEAR(sum_score(P, 1.0, 0.0, z), score(P.marginal_x(), z), 1e-12);
    EXPECT_NEAR(sum_score(P, 0.0, 1.0, z), score(P.marginal_y(), z), 1e-12);
  }
  EXPECT_THROW(sum_score(P, 0.0, 0.0, 1.0), std::domain_error);
}

TEST(SumScore, RoutesAgreeOnComonotonePair) {
  const auto P = comonotone();
  const double a = std::sqrt(0.5);
  EXPECT_NEAR(sum_score_projection(P, a, a, 0.5), oracle::kProjectionScoreComonotone, 1e-9);
  EXPECT_NEAR(sum_score(P, a, a, 0.5), oracle::kProjectionScoreComonotone, 1e-9);
}

TEST(SumScore, RoutesAgreeOnRandomPairs) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(8, c);
    const auto P = gen::pair(g);
    const double beta = gen::uniform(g, 0.05, 0.95);
    const double a = std::sqrt(beta);
    const double b = std::sqrt(1.0 - beta);
    const auto W = sum_law(P, a, b);
    for (double u = -6.0; u <= 6.0; u += 1.5) {
      const double z = W.mean() + u * W.sd();
      EXPECT_NEAR(sum_score(P, a, b, z), sum_score_projection(P, a, b, z), 1e-6) << "case " << c << " z " << z;
    }
  }
}

TEST(Transforms, AddNoise) {
  const SmoothedScalar X(kCoin, 1.0);
  const auto Y = add_noise(X, 0.5);
  EXPECT_DOUBLE_EQ(Y.tau(), 1.5);
  EXPECT_EQ(Y.cloud().atoms(), X.cloud().atoms());
  EXPECT_NEAR(Y.variance(), X.variance() + 0.5, 1e-12);
  EXPECT_THROW(add_noise(X, 0.0), std::domain_error);
  EXPECT_THROW(add_noise(X, -1.0), std::domain_error);
}

TEST(Transforms, AddNoiseMatchesConvolution) {
  const SmoothedScalar X(AtomCloud({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25}), 0.5);
  const double eps = 0.5;
  const auto Y = add_noise(X, eps);
  const auto m = as_mixture(X);
  for (double x : {-2.0, 0.0, 1.1, 3.0}) {
    const long double conv = oracle::trapezoid(
        [&](long double u) { return oracle::density(m, u) * oracle::phi(x - u, eps); }, -15.0L, 17.0L, 20001);
    EXPECT_NEAR(density(Y, x), static_cast<double>(conv), 1e-8);
  }
}

TEST(Transforms, RescaleScoreRelation) {
  const SmoothedScalar X(AtomCloud({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25}), 0.5);
  const auto same = rescale(X, 1.0);
  EXPECT_EQ(same.cloud().atoms(), X.cloud().atoms());
  EXPECT_EQ(same.tau(), X.tau());
  const double c = std::sqrt(0.25);
  const auto Y = rescale(X, c);
  EXPECT_NEAR(score(Y, 0.7), score(X, 0.7 / c) / c, 1e-12);
  const auto R = rescale(X, -1.0);
  EXPECT_NEAR(score(R, 0.7), -score(X, -0.7), 1e-12);
  EXPECT_THROW(rescale(X, 0.0), std::domain_error);
}

TEST(Transforms, StandardizeHasUnitVariance) {
  const SmoothedScalar X(AtomCloud({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25}), 0.5);
  const auto Z = standardize(X);
  EXPECT_NEAR(Z.variance(), 1.0, 1e-14);
  EXPECT_NEAR(Z.mean(), 0.0, 1e-15);
}

TEST(SmoothedPair, Validation) {
  EXPECT_THROW(SmoothedPair({0.0}, {0.0, 1.0}, {1.0}, 1.0), std::domain_error);
  EXPECT_THROW(SmoothedPair({0.0}, {0.0}, {1.0}, -1.0), std::domain_error);
  EXPECT_THROW(SmoothedPair({0.0, 1.0}, {0.0, 1.0}, {0.5, 0.4}, 1.0), std::domain_error);
  const auto P = add_noise_first(comonotone(), 0.5);
  EXPECT_FALSE(P.equal_tau());
  EXPECT_THROW((void)P.tau(), std::domain_error);
}

TEST(SmoothedPair, MarginalsMatchScalarConstruction) {
  const auto P = comonotone(0.8);
  const SmoothedScalar X(kCoin, 0.8);
  for (double x : {-2.0, 0.0, 0.5}) EXPECT_NEAR(density(P.marginal_x(), x), density(X, x), 1e-15);
}
