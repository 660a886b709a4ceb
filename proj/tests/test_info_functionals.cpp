#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "entclt/info_functionals.hpp"
#include "generators.hpp"
#include "oracles.hpp"

using namespace entclt;

namespace {

const AtomCloud kCoin({-1.0, 1.0}, {0.5, 0.5});
const AtomCloud kThree({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25});

SmoothedPair comonotone(double tau = 1.0) { return {{-1.0, 1.0}, {-1.0, 1.0}, {0.5, 0.5}, tau}; }
SmoothedPair anti_comonotone(double tau = 1.0) { return {{-1.0, 1.0}, {1.0, -1.0}, {0.5, 0.5}, tau}; }
SmoothedPair gaussian_pair(double tau = 1.0) {
  return SmoothedPair::product(AtomCloud::point(), AtomCloud::point(), tau);
}

oracle::Pair as_pair(const SmoothedPair& P) { return {P.xs(), P.ys(), P.weights(), P.tau()}; }

}  // namespace

TEST(Fisher, GaussianIsInverseVariance) {
  EXPECT_NEAR(fisher(SmoothedScalar::gaussian(2.0)), 0.5, 1e-10);
  EXPECT_NEAR(fisher_standardized(SmoothedScalar::gaussian(2.0)), 0.0, 1e-8);
}

TEST(Fisher, TwoAtomMatchesReference) {
  const SmoothedScalar X(kCoin, 1.0);
  EXPECT_NEAR(fisher(X), oracle::kFisherTwoAtomTau1, 1e-8);
  EXPECT_NEAR(fisher(X), oracle::fisher({{-1.0, 1.0}, {0.5, 0.5}, 1.0}), 1e-8);
  EXPECT_NEAR(fisher_standardized(X), oracle::kJstTwoAtomTau1, 1e-8);
}

TEST(Fisher, MatchesBruteForceQuadrature) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(20, c);
    const auto X = gen::scalar(g);
    const oracle::Mixture m{X.cloud().atoms(), X.cloud().weights(), X.tau()};
    EXPECT_NEAR(fisher(X), oracle::fisher(m), 1e-8 * (1.0 + 1.0 / X.tau())) << "case " << c;
  }
}

TEST(Fisher, CramerRaoAndNoiseMonotone) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(21, c);
    const auto X = gen::scalar(g);
    const double J = fisher(X);
    EXPECT_GE(J, 1.0 / X.variance() - 1e-8) << "case " << c;
    EXPECT_GE(fisher_standardized(X), -1e-8) << "case " << c;
    const double eps = gen::uniform(g, 0.01, 2.0);
    EXPECT_LE(fisher(add_noise(X, eps)), J + 1e-10) << "case " << c;
  }
}

TEST(RelativeEntropy, GaussianExamples) {
  EXPECT_NEAR(relent_direct(SmoothedScalar::gaussian(1.0)), 0.0, 1e-9);
  EXPECT_NEAR(relent_direct(SmoothedScalar::gaussian(2.0)), 0.0, 1e-9);
  // Without standardization, N(0, 2) against N(0, 1).
  EXPECT_NEAR(relent_to_standard(SmoothedScalar::gaussian(2.0)), oracle::kRelentGaussVar2, 1e-9);
}

TEST(RelativeEntropy, TwoAtomMatchesReference) {
  const SmoothedScalar X(kCoin, 0.5);
  EXPECT_NEAR(relent_direct(X), oracle::kRelentTwoAtomTauHalf, 1e-7);
}

TEST(RelativeEntropy, MatchesBruteForceAndIsNonnegative) {
  for (int c = 0; c < 20; ++c) {
    auto g = gen::engine_for(22, c);
    const auto X = gen::scalar(g);
    const double d = relent_direct(X);
    EXPECT_GE(d, -1e-10) << "case " << c;
    EXPECT_NEAR(d, oracle::relent({X.cloud().atoms(), X.cloud().weights(), X.tau()}), 1e-7) << "case " << c;
  }
}

TEST(DeBruijn, GaussianIsZero) {
  const auto r = relent_debruijn(SmoothedScalar::gaussian(1.0));
  EXPECT_NEAR(r.value, 0.0, 1e-6);
  EXPECT_FALSE(r.tail_warning);
}

TEST(DeBruijn, AgreesWithDirectOnTwoAtom) {
  const SmoothedScalar X(kCoin, 0.5);
  const auto r = relent_debruijn(X);
  EXPECT_NEAR(r.value, relent_direct(X), 1e-3);
  EXPECT_GE(r.min_defect, -1e-8);
  EXPECT_FALSE(r.tail_warning);
  EXPECT_LT(r.tail_bound, 1e-6);
  ASSERT_EQ(r.t.size(), 201u);
}

TEST(DeBruijn, Preconditions) {
  EXPECT_THROW(relent_debruijn(SmoothedScalar(kCoin, 1.0), 10.0), std::domain_error);
  EXPECT_THROW(relent_debruijn(SmoothedScalar(kCoin, 1.0), 100.0, 1), std::domain_error);
}

TEST(DeBruijn, AgreesOnRandomLaws) {
  for (int c = 0; c < 10; ++c) {
    auto g = gen::engine_for(23, c);
    const auto X = gen::scalar(g);
    const auto r = relent_debruijn(X);
    EXPECT_NEAR(r.value, relent_direct(X), 1e-3) << "case " << c;
    EXPECT_GE(r.min_defect, -1e-8) << "case " << c;
  }
}

TEST(JstBound, IsVarianceRatio) { EXPECT_DOUBLE_EQ(jst_smoothing_bound(2.0, 0.5), 4.0); }

TEST(Delta, IndependentGaussiansVanish) {
  for (double beta : {0.1, 0.5, 0.8}) EXPECT_NEAR(delta_functional(gaussian_pair(), beta), 0.0, 1e-8);
}

TEST(Delta, BetaOneVanishes) {
  EXPECT_NEAR(delta_functional(comonotone(), 1.0), 0.0, 1e-10);
  EXPECT_NEAR(delta_functional(comonotone(), 0.0), 0.0, 1e-10);
}

TEST(Delta, ComonotoneMatchesOracles) {
  EXPECT_NEAR(delta_functional(comonotone(), 0.5), oracle::kDeltaComonotoneHalf, 1e-6);
  EXPECT_NEAR(delta_functional(comonotone(), 0.5), oracle::delta(as_pair(comonotone()), 0.5, 1025), 1e-6);
}

TEST(Delta, MatchesBruteForceOnRandomPairs) {
  for (int c = 0; c < 6; ++c) {
    auto g = gen::engine_for(24, c);
    const auto P = gen::pair(g, 3);
    const double beta = gen::uniform(g, 0.1, 0.9);
    EXPECT_NEAR(delta_functional(P, beta), oracle::delta(as_pair(P), beta), 1e-6) << "case " << c;
  }
}

TEST(Delta, SwapSymmetry) {
  for (int c = 0; c < 10; ++c) {
    auto g = gen::engine_for(25, c);
    const auto P = gen::pair(g);
    const double beta = gen::uniform(g, 0.05, 0.95);
    EXPECT_NEAR(delta_functional(P, beta), delta_functional(P.swapped(), 1.0 - beta), 1e-8) << "case " << c;
  }
}

TEST(MFunction, VanishesWhenIndependentOrZeroWeights) {
  const auto P = SmoothedPair::product(kCoin, kThree, 0.7);
  for (double x : {-1.0, 0.3})
    for (double y : {0.0, 2.5}) EXPECT_NEAR(m_function(P, 0.6, 0.8, x, y), 0.0, 1e-10);
  EXPECT_EQ(m_function(comonotone(), 0.0, 0.0, 0.5, -0.5), 0.0);
}

TEST(MFunction, MatchesFiniteDifferences) {
  const auto P = comonotone();
  const auto o = as_pair(P);
  const double a = std::sqrt(0.5);
  const double x = 0.5;
  const double y = -0.5;
  const double rx = oracle::score(o.marginal_x(), x);
  const double ry = oracle::score(o.marginal_y(), y);
  const double want = a * (oracle::fd_partial_score(o, 1, x, y) - rx) + a * (oracle::fd_partial_score(o, 2, x, y) - ry);
  EXPECT_NEAR(m_function(P, a, a, x, y), want, 1e-6);
}

TEST(FisherDecomposition, IndependentGaussians) {
  const auto r = fishdecomp_check(gaussian_pair(), 0.5);
  EXPECT_NEAR(r.delta, 0.0, 1e-9);
  EXPECT_NEAR(r.cross_term, 0.0, 1e-9);
  EXPECT_NEAR(r.m_term, 0.0, 1e-9);
  EXPECT_LT(std::fabs(r.residual), 1e-9);
  EXPECT_NEAR(r.j_x, 1.0, 1e-9);
  EXPECT_NEAR(r.j_sum, 1.0, 1e-9);
}

TEST(FisherDecomposition, IndependentNonGaussianIsBlachmanStam) {
  const auto r = fishdecomp_check(SmoothedPair::product(kCoin, kThree, 0.8), 0.4);
  EXPECT_NEAR(r.m_term, 0.0, 1e-9);
  EXPECT_NEAR(r.cross_term, 0.0, 1e-9);
  EXPECT_LT(std::fabs(r.residual), 1e-6);
  EXPECT_NEAR(0.4 * r.j_x + 0.6 * r.j_y - r.j_sum, r.delta, 1e-6);
}

TEST(FisherDecomposition, ResidualSmallAcrossCorpus) {
  const std::vector<SmoothedPair> corpus{SmoothedPair::product(kCoin, kThree, 1.0), comonotone(), anti_comonotone(),
                                         SmoothedPair({-1.0, 0.0, 1.0, 2.0}, {0.0, 1.0, -1.0, 2.0},
                                                      {0.25, 0.25, 0.25, 0.25}, 0.5)};
  for (const auto& P : corpus)
    for (double beta : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const auto r = fishdecomp_check(P, beta);
      EXPECT_LT(std::fabs(r.residual), 1e-6);
      EXPECT_GE(r.delta, 0.0);
    }
  EXPECT_THROW(fishdecomp_check(comonotone(), 0.0), std::domain_error);
  EXPECT_THROW(fishdecomp_check(comonotone(), 1.0), std::domain_error);
}

TEST(FisherDecomposition, MarginalInformationsMatchScalar) {
  const auto P = comonotone(0.6);
  const auto r = fishdecomp_check(P, 0.3);
  EXPECT_NEAR(r.j_x, fisher(P.marginal_x()), 1e-8);
  EXPECT_NEAR(r.j_sum, fisher(sum_law(P, std::sqrt(0.3), std::sqrt(0.7))), 1e-8);
}

TEST(Stein2d, Catalog) {
  const auto P = comonotone();
  for (int which : {1, 2})
    for (auto f : kTestFunctionCatalog) EXPECT_LT(std::fabs(stein_residual_2d(P, which, f)), 1e-6) << to_string(f);
  // E rho_X(X) Y = 0 for independent coordinates.
  const auto Q = SmoothedPair::product(kCoin, kThree, 1.0);
  const PairQuadrature q(Q);
  const double cross = q.expect([&](int i, int j) { return q.values().rho1(i, j) * q.x(j); });
  EXPECT_NEAR(cross, 0.0, 1e-6);
  EXPECT_THROW(stein_residual_2d(P, 3, TestFunction::x), std::domain_error);
}

TEST(Theta, Examples) {
  EXPECT_NEAR(theta_seminorm(SmoothedScalar::gaussian(1.0), 1.0), 0.0, 1e-9);
  EXPECT_NEAR(theta_seminorm(SmoothedScalar::gaussian(0.3), 2.0), 0.0, 1e-9);
  EXPECT_NEAR(theta_seminorm_of([](double u) { return u * u; }, 1.0), 2.0 * 0.25, 1e-8);
  EXPECT_NEAR(theta_seminorm(SmoothedScalar(kCoin, 1.0), 1.0), oracle::kThetaTwoAtom, 1e-7);
  const SmoothedScalar X(kThree, 0.7);
  EXPECT_NEAR(theta_seminorm(X, 1.3), oracle::theta([&](double u) { return score(X, u); }, 1.3), 1e-7);
}

TEST(DeltaLowerBound, Examples) {
  EXPECT_NEAR(deltadom_lowerbound_check(gaussian_pair(), 0.5, 1.0), 0.0, 1e-9);
  const auto P = comonotone();
  const double K = P.moment_ratio();
  EXPECT_GE(deltadom_lowerbound_check(P, 0.5, K), 0.0);
  EXPECT_NEAR(deltadom_lowerbound_check(P, 0.0, K), delta_functional(P, 0.0), 1e-12);
  EXPECT_THROW(deltadom_lowerbound_check(P, 0.5, 0.1), std::domain_error);
}

TEST(DeltaLowerBound, RandomPairs) {
  for (int c = 0; c < 10; ++c) {
    auto g = gen::engine_for(26, c);
    const auto P = gen::pair(g);
    EXPECT_GE(deltadom_lowerbound_check(P, gen::uniform(g, 0.05, 0.95), P.moment_ratio()), -1e-8) << "case " << c;
    EXPECT_GE(joint_density_lower_bound_check(P, P.moment_ratio()), 0.0) << "case " << c;
  }
}

TEST(ScoreBounds, ConstantValue) {
  EXPECT_NEAR(c_tau_k(1.0, 2), std::sqrt(2.0) * 4.0 / std::numbers::e, 1e-15);
  EXPECT_NEAR(c_tau_k(1.0, 2), 2.0810403800915558, 1e-12);
  EXPECT_NEAR(score_moment_bound(1.0, 2), std::sqrt(std::sqrt(2.0) * 4.0 / std::numbers::e), 1e-15);
}

TEST(ScoreBounds, GaussianAndTwoAtom) {
  const auto g = SmoothedScalar::gaussian(1.0);
  const auto r = score_pointwise_bound_check(g, 2);
  EXPECT_LE(r.max_violation, 0.0);
  EXPECT_EQ(r.c_tau_k, c_tau_k(1.0, 2));
  const SmoothedScalar X(kCoin, 0.5);
  const double h = 10.0 * std::sqrt(0.5);
  const auto q = score_pointwise_bound_check(X, 4, GridSpec(-1.0 - h, 1.0 + h, 4096));
  EXPECT_LE(q.max_violation, 1e-10);
  EXPECT_LE(q.moment, q.moment_bound);
}

TEST(ScoreBounds, RandomLaws) {
  for (int c = 0; c < gen::kCases; ++c) {
    auto g = gen::engine_for(27, c);
    const auto X = gen::scalar(g);
    for (int k : {1, 2, 4}) {
      const auto r = score_pointwise_bound_check(X, k);
      EXPECT_LE(r.max_violation, 1e-10) << "case " << c << " k " << k;
      EXPECT_LE(r.moment, r.moment_bound * (1.0 + 1e-10)) << "case " << c << " k " << k;
    }
  }
}

TEST(ScoreL2Window, GaussianClosedForm) {
  const auto g = SmoothedScalar::gaussian(1.0);
  EXPECT_NEAR(scorel2_window_check(g, 2.0, 0.0), 192.0 - 16.0 / 3.0, 1e-6);
}

TEST(ScoreL2Window, TwoAtomAndEdge) {
  const SmoothedScalar X(kCoin, 1.0);
  EXPECT_GE(scorel2_window_check(X, 3.0, 1.0), 0.0);
  EXPECT_GE(scorel2_window_check(X, 1.0 + 1e-9, 1.0), 0.0);
  EXPECT_THROW(scorel2_window_check(X, 1.0, 1.0), std::domain_error);
  EXPECT_THROW(scorel2_window_check(X, 2.0, 0.5), std::domain_error);
}

TEST(WindowedTerms, IndependentPairHasNoDependenceTerms) {
  const auto P = SmoothedPair::product(kCoin, kThree, 1.0);
  const auto m = windowed_m_term_check(P, 0.5, 2.0, 0.0);
  EXPECT_NEAR(m.value, 0.0, 1e-12);
  const auto p = product_term_check(P, 2.0, 0.0);
  EXPECT_NEAR(p.value, 0.0, 1e-12);
}

TEST(WindowedTerms, ComonotoneBoundsHold) {
  const auto P = comonotone();
  for (double B : {1.5, 2.0, 3.0}) {
    EXPECT_GE(windowed_m_term_check(P, 0.5, B, 0.25).slack(), 0.0);
    EXPECT_GE(offwindow_tail_check(P, 0.5, B).slack(), 0.0);
    EXPECT_GE(product_term_check(P, B, 0.25).slack(), 0.0);
  }
}
