#pragma once

// Fisher information, relative entropy, and the decomposition functionals
// built on top of smoothed laws, with each identity and bound exposed as a
// residual or slack that can be checked numerically.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "entclt/numeric.hpp"
#include "entclt/smoothed_core.hpp"

namespace entclt {

// ---------------------------------------------------------------------------
// Scalar functionals

inline double fisher_on(const GridValues& v) {
  double j = 0.0;
  for (std::size_t i = 0; i < v.x.size(); ++i) j += v.w[i] * v.p[i] * v.score[i] * v.score[i];
  return j;
}

inline double fisher(const SmoothedScalar& X) {
  const auto v = evaluate_on_grid(X, standard_grid(X));
  double mass = 0.0;
  for (std::size_t i = 0; i < v.x.size(); ++i) mass += v.w[i] * v.p[i];
  if (std::fabs(mass - 1.0) > 1e-9) throw numeric_error("fisher: density mass on window is " + format_double(mass));
  return fisher_on(v);
}

/// sigma^2 J - 1; zero exactly for Gaussians.
inline double fisher_standardized(const SmoothedScalar& X) { return X.variance() * fisher(X) - 1.0; }

/// D(f || phi) against the standard normal, with no standardization.
inline double relent_to_standard(const SmoothedScalar& X) {
  const auto v = evaluate_on_grid(X, standard_grid(X));
  double d = 0.0;
  for (std::size_t i = 0; i < v.x.size(); ++i) {
    if (v.p[i] == 0.0) continue;
    d += v.w[i] * v.p[i] * (v.log_p[i] - log_normal_pdf(v.x[i], 1.0));
  }
  return d;
}

/// Relative entropy of the standardized law of X from N(0, 1).
inline double relent_direct(const SmoothedScalar& X) { return relent_to_standard(standardize(X)); }

struct DeBruijnResult {
  double value = 0.0;       // half the quadrature over [0, tau_max]
  double tail_bound = 0.0;  // rigorous bound on the omitted part over [tau_max, inf)
  bool tail_warning = false;
  double min_defect = 0.0;  // min over nodes of J(U + Z_t) - 1/(1 + t)
  std::vector<double> t;
  std::vector<double> jst;  // J_st(U + Z_t) at each node
};

/// Relative entropy through the integral of the Fisher-information defect
/// over added Gaussian noise, after standardizing X. Nodes are placed at
/// t = c (e^u - 1) with c the residual smoothing of the standardized law and
/// u uniform, integrated by Simpson over n_tau panels. The tail beyond
/// tau_max uses 1/J(A + B) >= 1/J(A) + 1/J(B), which gives
/// J_st(t) <= ((1 + t_m) - 1/J_m) / (1/J_m + t - t_m) and integrates to
/// log(1 + J_st(t_m)) / 2.
inline DeBruijnResult relent_debruijn(const SmoothedScalar& X, double tau_max = 100.0, int n_tau = 200) {
  require(tau_max >= 50.0, "relent_debruijn: tau_max must be >= 50");
  require(n_tau >= 2, "relent_debruijn: n_tau must be >= 2");
  const SmoothedScalar U = standardize(X);
  const double c = U.tau();
  const double u_max = std::log1p(tau_max / c);
  const double hu = u_max / n_tau;
  DeBruijnResult r;
  std::vector<double> integrand(static_cast<std::size_t>(n_tau) + 1);
  r.min_defect = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= n_tau; ++k) {
    const double t = (k == n_tau) ? tau_max : c * std::expm1(k * hu);
    const SmoothedScalar V = (t > 0.0) ? add_noise(U, t) : U;
    const double J = fisher_on(evaluate_on_grid(V, compact_grid(V)));
    const double defect = J - 1.0 / (1.0 + t);
    r.t.push_back(t);
    r.jst.push_back((1.0 + t) * J - 1.0);
    r.min_defect = std::min(r.min_defect, defect);
    integrand[static_cast<std::size_t>(k)] = defect * (t + c);
  }
  r.value = 0.5 * simpson(integrand, hu);
  r.tail_bound = 0.5 * std::log1p(std::max(0.0, r.jst.back()));
  r.tail_warning = r.tail_bound > 0.1 * std::fabs(r.value);
  return r;
}

/// Upper bound on J_st(V_n) from J(U + Z) <= J(Z) = 1/tau: (v_n / n) / tau.
inline double jst_smoothing_bound(double vn_over_n, double tau) { return vn_over_n / tau; }

// ---------------------------------------------------------------------------
// Pair functionals

/// Terms of the Fisher-information decomposition of sqrt(b) X + sqrt(1-b) Y.
struct DecompositionReport {
  double beta = 0.0;
  double j_x = 0.0;
  double j_y = 0.0;
  double j_sum = 0.0;
  double cross_term = 0.0;  // E rho_X(X) rho_Y(Y)
  double m_term = 0.0;      // E M(X, Y) rho~(W)
  double delta = 0.0;
  double residual = 0.0;    // LHS - RHS

  /// beta J(X) + (1-beta) J(Y) - J(W) - Delta.
  [[nodiscard]] double subadditivity_gap() const { return beta * j_x + (1.0 - beta) * j_y - j_sum - delta; }
  /// 2 sqrt(beta(1-beta)) E rho_X rho_Y + 2 E M rho~: the dependence-driven part.
  [[nodiscard]] double dependence_term() const {
    return 2.0 * std::sqrt(beta * (1.0 - beta)) * cross_term + 2.0 * m_term;
  }
};

enum class TestFunction { x, y, xy, x_squared, sin_sum };

inline const char* to_string(TestFunction f) {
  switch (f) {
    case TestFunction::x: return "x";
    case TestFunction::y: return "y";
    case TestFunction::xy: return "xy";
    case TestFunction::x_squared: return "x^2";
    case TestFunction::sin_sum: return "sin(x+y)";
  }
  return "?";
}

struct TestFunctionValue {
  double f;
  double d1;
  double d2;
};

inline TestFunctionValue eval_test_function(TestFunction f, double x, double y) {
  switch (f) {
    case TestFunction::x: return {x, 1.0, 0.0};
    case TestFunction::y: return {y, 0.0, 1.0};
    case TestFunction::xy: return {x * y, y, x};
    case TestFunction::x_squared: return {x * x, 2.0 * x, 0.0};
    case TestFunction::sin_sum: {
      const double c = std::cos(x + y);
      return {std::sin(x + y), c, c};
    }
  }
  return {0.0, 0.0, 0.0};
}

inline constexpr TestFunction kTestFunctionCatalog[] = {TestFunction::x, TestFunction::y, TestFunction::xy,
                                                        TestFunction::x_squared, TestFunction::sin_sum};

/// Two-dimensional trapezoid quadrature of a SmoothedPair, evaluated once and
/// reused across functionals.
class PairQuadrature {
 public:
  explicit PairQuadrature(const SmoothedPair& P, int min_nodes = kDefaultPairNodes)
      : P_(P), g_(evaluate_pair_on_grid(P, pair_grid(P, min_nodes))) {}
  PairQuadrature(const SmoothedPair& P, const GridSpec& grid) : P_(P), g_(evaluate_pair_on_grid(P, grid)) {}

  [[nodiscard]] const SmoothedPair& pair() const { return P_; }
  [[nodiscard]] const PairGridValues& values() const { return g_; }
  [[nodiscard]] int n() const { return g_.grid.node_count; }
  [[nodiscard]] double x(int i) const { return g_.x[static_cast<std::size_t>(i)]; }
  [[nodiscard]] double rho_x(int i) const { return g_.mx.score[static_cast<std::size_t>(i)]; }
  [[nodiscard]] double rho_y(int j) const { return g_.my.score[static_cast<std::size_t>(j)]; }
  /// Quadrature weight times joint density at (x_i, x_j).
  [[nodiscard]] double mass(int i, int j) const {
    return g_.w[static_cast<std::size_t>(i)] * g_.w[static_cast<std::size_t>(j)] * g_.p(i, j);
  }

  /// E f(X, Y) for f(i, j) on the node indices.
  template <class F>
  double expect(F&& f) const {
    double s = 0.0;
    for (int j = 0; j < n(); ++j)
      for (int i = 0; i < n(); ++i) s += mass(i, j) * f(i, j);
    return s;
  }

  [[nodiscard]] Eigen::MatrixXd sum_score(double a, double b) const { return sum_score_on_grid(P_, g_, a, b); }

  [[nodiscard]] DecompositionReport decomposition(double beta) const {
    require(beta >= 0.0 && beta <= 1.0, "decomposition: beta must be in [0, 1]");
    const double a = std::sqrt(beta);
    const double b = std::sqrt(1.0 - beta);
    const Eigen::MatrixXd rt = sum_score(a, b);
    DecompositionReport r;
    r.beta = beta;
    for (int j = 0; j < n(); ++j) {
      for (int i = 0; i < n(); ++i) {
        const double m = mass(i, j);
        const double rx = rho_x(i);
        const double ry = rho_y(j);
        const double rw = rt(i, j);
        const double M = a * (g_.rho1(i, j) - rx) + b * (g_.rho2(i, j) - ry);
        const double h = a * rx + b * ry - rw;
        r.j_x += m * rx * rx;
        r.j_y += m * ry * ry;
        r.j_sum += m * rw * rw;
        r.cross_term += m * rx * ry;
        r.m_term += m * M * rw;
        r.delta += m * h * h;
      }
    }
    const double lhs = beta * r.j_x + (1.0 - beta) * r.j_y - r.j_sum + 2.0 * a * b * r.cross_term + 2.0 * r.m_term;
    r.residual = lhs - r.delta;
    return r;
  }

  [[nodiscard]] double delta(double beta) const { return decomposition(beta).delta; }

  /// E rho^(which) f + E d_which f.
  [[nodiscard]] double stein_residual(int which, TestFunction f) const {
    require(which == 1 || which == 2, "stein_residual: which must be 1 or 2");
    return expect([&](int i, int j) {
      const auto tv = eval_test_function(f, x(i), x(j));
      const double rho = which == 1 ? g_.rho1(i, j) : g_.rho2(i, j);
      return rho * tv.f + (which == 1 ? tv.d1 : tv.d2);
    });
  }

 private:
  SmoothedPair P_;
  PairGridValues g_;
};

inline DecompositionReport fishdecomp_check(const SmoothedPair& P, double beta) {
  require(beta > 0.0 && beta < 1.0, "fishdecomp_check: beta must be in (0, 1)");
  return PairQuadrature(P).decomposition(beta);
}

/// Delta(X, Y, beta) = E(sqrt(b) rho_X + sqrt(1-b) rho_Y - rho~(W))^2.
inline double delta_functional(const SmoothedPair& P, double beta) { return PairQuadrature(P).delta(beta); }

/// M_{a,b}(x, y) = a (rho^(1) - rho_X) + b (rho^(2) - rho_Y).
inline double m_function(const SmoothedPair& P, double a, double b, double x, double y) {
  const auto pt = evaluate_point(P, x, y);
  return a * (pt.score1 - score(P.marginal_x(), x)) + b * (pt.score2 - score(P.marginal_y(), y));
}

inline double stein_residual_2d(const SmoothedPair& P, int which, TestFunction f) {
  return PairQuadrature(P).stein_residual(which, f);
}

/// inf_{a,b} E(f(Z) - a Z - b)^2 for Z ~ N(0, base_tau / 2).
template <class F>
double theta_seminorm_of(F&& f, double base_tau) {
  require(std::isfinite(base_tau) && base_tau > 0.0, "theta_seminorm: base_tau must be > 0");
  const double s = 0.5 * base_tau;
  const double sd = std::sqrt(s);
  const GridSpec grid(-12.0 * sd, 12.0 * sd, 4097);
  double m0 = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  double mz = 0.0;
  for (int k = 0; k < grid.node_count; ++k) {
    const double z = grid.node(k);
    const double w = grid.weight(k) * normal_pdf(z, s);
    const double v = f(z);
    m0 += w;
    m1 += w * v;
    m2 += w * v * v;
    mz += w * v * z;
  }
  m1 /= m0;
  m2 /= m0;
  mz /= m0;
  return (m2 - m1 * m1) - mz * mz / s;
}

inline double theta_seminorm(const SmoothedScalar& X, double base_tau) {
  return theta_seminorm_of([&](double z) { return score(X, z); }, base_tau);
}

inline void require_moment_bound(const SmoothedPair& P, double K) {
  require(std::isfinite(K) && K >= 0.0, "K must be finite and >= 0");
  require(P.moment_ratio() <= K * (1.0 + 1e-12) + 1e-15, "second moments exceed K tau");
}

/// Delta - beta(1-beta) e^{-8K}/32 (||rho_X||_Theta^2 + ||rho_Y||_Theta^2).
inline double deltadom_lowerbound_check(const SmoothedPair& P, double beta, double K) {
  require(beta >= 0.0 && beta <= 1.0, "deltadom_lowerbound_check: beta must be in [0, 1]");
  require_moment_bound(P, K);
  const double tau = P.tau();
  const double theta = theta_seminorm(P.marginal_x(), tau) + theta_seminorm(P.marginal_y(), tau);
  const double bound = beta * (1.0 - beta) * std::exp(-8.0 * K) / 32.0 * theta;
  return delta_functional(P, beta) - bound;
}

/// Log-ratio slack of p(x,y) >= e^{-4K}/4 phi_{tau/2}(x) phi_{tau/2}(y) over a
/// pair grid: min over nodes of log p - log bound (>= 0 when it holds).
inline double joint_density_lower_bound_check(const SmoothedPair& P, double K) {
  require_moment_bound(P, K);
  const double tau = P.tau();
  const GridSpec grid = pair_grid(P);
  double worst = std::numeric_limits<double>::infinity();
  const double c = -4.0 * K - std::log(4.0);
  // Sparse sweep: every fourth node keeps this O(n^2 N / 16).
  for (int j = 0; j < grid.node_count; j += 4) {
    for (int i = 0; i < grid.node_count; i += 4) {
      const double x = grid.node(i);
      const double y = grid.node(j);
      const double lp = evaluate_point(P, x, y).log_p;
      const double lb = c + log_normal_pdf(x, 0.5 * tau) + log_normal_pdf(y, 0.5 * tau);
      worst = std::min(worst, lp - lb);
    }
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Pointwise and L^2 score bounds

/// c_{tau,k} = sqrt(2) (2k / (tau e))^{k/2}.
inline double c_tau_k(double tau, int k) {
  return std::numbers::sqrt2 * std::pow(2.0 * k / (tau * std::numbers::e), 0.5 * k);
}

/// sqrt(2^{1/k} 2k / (tau e)).
inline double score_moment_bound(double tau, int k) {
  return std::sqrt(std::pow(2.0, 1.0 / k) * 2.0 * k / (tau * std::numbers::e));
}

struct ScoreBoundReport {
  int k = 1;
  double c_tau_k = 0.0;
  double max_violation = 0.0;  // max over grid of p|rho|^k - c p^{(2 tau)}
  double moment_bound = 0.0;
  double moment = 0.0;         // (E|rho|^k)^{1/k}
};

inline ScoreBoundReport score_pointwise_bound_check(const SmoothedScalar& X, int k, const GridSpec& grid) {
  require(k >= 1, "score_pointwise_bound_check: k must be >= 1");
  ScoreBoundReport r;
  r.k = k;
  r.c_tau_k = c_tau_k(X.tau(), k);
  r.moment_bound = score_moment_bound(X.tau(), k);
  const auto v = evaluate_on_grid(X, grid);
  const auto v2 = evaluate_on_grid(add_noise(X, X.tau()), grid);
  r.max_violation = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.x.size(); ++i) {
    const double a = std::fabs(v.score[i]);
    const double lhs = a == 0.0 ? 0.0 : std::exp(v.log_p[i] + k * std::log(a));
    r.max_violation = std::max(r.max_violation, lhs - r.c_tau_k * v2.p[i]);
  }
  const auto s = evaluate_on_grid(X, standard_grid(X));
  double m = 0.0;
  for (std::size_t i = 0; i < s.x.size(); ++i) m += s.w[i] * s.p[i] * std::pow(std::fabs(s.score[i]), k);
  r.moment = std::pow(m, 1.0 / k);
  return r;
}

inline ScoreBoundReport score_pointwise_bound_check(const SmoothedScalar& X, int k) {
  return score_pointwise_bound_check(X, k, standard_grid(X));
}

/// 8 B^3 (3 + 2K) / sqrt(tau) - int_{-B sqrt(tau)}^{B sqrt(tau)} rho^2.
inline double scorel2_window_check(const SmoothedScalar& X, double B, double K) {
  require(std::isfinite(B) && B > 1.0, "scorel2_window_check: B must be > 1");
  require(std::isfinite(K) && K >= 0.0, "scorel2_window_check: K must be >= 0");
  require(X.cloud().second_moment() <= K * X.tau() * (1.0 + 1e-12) + 1e-15,
          "scorel2_window_check: second moment exceeds K tau");
  const double half = B * std::sqrt(X.tau());
  const auto v = evaluate_on_grid(X, GridSpec(-half, half, kDefaultNodes + 1));
  double integral = 0.0;
  for (std::size_t i = 0; i < v.x.size(); ++i) integral += v.w[i] * v.score[i] * v.score[i];
  return 8.0 * B * B * B * (3.0 + 2.0 * K) / std::sqrt(X.tau()) - integral;
}

// ---------------------------------------------------------------------------
// Windowed bounds on the dependence terms

struct BoundCheck {
  double value = 0.0;
  double bound = 0.0;
  [[nodiscard]] double slack() const { return bound - value; }
};

namespace detail {

struct WindowSplit {
  double inside = 0.0;
  double total = 0.0;
  [[nodiscard]] double outside() const { return total - inside; }
};

/// E f over the square window |x|, |y| <= half and over the full plane.
template <class F>
WindowSplit split_expectation(const SmoothedPair& P, double half, int nodes, F&& f) {
  WindowSplit s;
  const PairQuadrature in(P, GridSpec(-half, half, 2 * nodes));
  s.inside = in.expect([&](int i, int j) { return f(in, i, j); });
  const PairQuadrature all(P, nodes);
  s.total = all.expect([&](int i, int j) { return f(all, i, j); });
  return s;
}

}  // namespace detail

/// |E M rho~(W) 1_{L_B}| <= alpha B^4 (a + b) 40 sqrt(2) (3 + 2K) / tau,
/// a = sqrt(beta), b = sqrt(1 - beta), W = aX + bY.
inline BoundCheck windowed_m_term_check(const SmoothedPair& P, double beta, double B, double alpha) {
  require(B >= 1.0, "windowed_m_term_check: B must be >= 1");
  const double tau = P.tau();
  const double K = P.moment_ratio();
  const double a = std::sqrt(beta);
  const double b = std::sqrt(1.0 - beta);
  const double half = B * std::sqrt(tau);
  const PairQuadrature in(P, GridSpec(-half, half, 2 * kDefaultPairNodes));
  const Eigen::MatrixXd rt = in.sum_score(a, b);
  const auto& g = in.values();
  BoundCheck c;
  c.value = std::fabs(in.expect([&](int i, int j) {
    const double M = a * (g.rho1(i, j) - in.rho_x(i)) + b * (g.rho2(i, j) - in.rho_y(j));
    return M * rt(i, j);
  }));
  c.bound = alpha * std::pow(B, 4) * (a + b) * 40.0 * std::numbers::sqrt2 * (3.0 + 2.0 * K) / tau;
  return c;
}

/// max_i |E rho^(i) rho~(W) 1_{L_B^c}| <= (2 sqrt2 / (e tau)) sqrt(pq) ((K+2)/B^2)^{1/p}, p = q = 2.
inline BoundCheck offwindow_tail_check(const SmoothedPair& P, double beta, double B) {
  require(B >= 1.0, "offwindow_tail_check: B must be >= 1");
  const double tau = P.tau();
  const double K = P.moment_ratio();
  const double a = std::sqrt(beta);
  const double b = std::sqrt(1.0 - beta);
  const double half = B * std::sqrt(tau);
  BoundCheck c;
  const PairQuadrature in(P, GridSpec(-half, half, 2 * kDefaultPairNodes));
  const PairQuadrature all(P);
  const Eigen::MatrixXd rin = in.sum_score(a, b);
  const Eigen::MatrixXd rall = all.sum_score(a, b);
  const auto& gi = in.values();
  const auto& ga = all.values();
  for (int which = 1; which <= 2; ++which) {
    const double inside =
        in.expect([&](int i, int j) { return (which == 1 ? gi.rho1(i, j) : gi.rho2(i, j)) * rin(i, j); });
    const double total =
        all.expect([&](int i, int j) { return (which == 1 ? ga.rho1(i, j) : ga.rho2(i, j)) * rall(i, j); });
    c.value = std::max(c.value, std::fabs(total - inside));
  }
  const double p = 2.0;
  const double q = 2.0;
  c.bound = 2.0 * std::numbers::sqrt2 / (std::numbers::e * tau) * std::sqrt(p * q) * std::pow((K + 2.0) / (B * B), 1.0 / p);
  return c;
}

/// |E rho_X rho_Y| <= 32 (3 + 2K)/(pi tau) B^4 alpha + int (p + p_X p_Y) |rho_X rho_Y| 1_{L_B^c}.
inline BoundCheck product_term_check(const SmoothedPair& P, double B, double alpha) {
  require(B >= 1.0, "product_term_check: B must be >= 1");
  const double tau = P.tau();
  const double K = P.moment_ratio();
  const double half = B * std::sqrt(tau);
  const auto split = detail::split_expectation(P, half, kDefaultPairNodes, [](const PairQuadrature& q, int i, int j) {
    return std::fabs(q.rho_x(i) * q.rho_y(j));
  });
  // Product-measure part: the marginals factorize, so use 1-D quadratures.
  const auto mx = evaluate_on_grid(P.marginal_x(), standard_grid(P.marginal_x()));
  const auto my = evaluate_on_grid(P.marginal_y(), standard_grid(P.marginal_y()));
  auto abs_moment = [](const GridValues& v, double h, bool inside) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.x.size(); ++i)
      if ((std::fabs(v.x[i]) <= h) == inside) s += v.w[i] * v.p[i] * std::fabs(v.score[i]);
    return s;
  };
  const double ex = abs_moment(mx, half, true) + abs_moment(mx, half, false);
  const double ey = abs_moment(my, half, true) + abs_moment(my, half, false);
  const double product_outside = ex * ey - abs_moment(mx, half, true) * abs_moment(my, half, true);
  const PairQuadrature all(P);
  BoundCheck c;
  c.value = std::fabs(all.expect([&](int i, int j) { return all.rho_x(i) * all.rho_y(j); }));
  c.bound = 32.0 * (3.0 + 2.0 * K) / (std::numbers::pi * tau) * std::pow(B, 4) * alpha + split.outside() + product_outside;
  return c;
}

}  // namespace entclt
