#pragma once

// Gaussian-smoothed finitely supported laws.
//
// A SmoothedScalar is X = S + Z with S an atom cloud and Z ~ N(0, tau)
// independent, so its density is an exact Gaussian mixture. A SmoothedPair
// is (X, Y) = (S + Z_S, T + Z_T) with paired atoms (s_i, t_i). Every
// functional downstream is computed on this representation.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "entclt/numeric.hpp"

namespace entclt {

/// Finitely supported probability law: sorted distinct atoms with positive weights.
class AtomCloud {
 public:
  AtomCloud(std::vector<double> atoms, std::vector<double> weights) {
    require(!atoms.empty(), "AtomCloud: atoms must be non-empty");
    require(atoms.size() == weights.size(), "AtomCloud: atoms/weights length mismatch");
    long double total = 0.0L;
    for (std::size_t i = 0; i < atoms.size(); ++i) {
      require_finite(atoms[i], "AtomCloud atom");
      require(std::isfinite(weights[i]) && weights[i] >= 0.0, "AtomCloud: weights must be finite and >= 0");
      total += weights[i];
    }
    require(std::fabs(static_cast<double>(total) - 1.0) <= 1e-12, "AtomCloud: weights must sum to 1");
    std::vector<std::size_t> order(atoms.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return atoms[a] < atoms[b]; });
    for (std::size_t k : order) {
      if (weights[k] == 0.0) continue;
      if (!atoms_.empty() && atoms_.back() == atoms[k]) {
        weights_.back() += weights[k];
      } else {
        atoms_.push_back(atoms[k]);
        weights_.push_back(weights[k]);
      }
    }
    require(!atoms_.empty(), "AtomCloud: all weights are zero");
  }

  static AtomCloud point(double at = 0.0) { return AtomCloud({at}, {1.0}); }

  /// Equal-weight cloud, e.g. Monte Carlo realizations. Duplicates merge.
  static AtomCloud empirical(std::span<const double> samples) {
    require(!samples.empty(), "AtomCloud: empty sample");
    const double w = 1.0 / static_cast<double>(samples.size());
    std::vector<double> a(samples.begin(), samples.end());
    std::sort(a.begin(), a.end());
    std::vector<double> atoms;
    std::vector<double> weights;
    std::size_t i = 0;
    while (i < a.size()) {
      std::size_t j = i;
      while (j < a.size() && a[j] == a[i]) ++j;
      atoms.push_back(a[i]);
      weights.push_back(static_cast<double>(j - i) * w);
      i = j;
    }
    return AtomCloud(std::move(atoms), std::move(weights));
  }

  [[nodiscard]] const std::vector<double>& atoms() const { return atoms_; }
  [[nodiscard]] const std::vector<double>& weights() const { return weights_; }
  [[nodiscard]] std::size_t size() const { return atoms_.size(); }
  [[nodiscard]] double min() const { return atoms_.front(); }
  [[nodiscard]] double max() const { return atoms_.back(); }

  [[nodiscard]] double mean() const {
    double m = 0.0;
    for (std::size_t i = 0; i < size(); ++i) m += weights_[i] * atoms_[i];
    return m;
  }
  [[nodiscard]] double variance() const {
    const double m = mean();
    double v = 0.0;
    for (std::size_t i = 0; i < size(); ++i) v += weights_[i] * (atoms_[i] - m) * (atoms_[i] - m);
    return v;
  }
  [[nodiscard]] double second_moment() const {
    double v = 0.0;
    for (std::size_t i = 0; i < size(); ++i) v += weights_[i] * atoms_[i] * atoms_[i];
    return v;
  }

 private:
  std::vector<double> atoms_;
  std::vector<double> weights_;
};

/// X = S + N(0, tau).
class SmoothedScalar {
 public:
  SmoothedScalar(AtomCloud cloud, double tau) : cloud_(std::move(cloud)), tau_(tau) {
    require(std::isfinite(tau) && tau > 0.0, "SmoothedScalar: tau must be > 0");
  }

  static SmoothedScalar gaussian(double var) { return {AtomCloud::point(0.0), var}; }

  [[nodiscard]] const AtomCloud& cloud() const { return cloud_; }
  [[nodiscard]] double tau() const { return tau_; }
  [[nodiscard]] double mean() const { return cloud_.mean(); }
  [[nodiscard]] double variance() const { return cloud_.variance() + tau_; }
  [[nodiscard]] double sd() const { return std::sqrt(variance()); }

 private:
  AtomCloud cloud_;
  double tau_;
};

/// (X, Y) = (S + N(0, tau_x), T + N(0, tau_y)) with paired atoms.
class SmoothedPair {
 public:
  SmoothedPair(std::vector<double> xs, std::vector<double> ys, std::vector<double> weights, double tau)
      : SmoothedPair(std::move(xs), std::move(ys), std::move(weights), tau, tau) {}

  // Unequal variances arise only from add_noise_first.
  SmoothedPair(std::vector<double> xs, std::vector<double> ys, std::vector<double> weights, double tau_x,
               double tau_y)
      : tau_x_(tau_x), tau_y_(tau_y) {
    require(std::isfinite(tau_x) && tau_x > 0.0 && std::isfinite(tau_y) && tau_y > 0.0,
            "SmoothedPair: tau must be > 0");
    require(!xs.empty(), "SmoothedPair: atoms must be non-empty");
    require(xs.size() == ys.size() && xs.size() == weights.size(), "SmoothedPair: length mismatch");
    long double total = 0.0L;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      require_finite(xs[i], "SmoothedPair atom");
      require_finite(ys[i], "SmoothedPair atom");
      require(std::isfinite(weights[i]) && weights[i] >= 0.0, "SmoothedPair: weights must be >= 0");
      total += weights[i];
    }
    require(std::fabs(static_cast<double>(total) - 1.0) <= 1e-12, "SmoothedPair: weights must sum to 1");
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return xs[a] < xs[b] || (xs[a] == xs[b] && ys[a] < ys[b]);
    });
    for (std::size_t k : order) {
      if (weights[k] == 0.0) continue;
      if (!xs_.empty() && xs_.back() == xs[k] && ys_.back() == ys[k]) {
        w_.back() += weights[k];
      } else {
        xs_.push_back(xs[k]);
        ys_.push_back(ys[k]);
        w_.push_back(weights[k]);
      }
    }
    require(!w_.empty(), "SmoothedPair: all weights are zero");
  }

  /// Equal-weight pair from paired samples.
  static SmoothedPair empirical(std::span<const double> xs, std::span<const double> ys, double tau) {
    require(xs.size() == ys.size() && !xs.empty(), "SmoothedPair: sample length mismatch");
    const double w = 1.0 / static_cast<double>(xs.size());
    return SmoothedPair(std::vector<double>(xs.begin(), xs.end()), std::vector<double>(ys.begin(), ys.end()),
                        std::vector<double>(xs.size(), w), tau);
  }

  /// Independent coupling of two clouds.
  static SmoothedPair product(const AtomCloud& s, const AtomCloud& t, double tau) {
    std::vector<double> xs;
    std::vector<double> ys;
    std::vector<double> w;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < t.size(); ++j) {
        xs.push_back(s.atoms()[i]);
        ys.push_back(t.atoms()[j]);
        w.push_back(s.weights()[i] * t.weights()[j]);
      }
    }
    // Products of weights may drift from 1 by a few ulps.
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    for (double& x : w) x /= total;
    return SmoothedPair(std::move(xs), std::move(ys), std::move(w), tau);
  }

  [[nodiscard]] const std::vector<double>& xs() const { return xs_; }
  [[nodiscard]] const std::vector<double>& ys() const { return ys_; }
  [[nodiscard]] const std::vector<double>& weights() const { return w_; }
  [[nodiscard]] std::size_t size() const { return w_.size(); }
  [[nodiscard]] double tau_x() const { return tau_x_; }
  [[nodiscard]] double tau_y() const { return tau_y_; }
  [[nodiscard]] bool equal_tau() const { return tau_x_ == tau_y_; }
  /// Common smoothing variance; throws if the coordinates differ.
  [[nodiscard]] double tau() const {
    require(equal_tau(), "SmoothedPair: operation needs equal smoothing on both coordinates");
    return tau_x_;
  }

  [[nodiscard]] SmoothedScalar marginal_x() const { return {AtomCloud(xs_, w_), tau_x_}; }
  [[nodiscard]] SmoothedScalar marginal_y() const { return {AtomCloud(ys_, w_), tau_y_}; }
  [[nodiscard]] SmoothedPair swapped() const { return {ys_, xs_, w_, tau_y_, tau_x_}; }

  /// Smallest K with max(E S^2, E T^2) <= K tau.
  [[nodiscard]] double moment_ratio() const {
    double sx = 0.0;
    double sy = 0.0;
    for (std::size_t i = 0; i < size(); ++i) {
      sx += w_[i] * xs_[i] * xs_[i];
      sy += w_[i] * ys_[i] * ys_[i];
    }
    return std::max(sx, sy) / tau();
  }

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
  std::vector<double> w_;
  double tau_x_;
  double tau_y_;
};

// ---------------------------------------------------------------------------
// Pointwise evaluation (log domain)

struct ScalarPoint {
  double log_p;
  double score;
};

inline ScalarPoint evaluate_point(const SmoothedScalar& X, double x) {
  require_finite(x, "evaluation point");
  const auto& a = X.cloud().atoms();
  const auto& w = X.cloud().weights();
  const double inv2t = 0.5 / X.tau();
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = x - a[i];
    m = std::max(m, std::log(w[i]) - d * d * inv2t);
  }
  double s0 = 0.0;
  double s1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = x - a[i];
    const double e = std::exp(std::log(w[i]) - d * d * inv2t - m);
    s0 += e;
    s1 += e * a[i];
  }
  const double posterior_mean = s1 / s0;
  return {m + std::log(s0) - 0.5 * (kLogTwoPi + std::log(X.tau())), -(x - posterior_mean) / X.tau()};
}

inline double log_density(const SmoothedScalar& X, double x) { return evaluate_point(X, x).log_p; }
inline double density(const SmoothedScalar& X, double x) { return std::exp(log_density(X, x)); }
/// rho(x) = p'(x)/p(x) with p'(x) = -sum_i w_i ((x - s_i)/tau) phi_tau(x - s_i).
inline double score(const SmoothedScalar& X, double x) { return evaluate_point(X, x).score; }
inline double density_derivative(const SmoothedScalar& X, double x) {
  const auto pt = evaluate_point(X, x);
  return std::exp(pt.log_p) * pt.score;
}

struct PairPoint {
  double log_p;
  double score1;
  double score2;
};

inline PairPoint evaluate_point(const SmoothedPair& P, double x, double y) {
  require_finite(x, "evaluation point");
  require_finite(y, "evaluation point");
  const auto& s = P.xs();
  const auto& t = P.ys();
  const auto& w = P.weights();
  const double ix = 0.5 / P.tau_x();
  const double iy = 0.5 / P.tau_y();
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double dx = x - s[i];
    const double dy = y - t[i];
    m = std::max(m, std::log(w[i]) - dx * dx * ix - dy * dy * iy);
  }
  double s0 = 0.0;
  double sx = 0.0;
  double sy = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double dx = x - s[i];
    const double dy = y - t[i];
    const double e = std::exp(std::log(w[i]) - dx * dx * ix - dy * dy * iy - m);
    s0 += e;
    sx += e * s[i];
    sy += e * t[i];
  }
  const double log_norm = kLogTwoPi + 0.5 * (std::log(P.tau_x()) + std::log(P.tau_y()));
  return {m + std::log(s0) - log_norm, -(x - sx / s0) / P.tau_x(), -(y - sy / s0) / P.tau_y()};
}

inline double pair_density(const SmoothedPair& P, double x, double y) { return std::exp(evaluate_point(P, x, y).log_p); }

/// Partial score d/dx_which log p(x, y), which in {1, 2}.
inline double pair_partial_score(const SmoothedPair& P, int which, double x, double y) {
  require(which == 1 || which == 2, "pair_partial_score: which must be 1 or 2");
  const auto pt = evaluate_point(P, x, y);
  return which == 1 ? pt.score1 : pt.score2;
}

// ---------------------------------------------------------------------------
// Closure operations

inline SmoothedScalar add_noise(const SmoothedScalar& X, double eps) {
  require(std::isfinite(eps) && eps > 0.0, "add_noise: eps must be > 0");
  return {X.cloud(), X.tau() + eps};
}

/// (X + Z, Y) with Z ~ N(0, eps) independent of everything.
inline SmoothedPair add_noise_first(const SmoothedPair& P, double eps) {
  require(std::isfinite(eps) && eps > 0.0, "add_noise_first: eps must be > 0");
  return {P.xs(), P.ys(), P.weights(), P.tau_x() + eps, P.tau_y()};
}

inline SmoothedScalar rescale(const SmoothedScalar& X, double c) {
  require(std::isfinite(c) && c != 0.0, "rescale: c must be finite and non-zero");
  std::vector<double> a = X.cloud().atoms();
  for (double& v : a) v *= c;
  return {AtomCloud(std::move(a), X.cloud().weights()), X.tau() * c * c};
}

/// Affine map to mean 0, variance 1.
inline SmoothedScalar standardize(const SmoothedScalar& X) {
  const double m = X.mean();
  const double sd = X.sd();
  std::vector<double> a = X.cloud().atoms();
  for (double& v : a) v = (v - m) / sd;
  return {AtomCloud(std::move(a), X.cloud().weights()), X.tau() / (sd * sd)};
}

/// Law of aX + bY: a Gaussian mixture with atoms a s_i + b t_i.
inline SmoothedScalar sum_law(const SmoothedPair& P, double a, double b) {
  require(std::isfinite(a) && std::isfinite(b) && (a != 0.0 || b != 0.0), "sum_law: (a, b) must not be (0, 0)");
  std::vector<double> atoms(P.size());
  for (std::size_t i = 0; i < P.size(); ++i) atoms[i] = a * P.xs()[i] + b * P.ys()[i];
  return {AtomCloud(std::move(atoms), P.weights()), a * a * P.tau_x() + b * b * P.tau_y()};
}

/// Score of aX + bY from its exact mixture law.
inline double sum_score(const SmoothedPair& P, double a, double b, double z) { return score(sum_law(P, a, b), z); }

/// Score of aX + bY as the conditional expectation E[rho^(1)(X,Y)/a | aX + bY = z],
/// evaluated by quadrature along the line {a x + b y = z}.
inline double sum_score_projection(const SmoothedPair& P, double a, double b, double z) {
  require(std::isfinite(a) && std::isfinite(b) && (a != 0.0 || b != 0.0),
          "sum_score_projection: (a, b) must not be (0, 0)");
  require_finite(z, "z");
  if (a == 0.0) return sum_score_projection(P.swapped(), b, a, z);
  const double tx = P.tau_x();
  const double ty = P.tau_y();
  double lo = *std::min_element(P.ys().begin(), P.ys().end());
  double hi = *std::max_element(P.ys().begin(), P.ys().end());
  if (b != 0.0) {
    for (double s : P.xs()) {
      lo = std::min(lo, (z - a * s) / b);
      hi = std::max(hi, (z - a * s) / b);
    }
  }
  const double sig = 1.0 / std::sqrt(1.0 / ty + (b * b) / (a * a * tx));
  lo -= 12.0 * std::sqrt(ty);
  hi += 12.0 * std::sqrt(ty);
  const int nodes = std::max(kDefaultNodes, static_cast<int>(std::ceil((hi - lo) / (0.25 * sig))) + 1);
  const GridSpec grid(lo, hi, nodes);
  std::vector<double> logits(static_cast<std::size_t>(nodes));
  std::vector<double> rho(static_cast<std::size_t>(nodes));
  for (int k = 0; k < nodes; ++k) {
    const double y = grid.node(k);
    const auto pt = evaluate_point(P, (z - b * y) / a, y);
    logits[static_cast<std::size_t>(k)] = std::log(grid.weight(k)) + pt.log_p;
    rho[static_cast<std::size_t>(k)] = pt.score1;
  }
  std::vector<double> post(logits.size());
  softmax(logits, post);
  double r = 0.0;
  for (std::size_t k = 0; k < post.size(); ++k) r += post[k] * rho[k];
  return r / a;
}

// ---------------------------------------------------------------------------
// Grid evaluation

/// Standard integration window: atoms +- 10 sd of the smoothing kernel, at
/// least `min_nodes` nodes and spacing no coarser than sd/4.
inline GridSpec standard_grid(double lo_atom, double hi_atom, double var, int min_nodes = kDefaultNodes,
                              double max_step_sd = 0.25) {
  const double sd = std::sqrt(var);
  const double lo = lo_atom - kWindowSigmas * sd;
  const double hi = hi_atom + kWindowSigmas * sd;
  const int needed = static_cast<int>(std::ceil((hi - lo) / (max_step_sd * sd))) + 1;
  constexpr int kCap = 1 << 22;
  if (needed > kCap) throw numeric_error("standard_grid: window growth exceeds node cap");
  return {lo, hi, std::max(min_nodes, needed)};
}

inline GridSpec standard_grid(const SmoothedScalar& X) { return standard_grid(X.cloud().min(), X.cloud().max(), X.tau()); }

/// Smaller grid for repeated scans: spacing sd/6, at least 256 nodes.
inline GridSpec compact_grid(const SmoothedScalar& X) {
  return standard_grid(X.cloud().min(), X.cloud().max(), X.tau(), 256, 1.0 / 6.0);
}

namespace detail {

/// Adds weight * phi_var(x_j - s) to out[j] (and the x-derivative to dout[j]
/// if non-empty) on the uniform grid x_j = x0 + j h, using a multiplicative
/// recurrence outward from the node nearest s.
inline void accumulate_kernel(double x0, double h, double s, double weight, double var, std::span<double> out,
                              std::span<double> dout) {
  const int n = static_cast<int>(out.size());
  const double c = weight / std::sqrt(kTwoPi * var);
  const int j0 = std::clamp(static_cast<int>(std::lround((s - x0) / h)), 0, n - 1);
  const double d0 = x0 + j0 * h - s;
  const double g0 = c * std::exp(-0.5 * d0 * d0 / var);
  if (g0 == 0.0) return;
  const double q = std::exp(-h * h / var);
  const bool deriv = !dout.empty();
  double g = g0;
  double r = std::exp(-(2.0 * d0 * h + h * h) / (2.0 * var));
  for (int j = j0; j < n && g != 0.0; ++j) {
    out[static_cast<std::size_t>(j)] += g;
    if (deriv) dout[static_cast<std::size_t>(j)] -= (x0 + j * h - s) / var * g;
    g *= r;
    r *= q;
  }
  g = g0 * std::exp(-(h * h - 2.0 * d0 * h) / (2.0 * var));
  r = std::exp(-(3.0 * h * h - 2.0 * d0 * h) / (2.0 * var));
  for (int j = j0 - 1; j >= 0 && g != 0.0; --j) {
    out[static_cast<std::size_t>(j)] += g;
    if (deriv) dout[static_cast<std::size_t>(j)] -= (x0 + j * h - s) / var * g;
    g *= r;
    r *= q;
  }
}

inline constexpr double kTinyDensity = 1e-290;

}  // namespace detail

/// Density and score of a SmoothedScalar at every node of a trapezoid grid.
struct GridValues {
  GridSpec grid;
  std::vector<double> x;
  std::vector<double> w;
  std::vector<double> p;
  std::vector<double> dp;
  std::vector<double> score;
  std::vector<double> log_p;
};

inline GridValues evaluate_on_grid(const SmoothedScalar& X, const GridSpec& grid) {
  require(grid.rule == Rule::trapezoid, "evaluate_on_grid: trapezoid grids only");
  GridValues v{grid, grid.nodes(), grid.weights(), {}, {}, {}, {}};
  const std::size_t n = v.x.size();
  v.p.assign(n, 0.0);
  v.dp.assign(n, 0.0);
  const auto& a = X.cloud().atoms();
  const auto& wt = X.cloud().weights();
  for (std::size_t i = 0; i < a.size(); ++i)
    detail::accumulate_kernel(grid.lower, grid.step(), a[i], wt[i], X.tau(), v.p, v.dp);
  v.score.resize(n);
  v.log_p.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    if (v.p[j] > detail::kTinyDensity) {
      v.score[j] = v.dp[j] / v.p[j];
      v.log_p[j] = std::log(v.p[j]);
    } else {
      const auto pt = evaluate_point(X, v.x[j]);
      v.log_p[j] = pt.log_p;
      v.score[j] = pt.score;
      v.p[j] = std::exp(pt.log_p);
      v.dp[j] = v.p[j] * pt.score;
    }
  }
  return v;
}

/// Joint density and partial scores on a common square grid.
struct PairGridValues {
  GridSpec grid;
  std::vector<double> x;  // shared by both axes
  std::vector<double> w;
  Eigen::MatrixXd p;      // p(i, j) = p(x_i, x_j)
  Eigen::MatrixXd rho1;
  Eigen::MatrixXd rho2;
  GridValues mx;          // marginal of X on the same nodes
  GridValues my;
};

inline GridSpec pair_grid(const SmoothedPair& P, int min_nodes = kDefaultPairNodes) {
  const auto [sx0, sx1] = std::minmax_element(P.xs().begin(), P.xs().end());
  const auto [ty0, ty1] = std::minmax_element(P.ys().begin(), P.ys().end());
  const double sd = std::sqrt(std::max(P.tau_x(), P.tau_y()));
  const double sd_min = std::sqrt(std::min(P.tau_x(), P.tau_y()));
  const double lo = std::min(*sx0, *ty0) - kWindowSigmas * sd;
  const double hi = std::max(*sx1, *ty1) + kWindowSigmas * sd;
  const int needed = static_cast<int>(std::ceil((hi - lo) / (sd_min / 3.0))) + 1;
  if (needed > 4096) throw numeric_error("pair_grid: window growth exceeds node cap");
  return {lo, hi, std::max(min_nodes, needed)};
}

inline PairGridValues evaluate_pair_on_grid(const SmoothedPair& P, const GridSpec& grid) {
  require(grid.rule == Rule::trapezoid, "evaluate_pair_on_grid: trapezoid grids only");
  const int n = grid.node_count;
  const double h = grid.step();
  PairGridValues v{grid, grid.nodes(), grid.weights(), {}, {}, {},
                   evaluate_on_grid(P.marginal_x(), grid), evaluate_on_grid(P.marginal_y(), grid)};
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd p1 = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd p2 = Eigen::MatrixXd::Zero(n, n);
  constexpr std::size_t kChunk = 1024;
  const std::size_t N = P.size();
  for (std::size_t start = 0; start < N; start += kChunk) {
    const std::size_t m = std::min(kChunk, N - start);
    Eigen::MatrixXd gx = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(m));
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(m));
    Eigen::MatrixXd gy = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(m));
    Eigen::MatrixXd dy = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(m));
    for (std::size_t k = 0; k < m; ++k) {
      const std::size_t i = start + k;
      const auto col = static_cast<Eigen::Index>(k);
      detail::accumulate_kernel(grid.lower, h, P.xs()[i], P.weights()[i], P.tau_x(),
                                std::span<double>(gx.col(col).data(), static_cast<std::size_t>(n)),
                                std::span<double>(dx.col(col).data(), static_cast<std::size_t>(n)));
      detail::accumulate_kernel(grid.lower, h, P.ys()[i], 1.0, P.tau_y(),
                                std::span<double>(gy.col(col).data(), static_cast<std::size_t>(n)),
                                std::span<double>(dy.col(col).data(), static_cast<std::size_t>(n)));
    }
    p.noalias() += gx * gy.transpose();
    p1.noalias() += dx * gy.transpose();
    p2.noalias() += gx * dy.transpose();
  }
  v.rho1.resize(n, n);
  v.rho2.resize(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      if (p(i, j) > detail::kTinyDensity) {
        v.rho1(i, j) = p1(i, j) / p(i, j);
        v.rho2(i, j) = p2(i, j) / p(i, j);
      } else {
        const auto pt = evaluate_point(P, v.x[static_cast<std::size_t>(i)], v.x[static_cast<std::size_t>(j)]);
        p(i, j) = std::exp(pt.log_p);
        v.rho1(i, j) = pt.score1;
        v.rho2(i, j) = pt.score2;
      }
    }
  }
  v.p = std::move(p);
  return v;
}

inline PairGridValues evaluate_pair_on_grid(const SmoothedPair& P) { return evaluate_pair_on_grid(P, pair_grid(P)); }

/// Score of aX + bY at every node pair (x_i, x_j) of a pair grid. When a == b
/// the arguments lie on a uniform lattice and are evaluated once each.
inline Eigen::MatrixXd sum_score_on_grid(const SmoothedPair& P, const PairGridValues& g, double a, double b) {
  const SmoothedScalar W = sum_law(P, a, b);
  const int n = g.grid.node_count;
  Eigen::MatrixXd r(n, n);
  if (b == 0.0 || a == 0.0) {
    const bool along_x = (b == 0.0);
    const double c = along_x ? a : b;
    for (int k = 0; k < n; ++k) {
      const double val = score(W, c * g.x[static_cast<std::size_t>(k)]);
      if (along_x) r.row(k).setConstant(val);
      else r.col(k).setConstant(val);
    }
    return r;
  }
  if (a == b && a > 0.0) {
    const double h = g.grid.step();
    GridSpec lattice(a * 2.0 * g.grid.lower, a * (2.0 * g.grid.lower + 2.0 * (n - 1) * h), 2 * n - 1);
    // Grid path only when the lattice resolves the mixture; otherwise pointwise.
    std::vector<double> vals(static_cast<std::size_t>(2 * n - 1));
    if (lattice.step() <= 0.5 * std::sqrt(W.tau())) {
      const auto gv = evaluate_on_grid(W, lattice);
      vals = gv.score;
    } else {
      for (int k = 0; k < 2 * n - 1; ++k) vals[static_cast<std::size_t>(k)] = score(W, lattice.node(k));
    }
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) r(i, j) = vals[static_cast<std::size_t>(i + j)];
    return r;
  }
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      r(i, j) = score(W, a * g.x[static_cast<std::size_t>(i)] + b * g.x[static_cast<std::size_t>(j)]);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization: two-column (atom, weight) CSV.

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_cloud_csv(const AtomCloud& c, std::ostream& os) {
  os << "atom,weight\n";
  for (std::size_t i = 0; i < c.size(); ++i) os << format_double(c.atoms()[i]) << ',' << format_double(c.weights()[i]) << '\n';
}

inline AtomCloud read_cloud_csv(std::istream& is) {
  std::string line;
  std::vector<double> atoms;
  std::vector<double> weights;
  if (!std::getline(is, line)) throw std::runtime_error("read_cloud_csv: empty input");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("read_cloud_csv: malformed row: " + line);
    atoms.push_back(std::stod(line.substr(0, comma)));
    weights.push_back(std::stod(line.substr(comma + 1)));
  }
  return {std::move(atoms), std::move(weights)};
}

}  // namespace entclt
