#pragma once

// Dependence coefficients: exact alpha for finite joint laws, rectangle
// estimates from samples, cell reductions of smoothed pairs, and delta_n.

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "entclt/numeric.hpp"
#include "entclt/smoothed_core.hpp"

namespace entclt {

inline constexpr int kMaxEnumStates = 16;

/// Joint law of two finitely valued variables.
class FiniteJointLaw {
 public:
  FiniteJointLaw(std::vector<double> row_states, std::vector<double> col_states, Eigen::MatrixXd probs)
      : rows_(std::move(row_states)), cols_(std::move(col_states)), probs_(std::move(probs)) {
    require(!rows_.empty() && !cols_.empty(), "FiniteJointLaw: empty state list");
    require(probs_.rows() == static_cast<Eigen::Index>(rows_.size()) &&
                probs_.cols() == static_cast<Eigen::Index>(cols_.size()),
            "FiniteJointLaw: shape mismatch");
    long double total = 0.0L;
    for (Eigen::Index j = 0; j < probs_.cols(); ++j)
      for (Eigen::Index i = 0; i < probs_.rows(); ++i) {
        const double v = probs_(i, j);
        require(std::isfinite(v) && v >= 0.0, "FiniteJointLaw: probabilities must be >= 0");
        total += v;
      }
    require(std::fabs(static_cast<double>(total) - 1.0) <= 1e-12, "FiniteJointLaw: probabilities must sum to 1");
  }

  static FiniteJointLaw product(std::vector<double> rs, const std::vector<double>& p, std::vector<double> cs,
                                const std::vector<double>& q) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(p.size()), static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < q.size(); ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = p[i] * q[j];
    m /= m.sum();
    return {std::move(rs), std::move(cs), std::move(m)};
  }

  [[nodiscard]] const std::vector<double>& row_states() const { return rows_; }
  [[nodiscard]] const std::vector<double>& col_states() const { return cols_; }
  [[nodiscard]] const Eigen::MatrixXd& probs() const { return probs_; }
  [[nodiscard]] Eigen::VectorXd row_marginal() const { return probs_.rowwise().sum(); }
  [[nodiscard]] Eigen::VectorXd col_marginal() const { return probs_.colwise().sum().transpose(); }
  [[nodiscard]] FiniteJointLaw transposed() const { return {cols_, rows_, probs_.transpose()}; }

 private:
  std::vector<double> rows_;
  std::vector<double> cols_;
  Eigen::MatrixXd probs_;
};

/// CSV matrix: header row "<label>,c_1,...,c_m", then rows "r_i,p_i1,...,p_im".
inline FiniteJointLaw read_joint_law_csv(std::istream& is) {
  auto split = [](const std::string& line) {
    std::vector<double> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
  };
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_joint_law_csv: empty input");
  const auto comma = line.find(',');
  if (comma == std::string::npos) throw std::runtime_error("read_joint_law_csv: malformed header");
  std::vector<double> cols = split(line.substr(comma + 1));
  std::vector<double> rows;
  std::vector<std::vector<double>> cells;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto v = split(line);
    if (v.size() != cols.size() + 1) throw std::runtime_error("read_joint_law_csv: ragged row");
    rows.push_back(v.front());
    cells.emplace_back(v.begin() + 1, v.end());
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cells[i][j];
  return {std::move(rows), std::move(cols), std::move(m)};
}

inline void write_joint_law_csv(const FiniteJointLaw& law, std::ostream& os) {
  os << "state";
  for (double c : law.col_states()) os << ',' << format_double(c);
  os << '\n';
  for (std::size_t i = 0; i < law.row_states().size(); ++i) {
    os << format_double(law.row_states()[i]);
    for (std::size_t j = 0; j < law.col_states().size(); ++j)
      os << ',' << format_double(law.probs()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    os << '\n';
  }
}

/// Finite law of the atoms (S, T) of a pair.
inline FiniteJointLaw joint_law_of(const SmoothedPair& P) {
  std::map<double, int> ri;
  std::map<double, int> ci;
  for (double x : P.xs()) ri.emplace(x, 0);
  for (double y : P.ys()) ci.emplace(y, 0);
  std::vector<double> rs;
  std::vector<double> cs;
  for (auto& [k, v] : ri) {
    v = static_cast<int>(rs.size());
    rs.push_back(k);
  }
  for (auto& [k, v] : ci) {
    v = static_cast<int>(cs.size());
    cs.push_back(k);
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(cs.size()));
  for (std::size_t k = 0; k < P.size(); ++k) m(ri[P.xs()[k]], ci[P.ys()[k]]) += P.weights()[k];
  return {std::move(rs), std::move(cs), std::move(m)};
}

/// sup_{A,B} |P(A x B) - P(A) P(B)| by enumerating row subsets A. For fixed
/// A the best B collects the columns where P(A x {j}) - P(A) q_j has one
/// sign, and both signs give the same total, half the absolute sum.
inline double alpha_exact(const FiniteJointLaw& law) {
  const auto r = static_cast<int>(law.row_states().size());
  const auto c = static_cast<int>(law.col_states().size());
  if (r > kMaxEnumStates || c > kMaxEnumStates)
    throw capacity_error("alpha_exact: more than 16 states on an axis");
  if (r > c) return alpha_exact(law.transposed());
  const Eigen::MatrixXd& P = law.probs();
  const Eigen::VectorXd q = law.col_marginal();
  const Eigen::VectorXd p = law.row_marginal();
  // Gray-code walk so each step adds or removes one row.
  Eigen::VectorXd joint = Eigen::VectorXd::Zero(c);
  double pa = 0.0;
  double best = 0.0;
  const std::uint32_t total = 1u << r;
  std::uint32_t prev = 0;
  for (std::uint32_t k = 1; k < total; ++k) {
    const std::uint32_t g = k ^ (k >> 1);
    const std::uint32_t diff = g ^ prev;
    const int row = std::countr_zero(diff);
    const double sign = (g & diff) ? 1.0 : -1.0;
    joint += sign * P.row(row).transpose();
    pa += sign * p(row);
    prev = g;
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::fabs(joint(j) - pa * q(j));
    best = std::max(best, 0.5 * s);
  }
  return std::min(best, 0.25);
}

inline constexpr std::size_t kMinRectangleSamples = 1000;

/// Lower estimate of alpha over half-line events (-inf, a] x (-inf, b] with
/// thresholds at the nodes of grid_x and grid_y.
inline double alpha_estimate_rectangles(std::span<const double> xs, std::span<const double> ys, const GridSpec& grid_x,
                                        const GridSpec& grid_y) {
  require(xs.size() == ys.size(), "alpha_estimate_rectangles: length mismatch");
  if (xs.size() < kMinRectangleSamples) throw capacity_error("alpha_estimate_rectangles: need at least 1000 samples");
  const int gx = grid_x.node_count;
  const int gy = grid_y.node_count;
  if (static_cast<long long>(gx) * gy > (1LL << 24)) throw capacity_error("alpha_estimate_rectangles: grid too fine");
  const auto tx = grid_x.nodes();
  const auto ty = grid_y.nodes();
  // counts(i, j): samples whose first threshold at or above (x, y) is (i, j).
  std::vector<std::int64_t> counts(static_cast<std::size_t>(gx + 1) * static_cast<std::size_t>(gy + 1), 0);
  const std::size_t stride = static_cast<std::size_t>(gy) + 1;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const auto bx = static_cast<std::size_t>(std::lower_bound(tx.begin(), tx.end(), xs[k]) - tx.begin());
    const auto by = static_cast<std::size_t>(std::lower_bound(ty.begin(), ty.end(), ys[k]) - ty.begin());
    ++counts[bx * stride + by];
  }
  // Prefix sums: F(i, j) = #{x <= t_i, y <= t_j}.
  for (std::size_t i = 0; i <= static_cast<std::size_t>(gx); ++i)
    for (std::size_t j = 1; j <= static_cast<std::size_t>(gy); ++j) counts[i * stride + j] += counts[i * stride + j - 1];
  for (std::size_t i = 1; i <= static_cast<std::size_t>(gx); ++i)
    for (std::size_t j = 0; j <= static_cast<std::size_t>(gy); ++j) counts[i * stride + j] += counts[(i - 1) * stride + j];
  const double n = static_cast<double>(xs.size());
  double best = 0.0;
  for (std::size_t i = 0; i < static_cast<std::size_t>(gx); ++i) {
    const double fx = static_cast<double>(counts[i * stride + static_cast<std::size_t>(gy)]) / n;
    for (std::size_t j = 0; j < static_cast<std::size_t>(gy); ++j) {
      const double fy = static_cast<double>(counts[static_cast<std::size_t>(gx) * stride + j]) / n;
      const double f = static_cast<double>(counts[i * stride + j]) / n;
      best = std::max(best, std::fabs(f - fx * fy));
    }
  }
  return best;
}

inline double alpha_estimate_rectangles(std::span<const double> xs, std::span<const double> ys, const GridSpec& grid) {
  return alpha_estimate_rectangles(xs, ys, grid, grid);
}

/// Grid spanning the sample range with 257 nodes per axis.
inline double alpha_estimate_rectangles(std::span<const double> xs, std::span<const double> ys) {
  require(!xs.empty() && xs.size() == ys.size(), "alpha_estimate_rectangles: length mismatch");
  auto span_of = [](std::span<const double> v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    const double pad = std::max(1e-9, 1e-9 * (*hi - *lo));
    return GridSpec(*lo - pad, *hi + pad, 257);
  };
  return alpha_estimate_rectangles(xs, ys, span_of(xs), span_of(ys));
}

enum class MixingMethod { exact_enumeration, rectangle_estimate, grid_cell };

inline const char* to_string(MixingMethod m) {
  switch (m) {
    case MixingMethod::exact_enumeration: return "exact-enumeration";
    case MixingMethod::rectangle_estimate: return "rectangle-estimate";
    case MixingMethod::grid_cell: return "grid-cell";
  }
  return "?";
}

struct MixingReport {
  double alpha = 0.0;
  double delta4 = std::numeric_limits<double>::quiet_NaN();
  MixingMethod method = MixingMethod::grid_cell;
  double cell_error_bound = 0.0;
};

namespace detail {

inline double marginal_cdf(const SmoothedScalar& X, double x) {
  const double sd = std::sqrt(X.tau());
  double s = 0.0;
  for (std::size_t i = 0; i < X.cloud().size(); ++i) s += X.cloud().weights()[i] * normal_cdf((x - X.cloud().atoms()[i]) / sd);
  return s;
}

inline double marginal_quantile(const SmoothedScalar& X, double u) {
  const double sd = std::sqrt(X.tau());
  double lo = X.cloud().min() - 40.0 * sd;
  double hi = X.cloud().max() + 40.0 * sd;
  for (int it = 0; it < 200 && hi - lo > 1e-13 * (1.0 + std::fabs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (marginal_cdf(X, mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Edges at the k / cells quantiles, with +-inf at the ends.
inline std::vector<double> quantile_edges(const SmoothedScalar& X, int cells) {
  std::vector<double> e(static_cast<std::size_t>(cells) + 1);
  e.front() = -std::numeric_limits<double>::infinity();
  e.back() = std::numeric_limits<double>::infinity();
  for (int k = 1; k < cells; ++k) e[static_cast<std::size_t>(k)] = marginal_quantile(X, static_cast<double>(k) / cells);
  return e;
}

inline std::vector<double> cell_probs(double atom, double sd, const std::vector<double>& edges) {
  std::vector<double> out(edges.size() - 1);
  double prev = 0.0;
  for (std::size_t k = 1; k < edges.size(); ++k) {
    const double c = std::isinf(edges[k]) ? 1.0 : normal_cdf((edges[k] - atom) / sd);
    out[k - 1] = std::max(0.0, c - prev);
    prev = c;
  }
  return out;
}

}  // namespace detail

/// Cell law of a SmoothedPair on the product of marginal quantile cells.
inline FiniteJointLaw cell_law(const SmoothedPair& P, int cells = kMaxEnumStates) {
  require(cells >= 2, "cell_law: need at least 2 cells per axis");
  if (cells > kMaxEnumStates) throw capacity_error("cell_law: more than 16 cells per axis");
  const auto ex = detail::quantile_edges(P.marginal_x(), cells);
  const auto ey = detail::quantile_edges(P.marginal_y(), cells);
  const double sx = std::sqrt(P.tau_x());
  const double sy = std::sqrt(P.tau_y());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(cells, cells);
  // Atoms with a shared coordinate reuse their cell vector.
  std::map<double, std::vector<double>> cache_x;
  std::map<double, std::vector<double>> cache_y;
  for (std::size_t k = 0; k < P.size(); ++k) {
    auto itx = cache_x.find(P.xs()[k]);
    if (itx == cache_x.end()) itx = cache_x.emplace(P.xs()[k], detail::cell_probs(P.xs()[k], sx, ex)).first;
    auto ity = cache_y.find(P.ys()[k]);
    if (ity == cache_y.end()) ity = cache_y.emplace(P.ys()[k], detail::cell_probs(P.ys()[k], sy, ey)).first;
    const Eigen::Map<const Eigen::VectorXd> a(itx->second.data(), cells);
    const Eigen::Map<const Eigen::VectorXd> b(ity->second.data(), cells);
    m.noalias() += P.weights()[k] * a * b.transpose();
  }
  m /= m.sum();
  std::vector<double> rs(static_cast<std::size_t>(cells));
  std::vector<double> cs(static_cast<std::size_t>(cells));
  for (int k = 0; k < cells; ++k) {
    rs[static_cast<std::size_t>(k)] = k;
    cs[static_cast<std::size_t>(k)] = k;
  }
  return {std::move(rs), std::move(cs), std::move(m)};
}

/// delta_n = (int p_X p_Y |p / (p_X p_Y) - 1|^n)^{1/n} by 2-D quadrature.
struct DeltaResult {
  double value = 0.0;
  double excluded_mass = 0.0;
};

inline DeltaResult delta_n_coefficient_detail(const SmoothedPair& P, int n, const GridSpec& grid) {
  require(n == 1 || n == 2 || n == 4, "delta_n_coefficient: n must be 1, 2 or 4");
  const auto g = evaluate_pair_on_grid(P, grid);
  DeltaResult r;
  double s = 0.0;
  for (int j = 0; j < grid.node_count; ++j) {
    for (int i = 0; i < grid.node_count; ++i) {
      const double w = g.w[static_cast<std::size_t>(i)] * g.w[static_cast<std::size_t>(j)];
      const double q = g.mx.p[static_cast<std::size_t>(i)] * g.my.p[static_cast<std::size_t>(j)];
      if (q < 1e-300) {
        r.excluded_mass += w * (q + g.p(i, j));
        continue;
      }
      s += w * q * std::pow(std::fabs(g.p(i, j) / q - 1.0), n);
    }
  }
  r.value = std::pow(s, 1.0 / n);
  return r;
}

inline double delta_n_coefficient(const SmoothedPair& P, int n, const GridSpec& grid) {
  return delta_n_coefficient_detail(P, n, grid).value;
}

inline double delta_n_coefficient(const SmoothedPair& P, int n) { return delta_n_coefficient(P, n, pair_grid(P)); }

/// alpha of a SmoothedPair reduced to quantile cells (a lower bound on the
/// true coefficient), with delta_4 for the ordering check.
inline MixingReport alpha_smoothed_pair(const SmoothedPair& P, int cells = kMaxEnumStates, bool with_delta4 = true) {
  const auto law = cell_law(P, cells);
  MixingReport r;
  r.method = MixingMethod::grid_cell;
  r.alpha = alpha_exact(law);
  r.cell_error_bound = 2.0 * law.probs().maxCoeff();
  if (with_delta4) r.delta4 = delta_n_coefficient(P, 4);
  return r;
}

// ---------------------------------------------------------------------------
// Covariance inequality

enum class BoundedKind { indicator, clipped_identity, kernel };

/// Bounded test function for the covariance inequality. `bound` is half the
/// range, which is the sup of the function after centering.
struct BoundedFunction {
  BoundedKind kind = BoundedKind::indicator;
  double param = 0.0;  // threshold, clip level, or kernel center
  double tau = 1.0;    // kernel variance

  [[nodiscard]] double operator()(double s) const {
    switch (kind) {
      case BoundedKind::indicator: return s <= param ? 1.0 : 0.0;
      case BoundedKind::clipped_identity: return std::clamp(s, -param, param);
      case BoundedKind::kernel: return normal_pdf(param - s, tau);
    }
    return 0.0;
  }
  [[nodiscard]] double bound() const {
    switch (kind) {
      case BoundedKind::indicator: return 0.5;
      case BoundedKind::clipped_identity: return std::fabs(param);
      case BoundedKind::kernel: return 0.5 / std::sqrt(kTwoPi * tau);
    }
    return 0.0;
  }
};

inline double covariance(const FiniteJointLaw& law, const BoundedFunction& xi, const BoundedFunction& nu) {
  const auto p = law.row_marginal();
  const auto q = law.col_marginal();
  double exy = 0.0;
  double ex = 0.0;
  double ey = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) ex += p(i) * xi(law.row_states()[static_cast<std::size_t>(i)]);
  for (Eigen::Index j = 0; j < q.size(); ++j) ey += q(j) * nu(law.col_states()[static_cast<std::size_t>(j)]);
  for (Eigen::Index i = 0; i < p.size(); ++i)
    for (Eigen::Index j = 0; j < q.size(); ++j)
      exy += law.probs()(i, j) * xi(law.row_states()[static_cast<std::size_t>(i)]) *
             nu(law.col_states()[static_cast<std::size_t>(j)]);
  return exy - ex * ey;
}

/// 4 C1 C2 alpha - |Cov(xi(S), nu(T))|.
inline double covariance_bound_check(const FiniteJointLaw& law, const BoundedFunction& xi, const BoundedFunction& nu,
                                     double alpha) {
  return 4.0 * xi.bound() * nu.bound() * alpha - std::fabs(covariance(law, xi, nu));
}

inline double covariance_bound_check(const FiniteJointLaw& law, const BoundedFunction& xi, const BoundedFunction& nu) {
  return covariance_bound_check(law, xi, nu, alpha_exact(law));
}

/// 2 alpha / (pi tau) - max over a pair grid of |p - p_X p_Y|.
inline double density_gap_sweep(const SmoothedPair& P, double alpha) {
  const auto g = evaluate_pair_on_grid(P);
  double worst = 0.0;
  for (int j = 0; j < g.grid.node_count; ++j)
    for (int i = 0; i < g.grid.node_count; ++i)
      worst = std::max(worst, std::fabs(g.p(i, j) - g.mx.p[static_cast<std::size_t>(i)] * g.my.p[static_cast<std::size_t>(j)]));
  return 2.0 * alpha / (std::numbers::pi * P.tau()) - worst;
}

// ---------------------------------------------------------------------------
// Stability under added noise

/// int_{|w| <= B sqrt(tau)} |p_{X+Z} - p_X| with Z ~ N(0, eps). The window is
/// split at sign changes of the difference so each piece is smooth.
inline double tv_window_integral(const SmoothedScalar& X, double eps, double B) {
  require(std::isfinite(eps) && eps > 0.0, "tv_window_integral: eps must be > 0");
  require(std::isfinite(B) && B > 1.0, "tv_window_integral: B must be > 1");
  const SmoothedScalar W = add_noise(X, eps);
  const double half = B * std::sqrt(X.tau());
  auto diff = [&](double w) { return density(W, w) - density(X, w); };
  constexpr int kScan = 8193;
  const GridSpec scan(-half, half, kScan);
  std::vector<double> cuts{-half};
  double prev = diff(scan.node(0));
  for (int k = 1; k < kScan; ++k) {
    const double x = scan.node(k);
    const double cur = diff(x);
    if ((prev < 0.0) != (cur < 0.0) && prev != 0.0 && cur != 0.0) {
      double lo = scan.node(k - 1);
      double hi = x;
      const bool lo_neg = prev < 0.0;
      for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        ((diff(mid) < 0.0) == lo_neg ? lo : hi) = mid;
      }
      cuts.push_back(0.5 * (lo + hi));
    }
    prev = cur;
  }
  cuts.push_back(half);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    if (cuts[k + 1] <= cuts[k]) continue;
    const int nodes = 1025;
    const double h = (cuts[k + 1] - cuts[k]) / (nodes - 1);
    std::vector<double> f(static_cast<std::size_t>(nodes));
    for (int i = 0; i < nodes; ++i) f[static_cast<std::size_t>(i)] = diff(cuts[k] + i * h);
    total += std::fabs(simpson(f, h));
  }
  return total;
}

/// (exp(C eps^{1/5}) - 1) + 2 eps^{1/5}.
inline double stability_bound(double eps, double C) {
  const double d = std::pow(eps, 0.2);
  return std::expm1(C * d) + 2.0 * d;
}

/// Smallest C >= 0 making `value <= stability_bound(eps, C)`.
inline double fit_stability_constant(double value, double eps) {
  const double d = std::pow(eps, 0.2);
  return std::max(0.0, std::log1p(std::max(0.0, value - 2.0 * d)) / d);
}

/// Slack of the windowed TV bound for a given constant.
inline double tv_window_check(const SmoothedScalar& X, double eps, double B, double C) {
  return stability_bound(eps, C) - tv_window_integral(X, eps, B);
}

struct StabilityRow {
  double eps = 0.0;
  double alpha_before = 0.0;
  double alpha_after = 0.0;
  double cell_error = 0.0;
  double tv_window = 0.0;
  double c_fit = 0.0;
};

/// alpha(X + Z, Y) against alpha(X, Y) on quantile cells for each eps.
inline std::vector<StabilityRow> mixing_stability_scan(const SmoothedPair& P, std::span<const double> eps_grid,
                                                       double B) {
  const auto base = alpha_smoothed_pair(P, kMaxEnumStates, false);
  std::vector<StabilityRow> rows;
  for (double eps : eps_grid) {
    const auto after = alpha_smoothed_pair(add_noise_first(P, eps), kMaxEnumStates, false);
    StabilityRow r;
    r.eps = eps;
    r.alpha_before = base.alpha;
    r.alpha_after = after.alpha;
    r.cell_error = base.cell_error_bound + after.cell_error_bound;
    r.tv_window = tv_window_integral(P.marginal_x(), eps, B);
    r.c_fit = std::max(fit_stability_constant(after.alpha - base.alpha, eps), fit_stability_constant(r.tv_window, eps));
    rows.push_back(r);
  }
  return rows;
}

}  // namespace entclt
