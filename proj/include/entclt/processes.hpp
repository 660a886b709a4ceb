#pragma once

// Stationary weakly dependent sequences with known second-order structure:
// iid, moving averages, differences, and functionals of finite Markov chains.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "entclt/mixing.hpp"
#include "entclt/numeric.hpp"
#include "entclt/smoothed_core.hpp"

namespace entclt {

enum class ProcessKind { iid, ma, difference, markov_fn };
enum class Innovation { gaussian, uniform, two_point };

inline const char* to_string(ProcessKind k) {
  switch (k) {
    case ProcessKind::iid: return "iid";
    case ProcessKind::ma: return "ma";
    case ProcessKind::difference: return "difference";
    case ProcessKind::markov_fn: return "markov";
  }
  return "?";
}

inline const char* to_string(Innovation i) {
  switch (i) {
    case Innovation::gaussian: return "gaussian";
    case Innovation::uniform: return "uniform";
    case Innovation::two_point: return "two_point";
  }
  return "?";
}

/// X_i = sum_j theta_j Y_{i-j} (ma), Y_i - Y_{i+1} (difference), Y_i (iid),
/// or g(C_i) for a stationary chain C (markov_fn). Innovations Y have mean 0
/// and variance 1.
struct ProcessSpec {
  ProcessKind kind = ProcessKind::iid;
  Innovation innovation = Innovation::gaussian;
  std::vector<double> theta;      // ma coefficients theta_0..theta_m
  Eigen::MatrixXd transition;     // markov_fn, row-stochastic
  std::vector<double> state_fn;   // markov_fn, centered under the stationary law
  Eigen::VectorXd stationary;     // markov_fn
  std::uint64_t seed = 0;

  static ProcessSpec iid(Innovation inn = Innovation::gaussian, std::uint64_t seed = 0) {
    ProcessSpec s;
    s.kind = ProcessKind::iid;
    s.innovation = inn;
    s.seed = seed;
    return s;
  }

  static ProcessSpec moving_average(std::vector<double> theta, Innovation inn = Innovation::gaussian,
                                    std::uint64_t seed = 0) {
    require(!theta.empty(), "ProcessSpec: ma needs at least one coefficient");
    for (double t : theta) require_finite(t, "ma coefficient");
    ProcessSpec s;
    s.kind = ProcessKind::ma;
    s.innovation = inn;
    s.theta = std::move(theta);
    s.seed = seed;
    return s;
  }

  static ProcessSpec difference(Innovation inn = Innovation::gaussian, std::uint64_t seed = 0) {
    ProcessSpec s;
    s.kind = ProcessKind::difference;
    s.innovation = inn;
    s.seed = seed;
    return s;
  }

  static ProcessSpec markov(Eigen::MatrixXd transition, std::vector<double> values, std::uint64_t seed = 0) {
    const auto k = transition.rows();
    require(k >= 1 && transition.cols() == k, "ProcessSpec: transition must be square");
    require(static_cast<Eigen::Index>(values.size()) == k, "ProcessSpec: one state value per state");
    for (Eigen::Index i = 0; i < k; ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < k; ++j) {
        require(std::isfinite(transition(i, j)) && transition(i, j) >= 0.0, "ProcessSpec: transition entries >= 0");
        row += transition(i, j);
      }
      require(std::fabs(row - 1.0) <= 1e-12, "ProcessSpec: transition rows must sum to 1");
    }
    ProcessSpec s;
    s.kind = ProcessKind::markov_fn;
    // pi^T (I - P + 1 1^T) = 1^T.
    const Eigen::MatrixXd A = (Eigen::MatrixXd::Identity(k, k) - transition + Eigen::MatrixXd::Ones(k, k)).transpose();
    s.stationary = A.fullPivLu().solve(Eigen::VectorXd::Ones(k));
    require(s.stationary.allFinite() && (s.stationary.array() > -1e-12).all(), "ProcessSpec: no stationary law");
    s.stationary = s.stationary.cwiseMax(0.0);
    s.stationary /= s.stationary.sum();
    double mean = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) mean += s.stationary(i) * values[static_cast<std::size_t>(i)];
    for (double& v : values) v -= mean;
    s.transition = std::move(transition);
    s.state_fn = std::move(values);
    s.seed = seed;
    return s;
  }

  /// Symmetric chain on {-1, +1} flipping with probability p.
  static ProcessSpec two_state(double flip, std::uint64_t seed = 0) {
    require(flip > 0.0 && flip < 1.0, "ProcessSpec: flip probability must be in (0, 1)");
    Eigen::MatrixXd P(2, 2);
    P << 1.0 - flip, flip, flip, 1.0 - flip;
    return markov(P, {-1.0, 1.0}, seed);
  }

  /// Largest lag with nonzero correlation for finite-memory kinds.
  [[nodiscard]] std::optional<int> memory() const {
    switch (kind) {
      case ProcessKind::iid: return 0;
      case ProcessKind::ma: return static_cast<int>(theta.size()) - 1;
      case ProcessKind::difference: return 1;
      case ProcessKind::markov_fn: return std::nullopt;
    }
    return std::nullopt;
  }

  [[nodiscard]] int state_count() const { return static_cast<int>(state_fn.size()); }
};

// ---------------------------------------------------------------------------
// Second-order structure

/// Cov(X_0, X_k).
inline double autocovariance(const ProcessSpec& s, int k) {
  k = std::abs(k);
  switch (s.kind) {
    case ProcessKind::iid: return k == 0 ? 1.0 : 0.0;
    case ProcessKind::ma: {
      double c = 0.0;
      for (std::size_t j = 0; j + static_cast<std::size_t>(k) < s.theta.size(); ++j) c += s.theta[j] * s.theta[j + static_cast<std::size_t>(k)];
      return c;
    }
    case ProcessKind::difference: return k == 0 ? 2.0 : (k == 1 ? -1.0 : 0.0);
    case ProcessKind::markov_fn: {
      const Eigen::Map<const Eigen::VectorXd> g(s.state_fn.data(), s.state_count());
      Eigen::VectorXd v = g;
      for (int i = 0; i < k; ++i) v = s.transition * v;
      return (s.stationary.array() * g.array() * v.array()).sum();
    }
  }
  return 0.0;
}

/// v_n = Var(X_1 + ... + X_n) = sum_{|k| < n} (n - |k|) gamma(k).
inline double window_variance(const ProcessSpec& s, int n) {
  require(n >= 1, "window_variance: n must be >= 1");
  if (s.kind == ProcessKind::markov_fn) {
    const Eigen::Map<const Eigen::VectorXd> g(s.state_fn.data(), s.state_count());
    Eigen::VectorXd v = g;
    double total = n * (s.stationary.array() * g.array() * g.array()).sum();
    for (int k = 1; k < n; ++k) {
      v = s.transition * v;
      total += 2.0 * (n - k) * (s.stationary.array() * g.array() * v.array()).sum();
    }
    return total;
  }
  if (s.kind == ProcessKind::difference) return 2.0;
  double total = n * autocovariance(s, 0);
  const int lim = std::min(n - 1, s.memory().value_or(0));
  for (int k = 1; k <= lim; ++k) total += 2.0 * (n - k) * autocovariance(s, k);
  return total;
}

/// v = sum_k gamma(k).
inline double long_run_variance(const ProcessSpec& s) {
  switch (s.kind) {
    case ProcessKind::iid: return 1.0;
    case ProcessKind::ma: {
      double t = 0.0;
      for (double x : s.theta) t += x;
      return t * t;
    }
    case ProcessKind::difference: return 0.0;
    case ProcessKind::markov_fn: {
      // Fundamental matrix Z = (I - P + 1 pi^T)^{-1}; v = 2 g^T D Z g - g^T D g.
      const auto k = static_cast<Eigen::Index>(s.state_count());
      const Eigen::Map<const Eigen::VectorXd> g(s.state_fn.data(), k);
      const Eigen::MatrixXd Z =
          (Eigen::MatrixXd::Identity(k, k) - s.transition + Eigen::VectorXd::Ones(k) * s.stationary.transpose()).inverse();
      const Eigen::VectorXd dg = s.stationary.cwiseProduct(g);
      return 2.0 * dg.dot(Z * g) - dg.dot(g);
    }
  }
  return 0.0;
}

/// Law of (X_0, X_t) as a finite joint law over distinct state values.
inline FiniteJointLaw markov_lag_law(const ProcessSpec& s, int t) {
  require(s.kind == ProcessKind::markov_fn, "markov_lag_law: markov kind only");
  require(t >= 0, "markov_lag_law: lag must be >= 0");
  const int k = s.state_count();
  Eigen::MatrixXd Pt = Eigen::MatrixXd::Identity(k, k);
  for (int i = 0; i < t; ++i) Pt = Pt * s.transition;
  std::map<double, int> index;
  for (double v : s.state_fn) index.emplace(v, 0);
  std::vector<double> values;
  for (auto& [v, i] : index) {
    i = static_cast<int>(values.size());
    values.push_back(v);
  }
  const auto m = static_cast<Eigen::Index>(values.size());
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(m, m);
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b)
      probs(index[s.state_fn[static_cast<std::size_t>(a)]], index[s.state_fn[static_cast<std::size_t>(b)]]) +=
          s.stationary(a) * Pt(a, b);
  probs /= probs.sum();
  return {values, values, std::move(probs)};
}

/// alpha between X_0 and X_t where it is known exactly.
inline std::optional<double> exact_alpha_lag(const ProcessSpec& s, int t) {
  require(t >= 1, "exact_alpha_lag: lag must be >= 1");
  switch (s.kind) {
    case ProcessKind::iid: return 0.0;
    case ProcessKind::ma:
    case ProcessKind::difference:
      if (t > *s.memory()) return 0.0;
      return std::nullopt;
    case ProcessKind::markov_fn: return alpha_exact(markov_lag_law(s, t));
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Simulation

inline constexpr std::size_t kReplicaBlock = 1024;
inline constexpr std::size_t kMinWindowCount = 1000;
inline constexpr std::size_t kMinSmoothedCount = 5000;

namespace detail {

class InnovationSource {
 public:
  InnovationSource(Innovation kind, std::uint64_t seed) : kind_(kind), rng_(seed) {}
  double operator()() {
    switch (kind_) {
      case Innovation::gaussian: return normal_(rng_);
      case Innovation::uniform: return uniform_(rng_);
      case Innovation::two_point: return coin_(rng_) ? 1.0 : -1.0;
    }
    return 0.0;
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  Innovation kind_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{-std::sqrt(3.0), std::sqrt(3.0)};
  std::bernoulli_distribution coin_{0.5};
};

/// One stationary path X_1..X_len.
inline void simulate_path(const ProcessSpec& s, InnovationSource& src, std::vector<double>& out, std::size_t len) {
  out.resize(len);
  switch (s.kind) {
    case ProcessKind::iid:
      for (auto& x : out) x = src();
      return;
    case ProcessKind::ma: {
      const std::size_t m = s.theta.size() - 1;
      std::vector<double> y(len + m);
      for (auto& v : y) v = src();
      for (std::size_t i = 0; i < len; ++i) {
        double x = 0.0;
        for (std::size_t j = 0; j <= m; ++j) x += s.theta[j] * y[i + m - j];
        out[i] = x;
      }
      return;
    }
    case ProcessKind::difference: {
      double prev = src();
      for (std::size_t i = 0; i < len; ++i) {
        const double next = src();
        out[i] = prev - next;
        prev = next;
      }
      return;
    }
    case ProcessKind::markov_fn: {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      auto draw = [&](auto&& row) {
        const double r = u(src.engine());
        double acc = 0.0;
        const int k = s.state_count();
        for (int j = 0; j < k - 1; ++j) {
          acc += row(j);
          if (r < acc) return j;
        }
        return k - 1;
      };
      int state = draw([&](int j) { return s.stationary(j); });
      for (std::size_t i = 0; i < len; ++i) {
        out[i] = s.state_fn[static_cast<std::size_t>(state)];
        if (i + 1 < len) state = draw([&](int j) { return s.transition(state, j); });
      }
      return;
    }
  }
}

/// Runs `count` independent paths of length `len`, in seeded blocks, and
/// hands each path to `visit(replica, path)`.
template <class Visit>
void for_each_path(const ProcessSpec& s, std::uint64_t stream, std::size_t len, std::size_t count, Visit&& visit) {
  std::vector<double> path;
  for (std::size_t start = 0, block = 0; start < count; start += kReplicaBlock, ++block) {
    InnovationSource src(s.innovation, derive_seed(s.seed, stream, block));
    const std::size_t end = std::min(count, start + kReplicaBlock);
    for (std::size_t r = start; r < end; ++r) {
      simulate_path(s, src, path, len);
      visit(r, path);
    }
  }
}

inline double kahan_sum(const double* x, std::size_t n) {
  double s = 0.0;
  double c = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = x[i] - c;
    const double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  return s;
}

// Stream ids keep window and block-pair draws independent of each other.
inline constexpr std::uint64_t kWindowStream = 0x57494e44;
inline constexpr std::uint64_t kBlockStream = 0x424c4f43;

}  // namespace detail

struct WindowSample {
  int n = 0;
  std::vector<double> sums;  // realizations of X_1 + ... + X_n
  double v_n = 0.0;          // analytic
};

inline WindowSample simulate_windows(const ProcessSpec& s, int n, std::size_t count) {
  require(n >= 1, "simulate_windows: n must be >= 1");
  if (count < kMinWindowCount) throw capacity_error("simulate_windows: need at least 1000 replicas");
  WindowSample w;
  w.n = n;
  w.v_n = window_variance(s, n);
  w.sums.resize(count);
  const std::uint64_t stream = detail::kWindowStream ^ (static_cast<std::uint64_t>(n) << 32);
  detail::for_each_path(s, stream, static_cast<std::size_t>(n), count, [&](std::size_t r, const std::vector<double>& path) {
    w.sums[r] = detail::kahan_sum(path.data(), path.size());
  });
  return w;
}

/// V_n = U_n + N(0, tau), atoms the realizations of U_n = sum / sqrt(n).
inline SmoothedScalar build_smoothed_vn(const ProcessSpec& s, int n, double tau, std::size_t count) {
  require(std::isfinite(tau) && tau > 0.0, "build_smoothed_vn: tau must be > 0");
  if (count < kMinSmoothedCount) throw capacity_error("build_smoothed_vn: need at least 5000 atoms");
  auto w = simulate_windows(s, n, count);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& x : w.sums) x *= scale;
  return {AtomCloud::empirical(w.sums), tau};
}

struct BlockPair {
  int m = 0;
  int n = 0;
  int gap = 0;
  std::vector<double> first;   // X_1 + ... + X_m
  std::vector<double> second;  // X_{m+gap+1} + ... + X_{m+gap+n}
};

inline BlockPair simulate_block_pair(const ProcessSpec& s, int m, int n, int gap, std::size_t count) {
  require(m >= 1 && n >= 1, "simulate_block_pair: block lengths must be >= 1");
  require(gap >= 0, "simulate_block_pair: gap must be >= 0");
  if (count < kMinWindowCount) throw capacity_error("simulate_block_pair: need at least 1000 replicas");
  BlockPair b{m, n, gap, std::vector<double>(count), std::vector<double>(count)};
  const std::uint64_t stream = detail::kBlockStream ^ (static_cast<std::uint64_t>(m) << 40) ^
                               (static_cast<std::uint64_t>(n) << 20) ^ static_cast<std::uint64_t>(gap);
  const auto len = static_cast<std::size_t>(m + gap + n);
  detail::for_each_path(s, stream, len, count, [&](std::size_t r, const std::vector<double>& path) {
    b.first[r] = detail::kahan_sum(path.data(), static_cast<std::size_t>(m));
    b.second[r] = detail::kahan_sum(path.data() + m + gap, static_cast<std::size_t>(n));
  });
  return b;
}

/// (S / sqrt(m), T / sqrt(n)) + independent N(0, tau) on each coordinate.
inline SmoothedPair build_block_pair(const ProcessSpec& s, int m, int n, int gap, double tau, std::size_t count) {
  require(std::isfinite(tau) && tau > 0.0, "build_block_pair: tau must be > 0");
  if (count < kMinSmoothedCount) throw capacity_error("build_block_pair: need at least 5000 atoms");
  auto b = simulate_block_pair(s, m, n, gap, count);
  const double cm = 1.0 / std::sqrt(static_cast<double>(m));
  const double cn = 1.0 / std::sqrt(static_cast<double>(n));
  for (double& x : b.first) x *= cm;
  for (double& x : b.second) x *= cn;
  return SmoothedPair::empirical(b.first, b.second, tau);
}

/// Exact law of the scaled block sums of a Markov functional, by dynamic
/// programming over (state, partial sum).
inline SmoothedPair exact_markov_block_pair(const ProcessSpec& s, int m, int n, int gap, double tau) {
  require(s.kind == ProcessKind::markov_fn, "exact_markov_block_pair: markov kind only");
  require(m >= 1 && n >= 1 && gap >= 0, "exact_markov_block_pair: bad block shape");
  const int k = s.state_count();
  using SumLaw = std::map<double, double>;
  // Block sum law given start state: result[end][sum].
  auto block = [&](int len, const Eigen::VectorXd& start) {
    std::vector<SumLaw> cur(static_cast<std::size_t>(k));
    for (int a = 0; a < k; ++a)
      if (start(a) > 0.0) cur[static_cast<std::size_t>(a)][s.state_fn[static_cast<std::size_t>(a)]] += start(a);
    for (int step = 1; step < len; ++step) {
      std::vector<SumLaw> next(static_cast<std::size_t>(k));
      for (int a = 0; a < k; ++a)
        for (const auto& [sum, pr] : cur[static_cast<std::size_t>(a)])
          for (int b = 0; b < k; ++b)
            if (s.transition(a, b) > 0.0)
              next[static_cast<std::size_t>(b)][sum + s.state_fn[static_cast<std::size_t>(b)]] += pr * s.transition(a, b);
      cur = std::move(next);
    }
    return cur;
  };
  const auto first = block(m, s.stationary);
  Eigen::MatrixXd hop = Eigen::MatrixXd::Identity(k, k);
  for (int i = 0; i <= gap; ++i) hop = hop * s.transition;
  std::vector<std::vector<SumLaw>> second(static_cast<std::size_t>(k));
  for (int a = 0; a < k; ++a) second[static_cast<std::size_t>(a)] = block(n, Eigen::VectorXd::Unit(k, a));
  std::map<std::pair<double, double>, double> joint;
  for (int e = 0; e < k; ++e)
    for (const auto& [s1, p1] : first[static_cast<std::size_t>(e)])
      for (int a = 0; a < k; ++a) {
        if (hop(e, a) == 0.0) continue;
        for (const auto& law : second[static_cast<std::size_t>(a)])
          for (const auto& [s2, p2] : law) joint[{s1, s2}] += p1 * hop(e, a) * p2;
      }
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> w;
  double total = 0.0;
  for (const auto& [key, pr] : joint) total += pr;
  for (const auto& [key, pr] : joint) {
    xs.push_back(key.first / std::sqrt(static_cast<double>(m)));
    ys.push_back(key.second / std::sqrt(static_cast<double>(n)));
    w.push_back(pr / total);
  }
  return {std::move(xs), std::move(ys), std::move(w), tau};
}

/// Smallest c with E X^2 1(|X| >= R sqrt(v)) <= v c / R^delta over the
/// sampled R values, where v is the sample second moment.
inline double fit_tail_class(std::span<const double> samples, double delta, std::span<const double> radii) {
  require(!samples.empty(), "fit_tail_class: empty sample");
  require(delta > 0.0, "fit_tail_class: delta must be > 0");
  double v = 0.0;
  for (double x : samples) v += x * x;
  v /= static_cast<double>(samples.size());
  if (v == 0.0) return 0.0;
  double c = 0.0;
  for (double R : radii) {
    double tail = 0.0;
    for (double x : samples)
      if (std::fabs(x) >= R * std::sqrt(v)) tail += x * x;
    tail /= static_cast<double>(samples.size());
    c = std::max(c, std::pow(R, delta) * tail / v);
  }
  return c;
}

}  // namespace entclt
