#pragma once

// Shared numerical plumbing: error types, Gaussian helpers, quadrature grids,
// and a stable weighted log-sum reduction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace entclt {

/// Raised when a quadrature or fit cannot reach its accuracy budget.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an input exceeds an enumeration or sample-size limit.
class capacity_error : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
inline constexpr int kDefaultNodes = 4096;
inline constexpr int kDefaultPairNodes = 256;
// Gaussian margin (in standard deviations) added around the atoms.
inline constexpr double kWindowSigmas = 10.0;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::domain_error(what);
}

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw std::domain_error(std::string(what) + " must be finite");
}

inline double normal_pdf(double x, double var) {
  return std::exp(-0.5 * x * x / var) / std::sqrt(kTwoPi * var);
}

inline double log_normal_pdf(double x, double var) {
  return -0.5 * x * x / var - 0.5 * (kLogTwoPi + std::log(var));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

/// log(sum_i exp(v_i)); -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> v) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

/// Softmax weights of `logits` written to `out`; returns log-sum-exp.
inline double softmax(std::span<const double> logits, std::span<double> out) {
  if (logits.empty()) return -std::numeric_limits<double>::infinity();
  const double top = *std::max_element(logits.begin(), logits.end());
  if (!std::isfinite(top)) return log_sum_exp(logits);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) s += out[i] = std::exp(logits[i] - top);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= s;
  return top + std::log(s);
}

enum class Rule { trapezoid, midpoint };

/// Uniform one-dimensional quadrature grid.
struct GridSpec {
  double lower = 0.0;
  double upper = 1.0;
  int node_count = kDefaultNodes;
  Rule rule = Rule::trapezoid;

  GridSpec() = default;
  GridSpec(double lo, double hi, int nodes = kDefaultNodes, Rule r = Rule::trapezoid)
      : lower(lo), upper(hi), node_count(nodes), rule(r) {
    require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "GridSpec: need finite lower < upper");
    require(nodes >= 64, "GridSpec: node_count must be >= 64");
  }

  [[nodiscard]] double step() const {
    return rule == Rule::trapezoid ? (upper - lower) / (node_count - 1) : (upper - lower) / node_count;
  }
  [[nodiscard]] double node(int i) const {
    const double h = step();
    return rule == Rule::trapezoid ? lower + i * h : lower + (i + 0.5) * h;
  }
  [[nodiscard]] double weight(int i) const {
    const double h = step();
    if (rule == Rule::midpoint) return h;
    return (i == 0 || i == node_count - 1) ? 0.5 * h : h;
  }
  [[nodiscard]] std::vector<double> nodes() const {
    std::vector<double> x(static_cast<std::size_t>(node_count));
    for (int i = 0; i < node_count; ++i) x[static_cast<std::size_t>(i)] = node(i);
    return x;
  }
  [[nodiscard]] std::vector<double> weights() const {
    std::vector<double> w(static_cast<std::size_t>(node_count));
    for (int i = 0; i < node_count; ++i) w[static_cast<std::size_t>(i)] = weight(i);
    return w;
  }
};

/// Integral of a callable over a grid.
template <class F>
double integrate(const GridSpec& grid, F&& f) {
  double s = 0.0;
  for (int i = 0; i < grid.node_count; ++i) s += grid.weight(i) * f(grid.node(i));
  return s;
}

/// Composite Simpson over equally spaced samples (odd count); falls back to
/// trapezoid on the final panel when the count is even.
inline double simpson(std::span<const double> f, double h) {
  const std::size_t n = f.size();
  if (n < 2) return 0.0;
  if (n == 2) return 0.5 * h * (f[0] + f[1]);
  const std::size_t last = (n % 2 == 1) ? n - 1 : n - 2;
  double s = f[0] + f[last];
  for (std::size_t i = 1; i < last; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * f[i];
  double total = s * h / 3.0;
  if (last != n - 1) total += 0.5 * h * (f[n - 2] + f[n - 1]);
  return total;
}

/// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t block) {
  return mix_seed(mix_seed(mix_seed(seed) ^ stream) ^ block);
}

/// FNV-1a over raw bytes, for input digests.
class Digest {
 public:
  void add(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  void add(double x) { add(&x, sizeof x); }
  void add(std::int64_t x) { add(&x, sizeof x); }
  void add(const std::string& s) { add(s.data(), s.size()); }
  void add(std::span<const double> v) {
    for (double x : v) add(x);
  }
  [[nodiscard]] std::uint64_t value() const { return h_; }
  [[nodiscard]] std::string hex() const {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = h_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = digits[v & 0xf];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace entclt
