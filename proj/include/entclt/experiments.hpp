#pragma once

// Experiment driver: configuration, convergence runs over a window-length
// schedule, the inequality suite, and report emission.

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "entclt/info_functionals.hpp"
#include "entclt/mixing.hpp"
#include "entclt/numeric.hpp"
#include "entclt/processes.hpp"
#include "entclt/smoothed_core.hpp"

namespace entclt {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + " is not a number: " + v);
  }
  if (used != v.size()) throw std::invalid_argument("config: " + key + " is not a number: " + v);
  return x;
}

inline long long parse_int(const std::string& key, const std::string& v) {
  const double x = parse_double(key, v);
  if (x != std::floor(x)) throw std::invalid_argument("config: " + key + " must be an integer: " + v);
  return static_cast<long long>(x);
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& s : split(v, ',')) out.push_back(parse_double(key, s));
  return out;
}

}  // namespace detail

inline const std::vector<std::string>& convergence_flag_names() {
  static const std::vector<std::string> names{"debruijn_consistent", "jst_decreasing_on_powers_of_2",
                                              "jst_final_below_threshold", "jst_within_vn_bound"};
  return names;
}

struct ExperimentConfig {
  std::string process_name = "iid";
  ProcessSpec process = ProcessSpec::iid();
  double tau = 0.5;
  std::vector<int> n_schedule{1, 2, 4, 8, 16, 32, 64, 128, 256};
  std::size_t mc_count = 20000;
  std::size_t block_count = 20000;
  double jst_threshold = 0.05;
  double debruijn_tau_max = 100.0;
  int debruijn_n_tau = 200;
  std::map<std::string, double> tolerances{{"debruijn", 1e-3}, {"identity", 1e-6},   {"mc_scale", 3.0},
                                           {"pointwise", 1e-10}, {"quadrature", 1e-8}, {"vn_bound", 0.01}};
  std::set<std::string> checks{convergence_flag_names().begin(), convergence_flag_names().end()};
  std::string suite_scale = "full";
  std::string out_dir = "out";

  [[nodiscard]] double tol(const std::string& k) const {
    const auto it = tolerances.find(k);
    if (it == tolerances.end()) throw std::invalid_argument("config: unknown tolerance " + k);
    return it->second;
  }
  /// Monte Carlo budget scale / sqrt(count).
  [[nodiscard]] double mc_tolerance(std::size_t count) const {
    return tol("mc_scale") / std::sqrt(static_cast<double>(count));
  }

  void validate() const {
    require(std::isfinite(tau) && tau > 0.0, "config: tau must be > 0");
    for (std::size_t i = 0; i < n_schedule.size(); ++i) {
      require(n_schedule[i] >= 1, "config: n_schedule entries must be >= 1");
      if (i > 0) require(n_schedule[i] > n_schedule[i - 1], "config: n_schedule must be strictly increasing");
    }
    for (const auto& [k, v] : tolerances) require(std::isfinite(v) && v > 0.0, "config: tolerance " + k + " must be > 0");
    require(mc_count >= kMinSmoothedCount, "config: mc_count must be >= 5000");
    require(block_count >= kMinSmoothedCount, "config: block_count must be >= 5000");
    require(debruijn_tau_max >= 50.0, "config: debruijn_tau_max must be >= 50");
    require(debruijn_n_tau >= 2, "config: debruijn_n_tau must be >= 2");
    require(suite_scale == "full" || suite_scale == "quick", "config: suite_scale must be full or quick");
    for (const auto& c : checks) {
      const auto& names = convergence_flag_names();
      require(std::find(names.begin(), names.end(), c) != names.end(), "config: unknown check " + c);
    }
  }
};

inline Innovation parse_innovation(const std::string& v) {
  if (v == "gaussian") return Innovation::gaussian;
  if (v == "uniform") return Innovation::uniform;
  if (v == "two_point") return Innovation::two_point;
  throw std::invalid_argument("config: unknown innovation " + v);
}

/// Flat key = value text; '#' starts a comment.
inline ExperimentConfig parse_config(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config: line " + std::to_string(lineno) + " has no '='");
    const auto key = detail::trim(line.substr(0, eq));
    if (kv.count(key)) throw std::invalid_argument("config: duplicate key " + key);
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  ExperimentConfig c;
  auto take = [&](const std::string& k) -> std::optional<std::string> {
    const auto it = kv.find(k);
    if (it == kv.end()) return std::nullopt;
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  const std::string process = take("process").value_or("iid");
  const Innovation inn = parse_innovation(take("innovation").value_or("gaussian"));
  const std::uint64_t seed = static_cast<std::uint64_t>(detail::parse_int("seed", take("seed").value_or("0")));
  const auto theta = take("theta");
  const auto flip = take("flip_prob");
  const auto transition = take("transition");
  const auto states = take("states");
  if (process == "iid") {
    c.process = ProcessSpec::iid(inn, seed);
  } else if (process == "ma") {
    c.process = ProcessSpec::moving_average(detail::parse_list("theta", theta.value_or("1,1")), inn, seed);
  } else if (process == "difference") {
    c.process = ProcessSpec::difference(inn, seed);
  } else if (process == "markov") {
    if (transition) {
      const auto rows = detail::split(*transition, ';');
      const auto k = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd P(k, k);
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto r = detail::parse_list("transition", rows[static_cast<std::size_t>(i)]);
        require(static_cast<Eigen::Index>(r.size()) == k, "config: transition must be square");
        for (Eigen::Index j = 0; j < k; ++j) P(i, j) = r[static_cast<std::size_t>(j)];
      }
      std::vector<double> g = states ? detail::parse_list("states", *states) : std::vector<double>{};
      if (!states) for (Eigen::Index i = 0; i < k; ++i) g.push_back(static_cast<double>(i));
      c.process = ProcessSpec::markov(P, g, seed);
    } else {
      c.process = ProcessSpec::two_state(detail::parse_double("flip_prob", flip.value_or("0.25")), seed);
    }
  } else {
    throw std::invalid_argument("config: unknown process " + process);
  }
  c.process_name = process;
  if (auto v = take("tau")) c.tau = detail::parse_double("tau", *v);
  if (auto v = take("n_schedule")) {
    c.n_schedule.clear();
    for (const auto& s : detail::split(*v, ',')) c.n_schedule.push_back(static_cast<int>(detail::parse_int("n_schedule", s)));
  }
  if (auto v = take("mc_count")) c.mc_count = static_cast<std::size_t>(detail::parse_int("mc_count", *v));
  if (auto v = take("block_count")) c.block_count = static_cast<std::size_t>(detail::parse_int("block_count", *v));
  if (auto v = take("jst_threshold")) c.jst_threshold = detail::parse_double("jst_threshold", *v);
  if (auto v = take("debruijn_tau_max")) c.debruijn_tau_max = detail::parse_double("debruijn_tau_max", *v);
  if (auto v = take("debruijn_n_tau")) c.debruijn_n_tau = static_cast<int>(detail::parse_int("debruijn_n_tau", *v));
  if (auto v = take("checks")) {
    c.checks.clear();
    for (const auto& s : detail::split(*v, ',')) c.checks.insert(s);
  }
  if (auto v = take("suite_scale")) c.suite_scale = *v;
  if (auto v = take("out_dir")) c.out_dir = *v;
  for (auto it = kv.begin(); it != kv.end();) {
    if (it->first.rfind("tol.", 0) == 0) {
      const auto name = it->first.substr(4);
      if (!c.tolerances.count(name)) throw std::invalid_argument("config: unknown tolerance " + it->first);
      c.tolerances[name] = detail::parse_double(it->first, it->second);
      it = kv.erase(it);
    } else {
      ++it;
    }
  }
  if (!kv.empty()) throw std::invalid_argument("config: unknown key " + kv.begin()->first);
  if (c.process.kind != ProcessKind::markov_fn && (flip || transition || states))
    throw std::invalid_argument("config: markov keys given for a non-markov process");
  if (c.process.kind != ProcessKind::ma && theta) throw std::invalid_argument("config: theta given for a non-ma process");
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  return parse_config(f);
}

// ---------------------------------------------------------------------------
// JSON emission: sorted keys, 17 significant digits, '\n' line endings.

namespace detail {

inline void write_json_string(const std::string& s, std::ostream& os) {
  os << json(s).dump();
}

inline void write_json_value(const json& j, std::ostream& os, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        os << "{}";
        return;
      }
      os << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ",\n";
        first = false;
        os << pad;
        write_json_string(it.key(), os);
        os << ": ";
        write_json_value(it.value(), os, indent + 2);
      }
      os << '\n' << close << '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        os << "[]";
        return;
      }
      os << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) os << ",\n";
        os << pad;
        write_json_value(j[i], os, indent + 2);
      }
      os << '\n' << close << ']';
      return;
    }
    case json::value_t::number_float: {
      const double x = j.get<double>();
      if (std::isfinite(x)) os << format_double(x);
      else os << "null";
      return;
    }
    default: os << j.dump();
  }
}

}  // namespace detail

inline void write_json(const json& j, std::ostream& os) {
  detail::write_json_value(j, os, 0);
  os << '\n';
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["process"] = c.process_name;
  j["innovation"] = to_string(c.process.innovation);
  j["seed"] = c.process.seed;
  j["tau"] = c.tau;
  j["n_schedule"] = c.n_schedule;
  j["mc_count"] = c.mc_count;
  j["block_count"] = c.block_count;
  j["jst_threshold"] = c.jst_threshold;
  j["debruijn_tau_max"] = c.debruijn_tau_max;
  j["debruijn_n_tau"] = c.debruijn_n_tau;
  j["tolerances"] = c.tolerances;
  j["checks"] = c.checks;
  if (c.process.kind == ProcessKind::ma) j["theta"] = c.process.theta;
  if (c.process.kind == ProcessKind::markov_fn) j["states"] = c.process.state_fn;
  return j;
}

// ---------------------------------------------------------------------------
// Convergence runs

struct ConvergenceRow {
  int n = 0;
  double vn_over_n = 0.0;
  double jst = std::numeric_limits<double>::quiet_NaN();
  double relent = std::numeric_limits<double>::quiet_NaN();
  double relent_debruijn = std::numeric_limits<double>::quiet_NaN();
  double debruijn_tail = std::numeric_limits<double>::quiet_NaN();
  bool debruijn_tail_warning = false;
  double debruijn_decay_slope = std::numeric_limits<double>::quiet_NaN();  // log-log, last decade of t
  double alpha_gap = std::numeric_limits<double>::quiet_NaN();
  int gap = 0;
  bool failed = false;
  std::string error;
};

struct ConvergenceReport {
  ExperimentConfig config;
  std::vector<ConvergenceRow> rows;
  std::map<std::string, bool> flags;
  double mc_tolerance = 0.0;

  [[nodiscard]] bool pass() const {
    for (const auto& r : rows)
      if (r.failed) return false;
    for (const auto& c : config.checks)
      if (!flags.at(c)) return false;
    return true;
  }
};

namespace detail {

// Slope of log J_st(U + Z_t) against log t between t_max / 10 and t_max.
// Integrability of the de Bruijn integrand needs this below -1.
inline double decay_slope(const DeBruijnResult& db) {
  const double t_hi = db.t.back();
  const auto it = std::lower_bound(db.t.begin(), db.t.end(), 0.1 * t_hi);
  const auto k = static_cast<std::size_t>(it - db.t.begin());
  const double j_lo = db.jst[k];
  const double j_hi = db.jst.back();
  if (k + 1 >= db.t.size() || !(j_lo > 1e-12) || !(j_hi > 1e-12)) return std::numeric_limits<double>::quiet_NaN();
  return std::log(j_hi / j_lo) / std::log(t_hi / db.t[k]);
}

}  // namespace detail

inline int corridor_width(int n) { return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n)))); }

inline ConvergenceRow convergence_row(const ExperimentConfig& c, int n) {
  ConvergenceRow r;
  r.n = n;
  r.vn_over_n = window_variance(c.process, n) / n;
  r.gap = corridor_width(n);
  try {
    const SmoothedScalar V = build_smoothed_vn(c.process, n, c.tau, c.mc_count);
    r.jst = fisher_standardized(V);
    r.relent = relent_direct(V);
    const auto db = relent_debruijn(V, c.debruijn_tau_max, c.debruijn_n_tau);
    r.relent_debruijn = db.value;
    r.debruijn_tail = db.tail_bound;
    r.debruijn_tail_warning = db.tail_warning;
    r.debruijn_decay_slope = detail::decay_slope(db);
    const auto blocks = simulate_block_pair(c.process, n, n, r.gap, c.mc_count);
    r.alpha_gap = alpha_estimate_rectangles(blocks.first, blocks.second);
  } catch (const numeric_error& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

inline void summarize(ConvergenceReport& rep) {
  const auto& c = rep.config;
  const double mc = rep.mc_tolerance;
  bool decreasing = true;
  bool within = true;
  bool consistent = true;
  for (std::size_t i = 0; i < rep.rows.size(); ++i) {
    const auto& r = rep.rows[i];
    if (r.failed) continue;
    if (!(r.jst <= r.vn_over_n / c.tau + c.tol("vn_bound"))) within = false;
    if (!(std::fabs(r.relent - r.relent_debruijn) < c.tol("debruijn"))) consistent = false;
    if (i > 0 && !rep.rows[i - 1].failed && r.n == 2 * rep.rows[i - 1].n && !(r.jst <= rep.rows[i - 1].jst + mc))
      decreasing = false;
  }
  bool final_below = false;
  if (!rep.rows.empty() && !rep.rows.back().failed) final_below = rep.rows.back().jst < c.jst_threshold;
  if (rep.rows.empty()) final_below = true;
  rep.flags["jst_decreasing_on_powers_of_2"] = decreasing;
  rep.flags["jst_within_vn_bound"] = within;
  rep.flags["debruijn_consistent"] = consistent;
  rep.flags["jst_final_below_threshold"] = final_below;
}

inline ConvergenceReport run_convergence(const ExperimentConfig& c) {
  c.validate();
  ConvergenceReport rep;
  rep.config = c;
  rep.mc_tolerance = c.mc_tolerance(c.mc_count);
  for (int n : c.n_schedule) rep.rows.push_back(convergence_row(c, n));
  summarize(rep);
  return rep;
}

inline std::string convergence_csv(const ConvergenceReport& rep) {
  std::ostringstream os;
  os << "n,vn_over_n,jst,relent,alpha_gap\n";
  for (const auto& r : rep.rows)
    os << r.n << ',' << format_double(r.vn_over_n) << ',' << format_double(r.jst) << ',' << format_double(r.relent)
       << ',' << format_double(r.alpha_gap) << '\n';
  return os.str();
}

inline json convergence_json(const ConvergenceReport& rep) {
  json j;
  j["kind"] = "convergence";
  j["config"] = config_to_json(rep.config);
  j["mc_tolerance"] = rep.mc_tolerance;
  j["rows"] = json::array();
  for (const auto& r : rep.rows) {
    json row;
    row["n"] = r.n;
    row["vn_over_n"] = r.vn_over_n;
    row["jst"] = r.jst;
    row["jst_bound"] = r.vn_over_n / rep.config.tau;
    row["relent"] = r.relent;
    row["relent_debruijn"] = r.relent_debruijn;
    row["debruijn_tail"] = r.debruijn_tail;
    row["debruijn_tail_warning"] = r.debruijn_tail_warning;
    row["debruijn_decay_slope"] = r.debruijn_decay_slope;
    row["alpha_gap"] = r.alpha_gap;
    row["gap"] = r.gap;
    row["failed"] = r.failed;
    if (r.failed) row["error"] = r.error;
    j["rows"].push_back(row);
  }
  j["summary"] = rep.flags;
  j["pass"] = rep.pass();
  return j;
}

inline std::string to_json_text(const json& j) {
  std::ostringstream os;
  write_json(j, os);
  return os.str();
}

/// Writes convergence.csv and convergence.json under `dir`.
inline void emit_convergence(const ConvergenceReport& rep, const std::filesystem::path& dir) {
  write_file(dir / "convergence.csv", convergence_csv(rep));
  write_file(dir / "convergence.json", to_json_text(convergence_json(rep)));
}

// ---------------------------------------------------------------------------
// Inequality suite

struct InequalityReport {
  std::string check_name;
  std::string inputs_digest;
  double value = 0.0;  // quantity that must not exceed `bound`
  double bound = 0.0;
  double slack = 0.0;  // bound - value
  double tolerance = 0.0;
  bool pass = false;
};

inline json to_json(const InequalityReport& r) {
  return json{{"check_name", r.check_name}, {"inputs_digest", r.inputs_digest}, {"value", r.value},
              {"bound", r.bound},           {"slack", r.slack},                 {"tolerance", r.tolerance},
              {"pass", r.pass}};
}

struct ManifestEntry {
  std::string check;
  std::vector<std::string> ops;
};

/// Which library operations each suite check exercises.
inline const std::vector<ManifestEntry>& suite_manifest() {
  static const std::vector<ManifestEntry> m{
      {"scalar.fisher_cramer_rao", {"fisher"}},
      {"scalar.fisher_noise_monotone", {"fisher"}},
      {"scalar.jst_nonneg", {"fisher_standardized"}},
      {"scalar.debruijn_consistency", {"relent_direct", "relent_debruijn"}},
      {"scalar.debruijn_defect_nonneg", {"relent_debruijn"}},
      {"scalar.score_pointwise", {"score_pointwise_bound_check"}},
      {"scalar.score_moment", {"score_pointwise_bound_check"}},
      {"scalar.scorel2_window", {"scorel2_window_check"}},
      {"scalar.theta_nonneg", {"theta_seminorm"}},
      {"law.alpha_exact", {"alpha_exact"}},
      {"law.covariance_bound", {"covariance_bound_check", "alpha_exact"}},
      {"pair.fishdecomp", {"fishdecomp_check"}},
      {"pair.delta_nonneg", {"fishdecomp_check"}},
      {"pair.delta_swap_symmetry", {"delta_functional"}},
      {"pair.stein2d", {"stein_residual_2d"}},
      {"pair.m_function_consistency", {"m_function"}},
      {"pair.deltadom_lower_bound", {"deltadom_lowerbound_check", "theta_seminorm"}},
      {"pair.joint_density_lower_bound", {}},
      {"pair.windowed_m_term", {}},
      {"pair.offwindow_tail", {}},
      {"pair.product_term", {}},
      {"pair.alpha_atoms", {"alpha_exact"}},
      {"pair.covariance_bound", {"covariance_bound_check", "alpha_exact"}},
      {"pair.density_gap", {}},
      {"pair.alpha_delta_ordering", {"alpha_smoothed_pair", "delta_n_coefficient"}},
      {"pair.delta2_delta4_ordering", {"delta_n_coefficient"}},
      {"pair.stability", {"alpha_smoothed_pair", "tv_window_check"}},
      {"pair.tv_window_monotone", {"tv_window_check"}},
      {"block.rectangle_alpha", {"alpha_estimate_rectangles"}},
      {"block.fishdecomp", {"fishdecomp_check"}},
      {"block.windowed_m_term", {}},
      {"block.offwindow_tail", {}},
      {"block.product_term", {}},
      {"block.subadditivity", {"fishdecomp_check"}},
      {"block.correction_decay", {"fishdecomp_check"}},
  };
  return m;
}

struct ScalarCase {
  std::string label;
  SmoothedScalar law;
};

struct PairCase {
  std::string label;
  SmoothedPair pair;
  double alpha = 0.0;  // alpha of the atoms (S, T), exact
  bool independent = false;
};

struct BlockCase {
  std::string label;
  ProcessSpec spec;
  int m = 0;
  int n = 0;
  int gap = 0;
  std::size_t count = 0;
  double alpha = 0.0;  // ground-truth alpha between the blocks (upper value)
  bool alpha_exact = false;
};

inline std::vector<ScalarCase> scalar_corpus(bool quick = false) {
  std::vector<ScalarCase> c{
      {"point_tau1", SmoothedScalar(AtomCloud::point(0.0), 1.0)},
      {"pm1_tau1", SmoothedScalar(AtomCloud({-1.0, 1.0}, {0.5, 0.5}), 1.0)},
      {"pm1_tau0.5", SmoothedScalar(AtomCloud({-1.0, 1.0}, {0.5, 0.5}), 0.5)},
      {"three_atom_tau0.5", SmoothedScalar(AtomCloud({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25}), 0.5)},
      {"skew_tau0.3", SmoothedScalar(AtomCloud({-0.5, 1.0}, {2.0 / 3.0, 1.0 / 3.0}), 0.3)},
      {"pm2_tau0.5", SmoothedScalar(AtomCloud({-2.0, 2.0}, {0.5, 0.5}), 0.5)},
  };
  if (quick) c.erase(c.begin() + 2, c.end());
  return c;
}

inline std::vector<PairCase> exact_pair_corpus(bool quick = false) {
  const AtomCloud coin({-1.0, 1.0}, {0.5, 0.5});
  const AtomCloud three({-1.0, 0.0, 2.0}, {0.5, 0.25, 0.25});
  std::vector<PairCase> c;
  c.push_back({"independent", SmoothedPair::product(coin, three, 1.0), 0.0, true});
  c.push_back({"comonotone", SmoothedPair({-1.0, 1.0}, {-1.0, 1.0}, {0.5, 0.5}, 1.0), 0.25, false});
  if (!quick) {
    c.push_back({"anti_comonotone", SmoothedPair({-1.0, 1.0}, {1.0, -1.0}, {0.5, 0.5}, 1.0), 0.25, false});
    const auto chain = ProcessSpec::two_state(0.25);
    auto P = exact_markov_block_pair(chain, 3, 3, 1, 0.5);
    const double a = alpha_exact(joint_law_of(P));
    c.push_back({"markov_block", std::move(P), a, false});
  }
  return c;
}

inline std::vector<BlockCase> block_corpus(const ExperimentConfig& cfg) {
  const bool quick = cfg.suite_scale == "quick";
  const std::uint64_t seed = cfg.process.seed;
  const auto chain = ProcessSpec::two_state(0.25, seed);
  std::vector<BlockCase> c;
  const std::vector<int> gaps = quick ? std::vector<int>{0, 16} : std::vector<int>{0, 1, 2, 4, 8, 16};
  const std::size_t count = quick ? kMinSmoothedCount : cfg.block_count;
  for (int g : gaps)
    c.push_back({"markov_gap" + std::to_string(g), chain, 4, 4, g, count, *exact_alpha_lag(chain, g + 1), true});
  if (!quick) {
    c.push_back({"iid_gaussian", ProcessSpec::iid(Innovation::gaussian, seed), 4, 4, 0, kMinSmoothedCount, 0.0, true});
    c.push_back({"ma1_gap2", ProcessSpec::moving_average({1.0, 1.0}, Innovation::uniform, seed), 4, 4, 2,
                 kMinSmoothedCount, 0.0, true});
  }
  return c;
}

namespace detail {

inline std::string digest_of(const SmoothedScalar& X, const std::string& extra) {
  Digest d;
  d.add(std::span<const double>(X.cloud().atoms()));
  d.add(std::span<const double>(X.cloud().weights()));
  d.add(X.tau());
  d.add(extra);
  return d.hex();
}

inline std::string digest_of(const SmoothedPair& P, const std::string& extra) {
  Digest d;
  d.add(std::span<const double>(P.xs()));
  d.add(std::span<const double>(P.ys()));
  d.add(std::span<const double>(P.weights()));
  d.add(P.tau_x());
  d.add(P.tau_y());
  d.add(extra);
  return d.hex();
}

inline std::string fmt_param(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

}  // namespace detail

struct SuiteResult {
  std::vector<InequalityReport> reports;
  json summary;

  [[nodiscard]] bool pass() const {
    for (const auto& r : reports)
      if (!r.pass) return false;
    return true;
  }
};

class SuiteRunner {
 public:
  explicit SuiteRunner(const ExperimentConfig& cfg) : cfg_(cfg) {}

  SuiteResult run() {
    const bool quick = cfg_.suite_scale == "quick";
    run_laws();
    for (const auto& s : scalar_corpus(quick)) run_scalar(s);
    for (const auto& p : exact_pair_corpus(quick)) run_pair(p);
    run_stability(quick);
    run_blocks();
    run_tail_class(quick);
    SuiteResult r;
    r.reports = std::move(reports_);
    summary_["checks"] = r.reports.size();
    std::size_t failed = 0;
    json failures = json::array();
    for (const auto& rep : r.reports)
      if (!rep.pass) {
        ++failed;
        failures.push_back(rep.check_name);
      }
    summary_["failed"] = failed;
    summary_["failed_checks"] = failures;
    summary_["corpus_digest"] = corpus_digest_.hex();
    summary_["pass"] = failed == 0;
    summary_["suite_scale"] = cfg_.suite_scale;
    r.summary = std::move(summary_);
    return r;
  }

 private:
  void add(const std::string& name, const std::string& digest, double value, double bound, double tolerance) {
    InequalityReport r;
    r.check_name = name;
    r.inputs_digest = digest;
    r.value = value;
    r.bound = bound;
    r.slack = bound - value;
    r.tolerance = tolerance;
    r.pass = std::isfinite(r.slack) && r.slack >= -tolerance;
    corpus_digest_.add(digest);
    reports_.push_back(std::move(r));
  }

  void run_laws() {
    const auto coin = FiniteJointLaw({0.0, 1.0}, {0.0, 1.0}, (Eigen::MatrixXd(2, 2) << 0.5, 0.0, 0.0, 0.5).finished());
    const auto indep = FiniteJointLaw::product({0.0, 1.0, 2.0}, {0.2, 0.3, 0.5}, {-1.0, 1.0}, {0.6, 0.4});
    const double tol = 1e-15;
    add("law.alpha_exact.independent", "product", alpha_exact(indep), 0.0, tol);
    const double ac = alpha_exact(coin);
    add("law.alpha_exact.coin", "coin", std::fabs(ac - 0.25), 0.0, tol);
    const auto chain = ProcessSpec::two_state(0.25);
    for (int t : {1, 2, 3}) {
      const double want = std::pow(0.5, t) / 4.0;
      add("law.alpha_exact.chain_t" + std::to_string(t), "two_state_p0.25",
          std::fabs(*exact_alpha_lag(chain, t) - want), 0.0, tol);
    }
    const BoundedFunction heads{BoundedKind::indicator, 0.5, 1.0};
    const double bound = 4.0 * heads.bound() * heads.bound() * ac;
    add("law.covariance_bound.coin_indicator", "coin", bound - covariance_bound_check(coin, heads, heads), bound, 1e-12);
  }

  void run_scalar(const ScalarCase& s) {
    const auto& X = s.law;
    const std::string pre = "scalar." + s.label + ".";
    const double qt = cfg_.tol("quadrature");
    const double J = fisher(X);
    add(pre + "fisher_cramer_rao", detail::digest_of(X, "cr"), 1.0 / X.variance(), J, qt);
    add(pre + "fisher_noise_monotone", detail::digest_of(X, "eps0.5"), fisher(add_noise(X, 0.5)), J, 1e-10);
    add(pre + "jst_nonneg", detail::digest_of(X, "jst"), 0.0, fisher_standardized(X), qt);
    const auto db = relent_debruijn(X, cfg_.debruijn_tau_max, cfg_.debruijn_n_tau);
    add(pre + "debruijn_consistency", detail::digest_of(X, "db"), std::fabs(relent_direct(X) - db.value), 0.0,
        cfg_.tol("debruijn"));
    add(pre + "debruijn_defect_nonneg", detail::digest_of(X, "defect"), 0.0, db.min_defect, qt);
    const GridSpec window(X.cloud().min() - 10.0 * std::sqrt(X.tau()), X.cloud().max() + 10.0 * std::sqrt(X.tau()),
                          kDefaultNodes);
    for (int k : {1, 2, 4}) {
      const auto r = score_pointwise_bound_check(X, k, window);
      add(pre + "score_pointwise.k" + std::to_string(k), detail::digest_of(X, "k" + std::to_string(k)),
          r.max_violation, 0.0, cfg_.tol("pointwise"));
      add(pre + "score_moment.k" + std::to_string(k), detail::digest_of(X, "m" + std::to_string(k)), r.moment,
          r.moment_bound, qt);
    }
    const double K = X.cloud().second_moment() / X.tau();
    for (double B : {1.5, 2.0, 4.0}) {
      const double slack = scorel2_window_check(X, B, K);
      const double bound = 8.0 * B * B * B * (3.0 + 2.0 * K) / std::sqrt(X.tau());
      add(pre + "scorel2_window.B" + detail::fmt_param(B), detail::digest_of(X, "B" + detail::fmt_param(B)),
          bound - slack, bound, qt);
    }
    add(pre + "theta_nonneg", detail::digest_of(X, "theta"), 0.0, theta_seminorm(X, X.tau()), 1e-10);
  }

  void run_pair_core(const std::string& pre, const SmoothedPair& P, const std::vector<double>& betas, bool stein) {
    const PairQuadrature q(P);
    const double it = cfg_.tol("identity");
    for (double b : betas) {
      const auto r = fishdecomp_check(P, b);
      const std::string tag = "beta" + detail::fmt_param(b);
      add(pre + "fishdecomp." + tag, detail::digest_of(P, tag), std::fabs(r.residual), 0.0, it);
      add(pre + "delta_nonneg." + tag, detail::digest_of(P, "d" + tag), 0.0, r.delta, cfg_.tol("quadrature"));
    }
    if (!stein) return;
    for (double b : {0.3, 0.5}) {
      const std::string tag = "beta" + detail::fmt_param(b);
      add(pre + "delta_swap_symmetry." + tag, detail::digest_of(P, "swap" + tag),
          std::fabs(delta_functional(P, b) - delta_functional(P.swapped(), 1.0 - b)), 0.0, cfg_.tol("quadrature"));
    }
    for (int which : {1, 2})
      for (auto f : kTestFunctionCatalog)
        add(pre + "stein2d." + std::to_string(which) + "." + to_string(f),
            detail::digest_of(P, std::string("stein") + to_string(f) + std::to_string(which)),
            std::fabs(stein_residual_2d(P, which, f)), 0.0, it);
    // m_function against the grid values at a few nodes.
    const auto& g = q.values();
    const double a = std::sqrt(0.5);
    double worst = 0.0;
    for (int i = q.n() / 4; i < q.n(); i += q.n() / 4)
      for (int j = q.n() / 4; j < q.n(); j += q.n() / 4) {
        const double grid_m = a * (g.rho1(i, j) - q.rho_x(i)) + a * (g.rho2(i, j) - q.rho_y(j));
        worst = std::max(worst, std::fabs(m_function(P, a, a, q.x(i), q.x(j)) - grid_m));
      }
    add(pre + "m_function_consistency", detail::digest_of(P, "mfn"), worst, 0.0, 1e-9);
  }

  void run_windowed(const std::string& pre, const SmoothedPair& P, double alpha, double tol) {
    for (double B : {1.5, 2.0, 3.0}) {
      const std::string tag = "B" + detail::fmt_param(B);
      const auto m = windowed_m_term_check(P, 0.5, B, alpha);
      add(pre + "windowed_m_term." + tag, detail::digest_of(P, "wm" + tag), m.value, m.bound, tol);
      const auto o = offwindow_tail_check(P, 0.5, B);
      add(pre + "offwindow_tail." + tag, detail::digest_of(P, "ow" + tag), o.value, o.bound, tol);
      const auto p = product_term_check(P, B, alpha);
      add(pre + "product_term." + tag, detail::digest_of(P, "pt" + tag), p.value, p.bound, tol);
    }
  }

  void run_pair(const PairCase& c) {
    const auto& P = c.pair;
    const std::string pre = "pair." + c.label + ".";
    const double qt = cfg_.tol("quadrature");
    run_pair_core(pre, P, {0.1, 0.3, 0.5, 0.7, 0.9}, true);
    const double K = P.moment_ratio();
    add(pre + "deltadom_lower_bound", detail::digest_of(P, "dd"), -deltadom_lowerbound_check(P, 0.5, K), 0.0, qt);
    add(pre + "joint_density_lower_bound", detail::digest_of(P, "jd"), -joint_density_lower_bound_check(P, K), 0.0,
        1e-12);
    run_windowed(pre, P, c.alpha, qt);
    const auto law = joint_law_of(P);
    const double a = alpha_exact(law);
    add(pre + "alpha_atoms", detail::digest_of(P, "alpha"), std::fabs(a - c.alpha), 0.0, 1e-15);
    const std::vector<BoundedFunction> xis{{BoundedKind::indicator, 0.0, 1.0},
                                           {BoundedKind::clipped_identity, 0.5, 1.0},
                                           {BoundedKind::kernel, 0.3, P.tau()}};
    for (const auto& xi : xis)
      for (const auto& nu : xis) {
        const std::string tag = std::to_string(static_cast<int>(xi.kind)) + std::to_string(static_cast<int>(nu.kind));
        const double bound = 4.0 * xi.bound() * nu.bound() * a;
        add(pre + "covariance_bound." + tag, detail::digest_of(P, "cov" + tag),
            bound - covariance_bound_check(law, xi, nu, a), bound, 1e-12);
      }
    add(pre + "density_gap", detail::digest_of(P, "gap"), 2.0 * a / (std::numbers::pi * P.tau()) - density_gap_sweep(P, a),
        2.0 * a / (std::numbers::pi * P.tau()), 1e-12);
    const auto mix = alpha_smoothed_pair(P);
    add(pre + "alpha_delta_ordering", detail::digest_of(P, "order"), 4.0 * mix.alpha, mix.delta4 + mix.cell_error_bound,
        1e-8);
    const double d2 = delta_n_coefficient(P, 2);
    add(pre + "delta2_delta4_ordering", detail::digest_of(P, "d2d4"), d2, mix.delta4, 1e-8);
  }

  void run_stability(bool quick) {
    std::vector<PairCase> corpus = exact_pair_corpus(quick);
    corpus.push_back({"comonotone_tau0.05", SmoothedPair({-1.0, 1.0}, {-1.0, 1.0}, {0.5, 0.5}, 0.05), 0.25, false});
    const std::vector<double> eps{0.5, 0.1, 0.02};
    constexpr double kB = 3.0;
    struct Row {
      std::string name;
      std::string digest;
      double diff;
      double eps;
      double tol;
    };
    std::vector<Row> alpha_rows;
    std::vector<std::pair<Row, SmoothedScalar>> tv_rows;
    double c_fit = 0.0;
    for (const auto& c : corpus) {
      const auto scan = mixing_stability_scan(c.pair, eps, kB);
      double prev_tv = std::numeric_limits<double>::infinity();
      bool monotone = true;
      // eps is listed in decreasing order; the windowed TV must shrink with it.
      for (const auto& r : scan) {
        const std::string tag = c.label + ".eps" + detail::fmt_param(r.eps);
        alpha_rows.push_back({"pair." + tag + ".stability_alpha", detail::digest_of(c.pair, "stab" + tag),
                              r.alpha_after - r.alpha_before, r.eps, r.cell_error});
        tv_rows.push_back({{"pair." + tag + ".stability_tv", detail::digest_of(c.pair, "tv" + tag), r.tv_window, r.eps,
                            cfg_.tol("quadrature")},
                           c.pair.marginal_x()});
        c_fit = std::max(c_fit, r.c_fit);
        if (!(r.tv_window < prev_tv)) monotone = false;
        prev_tv = r.tv_window;
      }
      add("pair." + c.label + ".tv_window_monotone", detail::digest_of(c.pair, "tvmono"), monotone ? 0.0 : 1.0, 0.0, 0.0);
    }
    for (const auto& r : alpha_rows) add(r.name, r.digest, r.diff, stability_bound(r.eps, c_fit), r.tol);
    for (const auto& [r, X] : tv_rows) {
      const double bound = stability_bound(r.eps, c_fit);
      add(r.name, r.digest, bound - tv_window_check(X, r.eps, kB, c_fit), bound, r.tol);
    }
    add("pair.stability_c_fit_finite", "corpus", std::isfinite(c_fit) ? 0.0 : 1.0, 0.0, 0.0);
    summary_["stability_c_fit"] = c_fit;
    summary_["stability_window_B"] = kB;
  }

  void run_blocks() {
    const double beta = 0.5;
    constexpr double kEpsExp = 0.05;
    const double exponent = 1.0 / 3.0 - kEpsExp;
    struct Row {
      std::string label;
      std::string digest;
      double shortfall;  // Delta - (beta J_X + (1 - beta) J_Y - J_W)
      double alpha;
      double tol;
    };
    std::vector<Row> rows;
    std::map<std::string, double> correction;
    json block_info = json::object();
    auto add_block = [&](const std::string& label, const SmoothedPair& P, double alpha, double mc) {
      const std::string pre = "block." + label + ".";
      const auto r = fishdecomp_check(P, beta);
      add(pre + "fishdecomp", detail::digest_of(P, "fd"), std::fabs(r.residual), 0.0, cfg_.tol("identity"));
      run_windowed(pre, P, alpha, mc + cfg_.tol("quadrature"));
      rows.push_back({label, detail::digest_of(P, "sub"), -r.subadditivity_gap(), alpha, mc});
      correction[label] = r.dependence_term();
      block_info[label] = {{"alpha", alpha}, {"dependence_term", r.dependence_term()}, {"delta", r.delta},
                           {"atoms", P.size()}};
    };
    for (const auto& c : block_corpus(cfg_)) {
      const auto b = simulate_block_pair(c.spec, c.m, c.n, c.gap, c.count);
      const double mc = cfg_.mc_tolerance(c.count);
      const double rect = alpha_estimate_rectangles(b.first, b.second);
      add("block." + c.label + ".rectangle_alpha", "count" + std::to_string(c.count), rect, c.alpha + mc, 0.0);
      std::vector<double> xs = b.first;
      std::vector<double> ys = b.second;
      for (double& x : xs) x /= std::sqrt(static_cast<double>(c.m));
      for (double& y : ys) y /= std::sqrt(static_cast<double>(c.n));
      // Mixing sensitivity scales as 1 / tau for Fisher-information terms.
      add_block(c.label, SmoothedPair::empirical(xs, ys, cfg_.tau), c.alpha, mc / cfg_.tau);
    }
    if (cfg_.suite_scale != "quick") {
      const auto chain = ProcessSpec::two_state(0.25);
      add_block("markov_exact_m3_gap1", exact_markov_block_pair(chain, 3, 3, 1, cfg_.tau), *exact_alpha_lag(chain, 2),
                cfg_.tol("quadrature"));
    }
    double c_fit = 0.0;
    double c_raw = 0.0;  // ignoring the Monte Carlo allowance
    for (const auto& r : rows) {
      if (r.alpha <= 0.0) continue;
      c_fit = std::max(c_fit, std::max(0.0, r.shortfall - r.tol) / std::pow(r.alpha, exponent));
      c_raw = std::max(c_raw, std::max(0.0, r.shortfall) / std::pow(r.alpha, exponent));
    }
    for (const auto& r : rows)
      add("block." + r.label + ".subadditivity", r.digest, r.shortfall, c_fit * std::pow(r.alpha, exponent), r.tol);
    add("block.subadditivity_c_fit_finite", "corpus", std::isfinite(c_fit) ? 0.0 : 1.0, 0.0, 0.0);
    if (correction.count("markov_gap0") && correction.count("markov_gap16")) {
      add("block.correction_decay", "markov_gap0_gap16", std::fabs(correction["markov_gap16"]),
          0.5 * std::fabs(correction["markov_gap0"]), 0.0);
    }
    summary_["subadditivity_c_fit"] = c_fit;
    summary_["subadditivity_c_raw"] = c_raw;
    summary_["subadditivity_alpha_exponent"] = exponent;
    summary_["blocks"] = block_info;
  }

  void run_tail_class(bool quick) {
    const std::vector<double> radii{1.0, 1.5, 2.0, 3.0, 4.0};
    json fits = json::object();
    const std::vector<std::pair<std::string, ProcessSpec>> specs{
        {"markov_p0.25", ProcessSpec::two_state(0.25, cfg_.process.seed)},
        {"ma1_uniform", ProcessSpec::moving_average({1.0, 1.0}, Innovation::uniform, cfg_.process.seed)}};
    for (const auto& [name, spec] : specs) {
      double c = 0.0;
      for (int m : quick ? std::vector<int>{4} : std::vector<int>{4, 16, 64}) {
        const auto w = simulate_windows(spec, m, quick ? kMinWindowCount : kMinSmoothedCount);
        c = std::max(c, fit_tail_class(w.sums, 1.0, radii));
      }
      fits[name] = c;
    }
    summary_["tail_class_c"] = fits;
    summary_["tail_class_delta"] = 1.0;
  }

  const ExperimentConfig& cfg_;
  std::vector<InequalityReport> reports_;
  json summary_ = json::object();
  Digest corpus_digest_;
};

inline SuiteResult run_inequality_suite(const ExperimentConfig& cfg) {
  cfg.validate();
  return SuiteRunner(cfg).run();
}

inline json suite_json(const SuiteResult& r) {
  json arr = json::array();
  for (const auto& rep : r.reports) arr.push_back(to_json(rep));
  return arr;
}

/// Writes suite_report.json and suite_summary.json under `dir`.
inline void emit_suite(const SuiteResult& r, const std::filesystem::path& dir) {
  write_file(dir / "suite_report.json", to_json_text(suite_json(r)));
  write_file(dir / "suite_summary.json", to_json_text(r.summary));
}

// ---------------------------------------------------------------------------
// Report display

/// Human-readable rendering of a report file; returns whether it records a pass.
inline bool show_report(const std::filesystem::path& path, std::ostream& os) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open report " + path.string());
  if (path.extension() == ".csv") {
    std::string line;
    while (std::getline(f, line)) {
      for (const auto& cell : detail::split(line, ',')) {
        char buf[64];
        char* end = nullptr;
        const double x = std::strtod(cell.c_str(), &end);
        if (!cell.empty() && *end == '\0')
          std::snprintf(buf, sizeof buf, "%-14.6g", x);
        else
          std::snprintf(buf, sizeof buf, "%-14s", cell.c_str());
        os << buf;
      }
      os << '\n';
    }
    return true;
  }
  const json j = json::parse(f);
  char buf[256];
  if (j.is_array()) {
    std::size_t failed = 0;
    for (const auto& r : j) {
      const bool pass = r.at("pass").get<bool>();
      if (!pass) ++failed;
      const double slack = r.at("slack").is_null() ? std::numeric_limits<double>::quiet_NaN() : r.at("slack").get<double>();
      std::snprintf(buf, sizeof buf, "%-4s %-58s slack=% .3e\n", pass ? "ok" : "FAIL",
                    r.at("check_name").get<std::string>().c_str(), slack);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, "%zu checks, %zu failed\n", j.size(), failed);
    os << buf;
    return failed == 0;
  }
  if (j.contains("rows")) {
    os << "n      vn/n         jst          relent       relent_db    alpha_gap\n";
    for (const auto& r : j.at("rows")) {
      auto num = [&](const char* k) { return r.at(k).is_null() ? std::numeric_limits<double>::quiet_NaN() : r.at(k).get<double>(); };
      std::snprintf(buf, sizeof buf, "%-6d %-12.5g %-12.5g %-12.5g %-12.5g %-12.5g\n", r.at("n").get<int>(),
                    num("vn_over_n"), num("jst"), num("relent"), num("relent_debruijn"), num("alpha_gap"));
      os << buf;
    }
    for (const auto& [k, v] : j.at("summary").items()) os << k << ": " << (v.get<bool>() ? "true" : "false") << '\n';
  } else {
    for (const auto& [k, v] : j.items()) os << k << ": " << v.dump() << '\n';
  }
  return j.value("pass", true);
}

}  // namespace entclt
