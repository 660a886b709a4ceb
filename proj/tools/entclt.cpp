#include <CLI11/CLI11.hpp>

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "entclt/entclt.hpp"

namespace {

int run_convergence_cmd(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  auto cfg = entclt::load_config(config);
  if (seed) cfg.process.seed = *seed;
  if (!out.empty()) cfg.out_dir = out;
  const auto rep = entclt::run_convergence(cfg);
  entclt::emit_convergence(rep, cfg.out_dir);
  for (const auto& r : rep.rows)
    if (r.failed) std::cerr << "row n=" << r.n << " failed: " << r.error << '\n';
  for (const auto& [k, v] : rep.flags) {
    const bool enabled = cfg.checks.count(k) > 0;
    std::cout << k << ": " << (v ? "true" : "false") << (enabled ? "" : " (disabled)") << '\n';
  }
  std::cout << "wrote " << (std::filesystem::path(cfg.out_dir) / "convergence.csv").string() << '\n';
  return rep.pass() ? 0 : 1;
}

int run_suite_cmd(const std::string& config) {
  const auto cfg = entclt::load_config(config);
  const auto res = entclt::run_inequality_suite(cfg);
  entclt::emit_suite(res, cfg.out_dir);
  std::size_t failed = 0;
  for (const auto& r : res.reports)
    if (!r.pass) {
      ++failed;
      std::cout << "FAIL " << r.check_name << " slack=" << entclt::format_double(r.slack) << '\n';
    }
  std::cout << res.reports.size() << " checks, " << failed << " failed\n";
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"entclt: smoothed Fisher information and relative entropy CLT experiments"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  auto* conv = app.add_subcommand("convergence", "run the convergence schedule and write CSV/JSON");
  conv->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  conv->add_option("--seed", seed, "override the config seed");
  conv->add_option("--out", out, "output directory");

  std::string suite_config;
  auto* suite = app.add_subcommand("suite", "run the inequality suite");
  suite->add_option("--config", suite_config, "config file")->required()->check(CLI::ExistingFile);

  std::string report;
  auto* show = app.add_subcommand("show", "print a report");
  show->add_option("--report", report, "report file (.json or .csv)")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (*conv) return run_convergence_cmd(config, seed, out);
    if (*suite) return run_suite_cmd(suite_config);
    if (*show) return entclt::show_report(report, std::cout) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
