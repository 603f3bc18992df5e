// Command-line front end for the adaptation library; uses only the public
// C interface.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tta/tta.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int status_to_exit(tta_status status) {
  if (status == TTA_OK) return 0;
  std::fprintf(stderr, "error: %s\n", tta_last_error());
  return status == TTA_ERR_INVALID ? kExitUsage : kExitRuntime;
}

struct DiversityArgs {
  std::uint64_t k = 0;
  std::int64_t n = -1;
  std::int64_t n_from = -1;
  std::int64_t n_to = -1;
  std::int64_t n_step = 1;
  std::string csv_path;
};

int run_diversity(const DiversityArgs& args) {
  std::vector<std::pair<std::uint64_t, double>> rows;
  std::int64_t from = args.n >= 0 ? args.n : args.n_from;
  std::int64_t to = args.n >= 0 ? args.n : args.n_to;
  if (from < 1 || to < from || args.n_step < 1) {
    std::fprintf(stderr, "error: provide --n, or --n-from/--n-to with --n-step >= 1\n");
    return kExitUsage;
  }
  for (std::int64_t n = from; n <= to; n += args.n_step) {
    double value = 0.0;
    const auto status = tta_expected_diversity(static_cast<uint32_t>(args.k),
                                               static_cast<uint64_t>(n), &value);
    if (status != TTA_OK) return status_to_exit(status);
    rows.emplace_back(static_cast<std::uint64_t>(n), value);
  }
  if (rows.size() == 1) {
    std::printf("%.4f\n", rows.front().second);
  } else {
    for (const auto& [n, value] : rows) std::printf("%" PRIu64 "\t%.4f\n", n, value);
  }
  if (!args.csv_path.empty()) {
    std::ofstream out(args.csv_path);
    if (!out) {
      std::fprintf(stderr, "error: cannot write %s\n", args.csv_path.c_str());
      return kExitRuntime;
    }
    out << "n,expected_diversity\n";
    char buf[32];
    for (const auto& [n, value] : rows) {
      std::snprintf(buf, sizeof(buf), "%.10g", value);
      out << n << ',' << buf << '\n';
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"training-free test-time adaptation toolkit"};
  app.require_subcommand(1);

  std::int64_t global_seed = -1;
  std::string global_out_dir;
  std::string global_config;
  app.add_option("--seed", global_seed, "override the configured seed");
  app.add_option("--out-dir", global_out_dir, "override the configured output directory");
  app.add_option("--config", global_config, "simulation config file (TOML)");

  DiversityArgs div_args;
  auto* diversity = app.add_subcommand(
      "diversity", "expected class diversity E(M|N) for K categories");
  diversity->add_option("--k", div_args.k, "category count")->required();
  diversity->add_option("--n", div_args.n, "batch size");
  diversity->add_option("--n-from", div_args.n_from, "start of a batch-size range");
  diversity->add_option("--n-to", div_args.n_to, "end of a batch-size range");
  diversity->add_option("--n-step", div_args.n_step, "range step");
  diversity->add_option("--csv", div_args.csv_path, "also write the table as CSV");

  std::uint64_t sm_ns = 128, sm_nt = 0, sm_k = 0;
  double sm_epsilon = 0.1, sm_lambda = 0.01;
  std::vector<double> sm_grid{1.0, 0.1, 0.01, 0.001};
  auto* select = app.add_subcommand("select-momentum",
                                    "grid search for the TEMA momentum");
  select->add_option("--ns", sm_ns, "source batch size")->required();
  select->add_option("--nt", sm_nt, "test batch size")->required();
  select->add_option("--k", sm_k, "category count")->required();
  select->add_option("--epsilon", sm_epsilon, "effective-pool weight cutoff");
  select->add_option("--lambda", sm_lambda, "pool-size penalty");
  select->add_option("--grid", sm_grid, "candidate momentum values")
      ->expected(-1);

  std::string sim_config;
  bool print_defaults = false;
  auto* simulate = app.add_subcommand("simulate", "run a configured simulation");
  simulate->add_option("--config", sim_config, "config file (TOML)");
  simulate->add_flag("--print-defaults", print_defaults,
                     "print the default config and exit");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "summarize a completed run directory");
  report->add_option("run_dir", report_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (diversity->parsed()) return run_diversity(div_args);

  if (select->parsed()) {
    double m_star = 0.0;
    std::uint64_t pool = 0;
    std::vector<double> objectives(sm_grid.size(), 0.0);
    const auto status = tta_select_momentum(sm_ns, sm_nt, static_cast<uint32_t>(sm_k),
                                            sm_grid.data(), sm_grid.size(), sm_epsilon,
                                            sm_lambda, &m_star, &pool,
                                            objectives.data());
    if (status != TTA_OK) return status_to_exit(status);
    std::printf("momentum\tobjective\n");
    for (std::size_t i = 0; i < sm_grid.size(); ++i)
      std::printf("%g\t%.6f\n", sm_grid[i], objectives[i]);
    std::printf("selected_momentum = %g\n", m_star);
    std::printf("pool_size = %" PRIu64 "\n", pool);
    return 0;
  }

  if (simulate->parsed()) {
    if (print_defaults) {
      char* text = nullptr;
      const auto status = tta_default_config(&text);
      if (status != TTA_OK) return status_to_exit(status);
      std::fputs(text, stdout);
      tta_string_free(text);
      return 0;
    }
    const std::string config_path = !sim_config.empty() ? sim_config : global_config;
    if (config_path.empty()) {
      std::fprintf(stderr, "error: simulate requires --config\n");
      return kExitUsage;
    }
    return status_to_exit(
        tta_simulate(config_path.c_str(), global_out_dir.c_str(), global_seed));
  }

  if (report->parsed()) {
    char* table = nullptr;
    const auto status = tta_report(report_dir.c_str(), &table);
    if (status != TTA_OK) {
      // A missing or corrupt run directory is a runtime failure.
      std::fprintf(stderr, "error: %s\n", tta_last_error());
      return kExitRuntime;
    }
    std::fputs(table, stdout);
    tta_string_free(table);
    return 0;
  }

  return kExitUsage;
}
