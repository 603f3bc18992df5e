#include "runner.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "harness.hpp"

namespace fs = std::filesystem;

namespace tta::runner {

namespace {

harness::SourceGenerator generator_from_config(const config::RunConfig& cfg,
                                               std::uint64_t seed) {
  return harness::make_generator(cfg.k, cfg.input_width, cfg.separation, seed,
                                 harness::sampler_from_string(cfg.sampler),
                                 cfg.fixed_diversity);
}

harness::RunParams params_from_config(const config::RunConfig& cfg) {
  harness::RunParams params;
  params.layer_count = cfg.layers;
  params.source_sample = cfg.source_sample;
  params.truth_sample = cfg.truth_sample;
  params.max_offset = cfg.max_offset;
  params.max_scale = cfg.max_scale;
  params.source_batch_size = cfg.source_batch_size;
  params.momentum_cfg.grid = cfg.grid;
  params.momentum_cfg.epsilon = cfg.epsilon;
  params.momentum_cfg.lambda = cfg.lambda;
  params.momentum_override = cfg.momentum_override;
  params.engine_cfg.fixed_alpha = cfg.fixed_alpha;
  params.engine_cfg.gamma = cfg.gamma;
  params.engine_cfg.tau = cfg.tau;
  params.engine_cfg.norm_eps = cfg.norm_eps;
  params.engine_cfg.kl_eps = cfg.kl_eps;
  params.engine_cfg.relu = cfg.relu;
  params.engine_cfg.tema_init_from_first_batch = cfg.tema_init_from_first_batch;
  params.engine_cfg.kl_aggregate = cfg.kl_aggregate == "sum"
                                       ? rectifier::ChannelAggregate::kSum
                                       : rectifier::ChannelAggregate::kMean;
  return params;
}

harness::ScenarioSpec scenario_from_config(const config::RunConfig& cfg) {
  harness::ScenarioSpec spec;
  spec.ordering = harness::ordering_from_string(cfg.ordering);
  spec.corruption_count = static_cast<int>(cfg.corruptions);
  spec.severity = static_cast<int>(cfg.severity);
  spec.samples_per_segment = cfg.samples_per_segment;
  return spec;
}

double read_final_cum_error(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw std::runtime_error("report: cannot open " + csv_path);
  std::string line;
  std::string last;
  std::getline(in, line);  // header
  if (line.rfind("step,", 0) != 0)
    throw std::runtime_error("report: bad CSV header in " + csv_path);
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  if (last.empty()) throw std::runtime_error("report: no data rows in " + csv_path);
  std::stringstream ss(last);
  std::string field;
  for (int i = 0; i < 7; ++i)
    if (!std::getline(ss, field, ','))
      throw std::runtime_error("report: malformed row in " + csv_path);
  return std::stod(field);
}

}  // namespace

void run_simulation(const config::RunConfig& cfg,
                    const std::optional<std::string>& out_dir_override,
                    const std::optional<std::uint64_t>& seed_override) {
  config::validate(cfg);
  const std::string out_dir = out_dir_override.value_or(cfg.out_dir);
  const std::uint64_t seed = seed_override.value_or(cfg.seed);

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  try {
    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["seed"] = seed;
    manifest["config"] = config::config_to_text(cfg);
    manifest["runs"] = nlohmann::json::array();

    const auto base_params = params_from_config(cfg);
    const auto scenario_spec = scenario_from_config(cfg);

    for (long rep = 0; rep < cfg.replicates; ++rep) {
      const std::uint64_t run_seed =
          derive_seed(seed, "replicate", static_cast<std::uint64_t>(rep));
      const auto gen = generator_from_config(cfg, run_seed);

      if (rep == 0) {
        // Persist the frozen source statistics for the first replicate.
        const auto model = harness::build_source_model(
            gen, cfg.layers, run_seed, cfg.source_sample, cfg.norm_eps, cfg.relu);
        const fs::path stats_dir = fs::path(out_dir) / "source_stats";
        fs::create_directories(stats_dir);
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
          const fs::path p = stats_dir / ("layer_" + std::to_string(l + 1) + ".json");
          stats::save_stats(p.string(), model.layers[l].source_stats);
          written.push_back(p);
        }
      }

      for (const std::string& mode_name : cfg.modes) {
        for (long batch_size : cfg.batch_sizes) {
          harness::RunParams params = base_params;
          params.batch_size = batch_size;
          params.seed = run_seed;
          params.engine_cfg.mode = engine::mode_from_string(mode_name);
          const auto scenario = harness::make_scenario(
              harness::resolve_scenario_spec(scenario_spec, batch_size), run_seed);
          const auto metrics = harness::run_stream(gen, scenario, params);

          const std::string stem = "metrics_" + mode_name + "_n" +
                                   std::to_string(batch_size) + "_r" +
                                   std::to_string(rep);
          const fs::path csv = fs::path(out_dir) / (stem + ".csv");
          const fs::path trace = fs::path(out_dir) / (stem + "_trace.csv");
          harness::write_metrics_csv(csv.string(), metrics);
          harness::write_trace_csv(trace.string(), metrics);
          written.push_back(csv);
          written.push_back(trace);

          nlohmann::json run;
          run["mode"] = mode_name;
          run["batch_size"] = batch_size;
          run["replicate"] = rep;
          run["seed"] = run_seed;
          run["csv"] = csv.filename().string();
          run["trace_csv"] = trace.filename().string();
          run["final_error"] = metrics.final_cum_error;
          run["selected_momentum"] = metrics.selected_momentum;
          run["wall_clock_seconds"] = metrics.wall_clock_seconds;
          manifest["runs"].push_back(std::move(run));
        }
      }
    }

    const fs::path manifest_path = fs::path(out_dir) / "manifest.json";
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
    out << manifest.dump(2) << '\n';
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
}

std::string build_report(const std::string& run_dir) {
  const fs::path manifest_path = fs::path(run_dir) / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("report: no manifest in " + run_dir);
  nlohmann::json manifest;
  in >> manifest;

  std::vector<std::string> modes;
  std::vector<long> batch_sizes;
  std::map<std::pair<std::string, long>, std::pair<double, long>> cells;
  for (const auto& run : manifest.at("runs")) {
    const auto mode = run.at("mode").get<std::string>();
    const auto batch_size = run.at("batch_size").get<long>();
    const auto csv = (fs::path(run_dir) / run.at("csv").get<std::string>()).string();
    const double error = read_final_cum_error(csv);
    if (std::find(modes.begin(), modes.end(), mode) == modes.end())
      modes.push_back(mode);
    if (std::find(batch_sizes.begin(), batch_sizes.end(), batch_size) ==
        batch_sizes.end())
      batch_sizes.push_back(batch_size);
    auto& cell = cells[{mode, batch_size}];
    cell.first += error;
    cell.second += 1;
  }
  if (modes.empty()) throw std::runtime_error("report: manifest lists no runs");

  std::ostringstream out;
  char buf[32];
  out << "mode";
  for (long n : batch_sizes) out << '\t' << n;
  out << "\tAvg.\n";
  for (const auto& mode : modes) {
    out << mode;
    double total = 0.0;
    for (long n : batch_sizes) {
      const auto it = cells.find({mode, n});
      if (it == cells.end() || it->second.second == 0)
        throw std::runtime_error("report: missing runs for mode " + mode);
      const double mean = it->second.first / static_cast<double>(it->second.second);
      total += mean;
      std::snprintf(buf, sizeof(buf), "%.4f", mean);
      out << '\t' << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.4f",
                  total / static_cast<double>(batch_sizes.size()));
    out << '\t' << buf << '\n';
  }
  return out.str();
}

}  // namespace tta::runner
