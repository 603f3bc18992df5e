#include "tta/tta.h"

#include <cstring>
#include <limits>
#include <new>
#include <string>

#include <json.hpp>

#include "config.hpp"
#include "diversity.hpp"
#include "engine.hpp"
#include "momentum.hpp"
#include "runner.hpp"

namespace {

thread_local std::string g_last_error;

tta_status set_error(tta_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Maps exceptions at the boundary onto status codes.
template <typename Fn>
tta_status guarded(Fn&& fn) {
  try {
    fn();
    return TTA_OK;
  } catch (const tta::config::ConfigError& e) {
    return set_error(TTA_ERR_INVALID, e.what());
  } catch (const std::invalid_argument& e) {
    return set_error(TTA_ERR_INVALID, e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(TTA_ERR_INVALID, e.what());
  } catch (const std::exception& e) {
    return set_error(TTA_ERR_RUNTIME, e.what());
  } catch (...) {
    return set_error(TTA_ERR_RUNTIME, "unknown error");
  }
}

char* dup_string(const std::string& text) {
  char* out = new char[text.size() + 1];
  std::memcpy(out, text.c_str(), text.size() + 1);
  return out;
}

tta_status require(bool ok, const char* message) {
  return ok ? TTA_OK : set_error(TTA_ERR_INVALID, message);
}

Eigen::VectorXd to_vector(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

tta::engine::LayerModel layer_from_json(const nlohmann::json& j) {
  tta::engine::LayerModel layer;
  layer.source_stats =
      tta::stats::ChannelStats(to_vector(j.at("mean")), to_vector(j.at("variance")));
  layer.scale = to_vector(j.at("scale"));
  layer.shift = to_vector(j.at("shift"));
  const auto rows = j.at("transform");
  if (rows.empty()) throw std::invalid_argument("layer transform must be nonempty");
  layer.transform.resize(static_cast<long>(rows.size()),
                         static_cast<long>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto row = rows[r].get<std::vector<double>>();
    if (static_cast<long>(row.size()) != layer.transform.cols())
      throw std::invalid_argument("ragged layer transform");
    for (std::size_t c = 0; c < row.size(); ++c)
      layer.transform(static_cast<long>(r), static_cast<long>(c)) = row[c];
  }
  if (layer.scale.size() != layer.transform.rows() ||
      layer.shift.size() != layer.transform.rows() ||
      layer.source_stats.channels() != layer.transform.rows())
    throw std::invalid_argument("layer vector widths must match the transform rows");
  return layer;
}

}  // namespace

struct tta_engine_s {
  tta::engine::Engine impl;
};

extern "C" {

const char* tta_last_error(void) { return g_last_error.c_str(); }

void tta_string_free(char* text) { delete[] text; }

tta_status tta_expected_diversity(uint32_t k, uint64_t n, double* out) {
  if (auto rc = require(out != nullptr, "out must not be NULL")) return rc;
  return guarded([&] {
    *out = tta::diversity::expected_diversity(static_cast<long>(k),
                                              static_cast<long>(n));
  });
}

tta_status tta_diversity_mc(uint32_t k, uint64_t n, uint64_t trials,
                            uint64_t seed, double* mean, double* std_error) {
  if (auto rc = require(mean != nullptr && std_error != nullptr,
                        "mean/std_error must not be NULL"))
    return rc;
  return guarded([&] {
    const auto est = tta::diversity::sample_multiset_diversity(
        static_cast<long>(k), static_cast<long>(n), static_cast<long>(trials), seed);
    *mean = est.mean;
    *std_error = est.std_error;
  });
}

tta_status tta_effective_batch_count(double m, double epsilon, uint64_t* out) {
  if (auto rc = require(out != nullptr, "out must not be NULL")) return rc;
  return guarded([&] {
    *out = static_cast<uint64_t>(tta::momentum::effective_batch_count(m, epsilon));
  });
}

tta_status tta_effective_pool(double m, uint64_t n_t, double epsilon,
                              uint64_t* out) {
  if (auto rc = require(out != nullptr, "out must not be NULL")) return rc;
  return guarded([&] {
    *out = static_cast<uint64_t>(
        tta::momentum::effective_pool(m, static_cast<long>(n_t), epsilon));
  });
}

tta_status tta_select_momentum(uint64_t n_s, uint64_t n_t, uint32_t k,
                               const double* grid, size_t grid_len,
                               double epsilon, double lambda, double* m_star,
                               uint64_t* pool_size, double* objectives) {
  if (auto rc = require(m_star != nullptr, "m_star must not be NULL")) return rc;
  return guarded([&] {
    tta::momentum::MomentumConfig cfg;
    if (grid != nullptr && grid_len > 0)
      cfg.grid.assign(grid, grid + grid_len);
    cfg.epsilon = epsilon;
    cfg.lambda = lambda;
    const auto choice = tta::momentum::select_momentum(
        static_cast<long>(n_s), static_cast<long>(n_t), static_cast<long>(k), cfg);
    *m_star = choice.m_star;
    if (pool_size != nullptr) *pool_size = static_cast<uint64_t>(choice.pool_size);
    if (objectives != nullptr)
      for (std::size_t i = 0; i < choice.objective_values.size(); ++i)
        objectives[i] = choice.objective_values[i].second;
  });
}

tta_status tta_engine_create(const char* json_config, tta_engine** out) {
  if (auto rc = require(json_config != nullptr && out != nullptr,
                        "json_config and out must not be NULL"))
    return rc;
  *out = nullptr;
  return guarded([&] {
    const auto j = nlohmann::json::parse(json_config);
    tta::engine::EngineConfig cfg;
    cfg.mode = tta::engine::mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("momentum")) cfg.momentum = j["momentum"].get<double>();
    if (j.contains("fixed_alpha")) cfg.fixed_alpha = j["fixed_alpha"].get<double>();
    if (j.contains("gamma")) cfg.gamma = j["gamma"].get<double>();
    if (j.contains("tau")) cfg.tau = j["tau"].get<double>();
    if (j.contains("norm_eps")) cfg.norm_eps = j["norm_eps"].get<double>();
    if (j.contains("kl_eps")) cfg.kl_eps = j["kl_eps"].get<double>();
    if (j.contains("relu")) cfg.relu = j["relu"].get<bool>();
    if (j.contains("tema_init_from_first_batch"))
      cfg.tema_init_from_first_batch = j["tema_init_from_first_batch"].get<bool>();
    std::vector<tta::engine::LayerModel> layers;
    for (const auto& layer : j.at("layers")) layers.push_back(layer_from_json(layer));
    *out = new tta_engine_s{tta::engine::Engine(std::move(layers), cfg)};
  });
}

void tta_engine_destroy(tta_engine* engine) { delete engine; }

tta_status tta_engine_layer_count(const tta_engine* engine, uint64_t* out) {
  if (auto rc = require(engine != nullptr && out != nullptr,
                        "engine and out must not be NULL"))
    return rc;
  *out = engine->impl.layers().size();
  return TTA_OK;
}

tta_status tta_engine_input_width(const tta_engine* engine, uint64_t* out) {
  if (auto rc = require(engine != nullptr && out != nullptr,
                        "engine and out must not be NULL"))
    return rc;
  *out = static_cast<uint64_t>(engine->impl.layers().front().transform.cols());
  return TTA_OK;
}

tta_status tta_engine_output_width(const tta_engine* engine, uint64_t* out) {
  if (auto rc = require(engine != nullptr && out != nullptr,
                        "engine and out must not be NULL"))
    return rc;
  *out = static_cast<uint64_t>(engine->impl.layers().back().channels());
  return TTA_OK;
}

tta_status tta_engine_process_batch(tta_engine* engine, const double* features,
                                    uint64_t n, double* alphas, double* output) {
  if (auto rc = require(engine != nullptr && features != nullptr && n > 0,
                        "engine/features must not be NULL and n must be > 0"))
    return rc;
  return guarded([&] {
    const long width = engine->impl.layers().front().transform.cols();
    const Eigen::Map<const Eigen::MatrixXd> batch(features, width,
                                                  static_cast<long>(n));
    const auto result = engine->impl.process_batch(batch);
    if (alphas != nullptr)
      std::memcpy(alphas, result.alphas.data(),
                  result.alphas.size() * sizeof(double));
    if (output != nullptr)
      std::memcpy(output, result.output.data(),
                  static_cast<std::size_t>(result.output.size()) * sizeof(double));
  });
}

tta_status tta_engine_snapshot(const tta_engine* engine, char** json_out) {
  if (auto rc = require(engine != nullptr && json_out != nullptr,
                        "engine and json_out must not be NULL"))
    return rc;
  return guarded([&] { *json_out = dup_string(engine->impl.snapshot_json()); });
}

tta_status tta_engine_restore(tta_engine* engine, const char* snapshot_json) {
  if (auto rc = require(engine != nullptr && snapshot_json != nullptr,
                        "engine and snapshot_json must not be NULL"))
    return rc;
  return guarded([&] { engine->impl.restore_snapshot(snapshot_json); });
}

tta_status tta_simulate(const char* config_path, const char* out_dir_override,
                        int64_t seed_override) {
  if (auto rc = require(config_path != nullptr, "config_path must not be NULL"))
    return rc;
  return guarded([&] {
    const auto cfg = tta::config::parse_config_file(config_path);
    std::optional<std::string> out_dir;
    if (out_dir_override != nullptr && out_dir_override[0] != '\0')
      out_dir = out_dir_override;
    std::optional<std::uint64_t> seed;
    if (seed_override >= 0) seed = static_cast<std::uint64_t>(seed_override);
    tta::runner::run_simulation(cfg, out_dir, seed);
  });
}

tta_status tta_report(const char* run_dir, char** table_out) {
  if (auto rc = require(run_dir != nullptr && table_out != nullptr,
                        "run_dir and table_out must not be NULL"))
    return rc;
  return guarded([&] { *table_out = dup_string(tta::runner::build_report(run_dir)); });
}

tta_status tta_default_config(char** text_out) {
  if (auto rc = require(text_out != nullptr, "text_out must not be NULL")) return rc;
  return guarded([&] { *text_out = dup_string(tta::config::default_config_text()); });
}

}  // extern "C"
