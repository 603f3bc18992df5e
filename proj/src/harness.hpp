#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "engine.hpp"
#include "momentum.hpp"

namespace tta::harness {

enum class Sampler { kIidUniform, kUniformMultiset, kFixedDiversity };

Sampler sampler_from_string(const std::string& name);
std::string sampler_to_string(Sampler sampler);

// Synthetic source distribution: a K-component diagonal Gaussian mixture
// whose class means are seeded and rescaled so the minimum pairwise
// separation equals `separation` units of the per-channel std.
struct SourceGenerator {
  long k = 10;
  long input_width = 32;
  double separation = 3.0;
  Eigen::MatrixXd class_means;  // K x F0
  Eigen::MatrixXd class_var;    // K x F0 diagonal variances
  Sampler sampler = Sampler::kIidUniform;
  long fixed_diversity = 1;  // distinct classes per batch for kFixedDiversity
};

SourceGenerator make_generator(long k, long input_width, double separation,
                               std::uint64_t seed,
                               Sampler sampler = Sampler::kIidUniform,
                               long fixed_diversity = 1);

struct Batch {
  Eigen::MatrixXd x;  // F0 x N
  std::vector<int> labels;
};

std::vector<int> sample_labels(const SourceGenerator& gen, long n,
                               std::mt19937_64& rng);
Batch sample_batch(const SourceGenerator& gen, long n, std::mt19937_64& rng);

// Covariate shift model: a seeded per-channel affine perturbation whose
// magnitude grows linearly with severity (severity 0 is the identity).
struct Corruption {
  Eigen::VectorXd offset;
  Eigen::VectorXd scale;
};

Corruption make_corruption(long input_width, int corruption_id,
                           std::uint64_t seed);
void apply_corruption(Eigen::MatrixXd& x, const Corruption& corruption,
                      int severity, double max_offset, double max_scale);

enum class Ordering { kContinual, kMixed, kGradual };

Ordering ordering_from_string(const std::string& name);
std::string ordering_to_string(Ordering ordering);

struct ScenarioStep {
  int corruption_id;
  int severity;
};

struct ScenarioSpec {
  Ordering ordering = Ordering::kContinual;
  int corruption_count = 15;
  int severity = 5;            // fixed severity (continual / mixed)
  long batches_per_segment = 10;  // per corruption, or per severity step (gradual)
  long samples_per_segment = 0;   // when > 0, overrides batches_per_segment
                                  // as ceil(samples / batch size)
};

// Applies the samples_per_segment budget for a concrete batch size.
ScenarioSpec resolve_scenario_spec(const ScenarioSpec& spec, long batch_size);

struct ShiftScenario {
  Ordering ordering;
  std::vector<ScenarioStep> steps;  // one entry per batch, in stream order
};

ShiftScenario make_scenario(const ScenarioSpec& spec, std::uint64_t seed);

// Frozen source model plus the classifier anchors derived from it.
struct ModelArtifacts {
  std::vector<engine::LayerModel> layers;
  Eigen::MatrixXd anchors;  // K x F_last
};

ModelArtifacts build_source_model(const SourceGenerator& gen, long layer_count,
                                  std::uint64_t seed, long source_sample,
                                  double norm_eps = 1e-5, bool relu = false);

struct RunParams {
  long batch_size = 200;
  std::uint64_t seed = 0;
  long layer_count = 4;
  long source_sample = 50000;
  long truth_sample = 4000;
  double max_offset = 1.0;
  double max_scale = 0.3;
  long source_batch_size = 128;  // N_s for momentum selection
  momentum::MomentumConfig momentum_cfg;
  double momentum_override = 0.0;  // 0 selects via the grid objective
  engine::EngineConfig engine_cfg;
};

struct MetricsRow {
  long step;
  long batch_size;
  int corruption_id;
  int severity;
  std::string mode;
  double error_rate;
  double cum_error;
  double mean_alpha;
  double mean_estimation_error;
  double realized_diversity;
  std::vector<double> alphas;            // per layer, not in the main CSV
  std::vector<double> estimation_error;  // per layer, not in the main CSV
};

struct RunMetrics {
  std::vector<MetricsRow> rows;
  double final_cum_error = 0.0;
  double selected_momentum = 1.0;
  double wall_clock_seconds = 0.0;
};

RunMetrics run_stream(const SourceGenerator& gen, const ShiftScenario& scenario,
                      const RunParams& params);

// Main metrics CSV: fixed column order
//   step,batch_size,corruption_id,severity,mode,error_rate,cum_error,
//   mean_alpha,mean_estimation_error,realized_diversity
void write_metrics_csv(const std::string& path, const RunMetrics& metrics);

// Per-layer alpha / estimation-error traces, one column per layer.
void write_trace_csv(const std::string& path, const RunMetrics& metrics);

struct ComparisonTable {
  std::vector<std::string> modes;
  std::vector<long> batch_sizes;
  Eigen::MatrixXd errors;  // modes x batch sizes, seed-mean final error
};

ComparisonTable compare_modes(const SourceGenerator& gen,
                              const ScenarioSpec& scenario_spec,
                              const std::vector<engine::Mode>& modes,
                              const std::vector<long>& batch_sizes,
                              const std::vector<std::uint64_t>& seeds,
                              const RunParams& base);

// Realized distinct-class counts per batch under the generator's sampler.
std::vector<long> diversity_trace(const SourceGenerator& gen, long batch_size,
                                  long batches, std::uint64_t seed);

}  // namespace tta::harness
