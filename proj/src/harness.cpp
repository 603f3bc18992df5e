#include "harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <unordered_set>

#include "common.hpp"
#include "diversity.hpp"

namespace tta::harness {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Uniform composition of n into k nonnegative parts (stars and bars).
std::vector<long> sample_composition(long k, long n, std::mt19937_64& rng) {
  const long slots = n + k - 1;
  std::unordered_set<long> chosen;
  for (long j = slots - (k - 1); j < slots; ++j) {
    std::uniform_int_distribution<long> dist(0, j);
    long v = dist(rng);
    if (!chosen.insert(v).second) chosen.insert(j);
  }
  std::vector<long> bars(chosen.begin(), chosen.end());
  std::sort(bars.begin(), bars.end());
  std::vector<long> parts(static_cast<std::size_t>(k));
  long prev = -1;
  for (std::size_t i = 0; i < bars.size(); ++i) {
    parts[i] = bars[i] - prev - 1;
    prev = bars[i];
  }
  parts[static_cast<std::size_t>(k - 1)] = slots - 1 - prev;
  return parts;
}

}  // namespace

Sampler sampler_from_string(const std::string& name) {
  if (name == "iid_uniform") return Sampler::kIidUniform;
  if (name == "uniform_multiset") return Sampler::kUniformMultiset;
  if (name == "fixed_diversity") return Sampler::kFixedDiversity;
  throw std::invalid_argument("unknown sampler: " + name);
}

std::string sampler_to_string(Sampler sampler) {
  switch (sampler) {
    case Sampler::kIidUniform: return "iid_uniform";
    case Sampler::kUniformMultiset: return "uniform_multiset";
    case Sampler::kFixedDiversity: return "fixed_diversity";
  }
  throw std::logic_error("sampler_to_string: bad sampler");
}

SourceGenerator make_generator(long k, long input_width, double separation,
                               std::uint64_t seed, Sampler sampler,
                               long fixed_diversity) {
  if (k < 1 || input_width < 1) throw std::invalid_argument("make_generator: K and width must be >= 1");
  if (separation < 0.0) throw std::invalid_argument("make_generator: separation must be >= 0");
  if (sampler == Sampler::kFixedDiversity &&
      (fixed_diversity < 1 || fixed_diversity > k))
    throw std::invalid_argument("make_generator: fixed_diversity must be in [1, K]");

  SourceGenerator gen;
  gen.k = k;
  gen.input_width = input_width;
  gen.separation = separation;
  gen.sampler = sampler;
  gen.fixed_diversity = fixed_diversity;
  gen.class_var = Eigen::MatrixXd::Ones(k, input_width);

  auto rng = make_rng(seed, "generator");
  std::normal_distribution<double> normal(0.0, 1.0);
  gen.class_means.resize(k, input_width);
  for (long r = 0; r < k; ++r)
    for (long c = 0; c < input_width; ++c) gen.class_means(r, c) = normal(rng);

  if (k > 1 && separation > 0.0) {
    double min_dist = std::numeric_limits<double>::infinity();
    for (long a = 0; a < k; ++a)
      for (long b = a + 1; b < k; ++b)
        min_dist = std::min(min_dist,
                            (gen.class_means.row(a) - gen.class_means.row(b)).norm());
    if (min_dist > 0.0) gen.class_means *= separation / min_dist;
  } else if (separation == 0.0) {
    gen.class_means.setZero();
  }
  return gen;
}

std::vector<int> sample_labels(const SourceGenerator& gen, long n,
                               std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("sample_labels: batch must be nonempty");
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(n));
  switch (gen.sampler) {
    case Sampler::kIidUniform: {
      std::uniform_int_distribution<int> dist(0, static_cast<int>(gen.k) - 1);
      for (long i = 0; i < n; ++i) labels.push_back(dist(rng));
      break;
    }
    case Sampler::kUniformMultiset: {
      const auto parts = sample_composition(gen.k, n, rng);
      for (long c = 0; c < gen.k; ++c)
        labels.insert(labels.end(), static_cast<std::size_t>(parts[static_cast<std::size_t>(c)]),
                      static_cast<int>(c));
      std::shuffle(labels.begin(), labels.end(), rng);
      break;
    }
    case Sampler::kFixedDiversity: {
      const long d = gen.fixed_diversity;
      if (n < d) throw std::invalid_argument("sample_labels: batch smaller than fixed diversity");
      std::vector<int> classes(static_cast<std::size_t>(gen.k));
      std::iota(classes.begin(), classes.end(), 0);
      for (long i = 0; i < d; ++i) {
        std::uniform_int_distribution<long> dist(i, gen.k - 1);
        std::swap(classes[static_cast<std::size_t>(i)],
                  classes[static_cast<std::size_t>(dist(rng))]);
      }
      for (long i = 0; i < d; ++i) labels.push_back(classes[static_cast<std::size_t>(i)]);
      std::uniform_int_distribution<long> pick(0, d - 1);
      for (long i = d; i < n; ++i)
        labels.push_back(classes[static_cast<std::size_t>(pick(rng))]);
      std::shuffle(labels.begin(), labels.end(), rng);
      break;
    }
  }
  return labels;
}

Batch sample_batch(const SourceGenerator& gen, long n, std::mt19937_64& rng) {
  Batch batch;
  batch.labels = sample_labels(gen, n, rng);
  batch.x.resize(gen.input_width, n);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (long c = 0; c < n; ++c) {
    const int label = batch.labels[static_cast<std::size_t>(c)];
    for (long f = 0; f < gen.input_width; ++f)
      batch.x(f, c) = gen.class_means(label, f) +
                      std::sqrt(gen.class_var(label, f)) * normal(rng);
  }
  return batch;
}

Corruption make_corruption(long input_width, int corruption_id,
                           std::uint64_t seed) {
  auto rng = make_rng(seed, "corruption", static_cast<std::uint64_t>(corruption_id));
  std::normal_distribution<double> normal(0.0, 1.0);
  Corruption corruption;
  corruption.offset.resize(input_width);
  corruption.scale.resize(input_width);
  for (long f = 0; f < input_width; ++f) corruption.offset(f) = normal(rng);
  for (long f = 0; f < input_width; ++f) corruption.scale(f) = normal(rng);
  return corruption;
}

void apply_corruption(Eigen::MatrixXd& x, const Corruption& corruption,
                      int severity, double max_offset, double max_scale) {
  if (severity < 0 || severity > 5) throw std::invalid_argument("apply_corruption: severity must be in 0..5");
  if (severity == 0) return;
  const double magnitude = static_cast<double>(severity) / 5.0;
  const Eigen::ArrayXd factor =
      1.0 + magnitude * max_scale * corruption.scale.array();
  const Eigen::ArrayXd offset = magnitude * max_offset * corruption.offset.array();
  for (long c = 0; c < x.cols(); ++c)
    x.col(c) = (x.col(c).array() * factor + offset).matrix();
}

Ordering ordering_from_string(const std::string& name) {
  if (name == "continual") return Ordering::kContinual;
  if (name == "mixed") return Ordering::kMixed;
  if (name == "gradual") return Ordering::kGradual;
  throw std::invalid_argument("unknown scenario ordering: " + name);
}

std::string ordering_to_string(Ordering ordering) {
  switch (ordering) {
    case Ordering::kContinual: return "continual";
    case Ordering::kMixed: return "mixed";
    case Ordering::kGradual: return "gradual";
  }
  throw std::logic_error("ordering_to_string: bad ordering");
}

ScenarioSpec resolve_scenario_spec(const ScenarioSpec& spec, long batch_size) {
  ScenarioSpec resolved = spec;
  if (spec.samples_per_segment > 0) {
    if (batch_size < 1) throw std::invalid_argument("resolve_scenario_spec: batch size must be >= 1");
    resolved.batches_per_segment =
        (spec.samples_per_segment + batch_size - 1) / batch_size;
  }
  return resolved;
}

ShiftScenario make_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
  if (spec.corruption_count < 1) throw std::invalid_argument("make_scenario: need at least one corruption");
  if (spec.severity < 0 || spec.severity > 5) throw std::invalid_argument("make_scenario: severity must be in 0..5");
  if (spec.batches_per_segment < 1) throw std::invalid_argument("make_scenario: batches_per_segment must be >= 1");

  ShiftScenario scenario;
  scenario.ordering = spec.ordering;
  switch (spec.ordering) {
    case Ordering::kContinual:
    case Ordering::kMixed:
      for (int c = 0; c < spec.corruption_count; ++c)
        for (long b = 0; b < spec.batches_per_segment; ++b)
          scenario.steps.push_back({c, spec.severity});
      if (spec.ordering == Ordering::kMixed) {
        auto rng = make_rng(seed, "mixed-shuffle");
        std::shuffle(scenario.steps.begin(), scenario.steps.end(), rng);
      }
      break;
    case Ordering::kGradual: {
      static constexpr int kRamp[] = {1, 2, 3, 4, 5, 4, 3, 2, 1};
      for (int c = 0; c < spec.corruption_count; ++c)
        for (int severity : kRamp)
          for (long b = 0; b < spec.batches_per_segment; ++b)
            scenario.steps.push_back({c, severity});
      break;
    }
  }
  return scenario;
}

ModelArtifacts build_source_model(const SourceGenerator& gen, long layer_count,
                                  std::uint64_t seed, long source_sample,
                                  double norm_eps, bool relu) {
  if (layer_count < 1) throw std::invalid_argument("build_source_model: need at least one layer");
  if (source_sample < 2) throw std::invalid_argument("build_source_model: source sample too small");

  auto model_rng = make_rng(seed, "model");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> scale_dist(0.8, 1.2);

  // Source data are always i.i.d. uniform over classes; the generator's
  // sampler only shapes test batches.
  SourceGenerator source_gen = gen;
  source_gen.sampler = Sampler::kIidUniform;
  auto sample_rng = make_rng(seed, "source-sample");
  Eigen::MatrixXd x = sample_batch(source_gen, source_sample, sample_rng).x;
  Eigen::MatrixXd anchors_x = gen.class_means.transpose();

  ModelArtifacts model;
  model.layers.reserve(static_cast<std::size_t>(layer_count));
  for (long l = 0; l < layer_count; ++l) {
    engine::LayerModel layer;
    const long width = gen.input_width;
    layer.transform.resize(width, x.rows());
    for (long r = 0; r < width; ++r) {
      for (long c = 0; c < x.rows(); ++c) layer.transform(r, c) = normal(model_rng);
      const double norm = layer.transform.row(r).norm();
      if (norm > 0.0) layer.transform.row(r) /= norm;
    }
    layer.scale.resize(width);
    layer.shift.resize(width);
    for (long f = 0; f < width; ++f) layer.scale(f) = scale_dist(model_rng);
    for (long f = 0; f < width; ++f) layer.shift(f) = 0.2 * normal(model_rng);

    Eigen::MatrixXd z = layer.transform * x;
    layer.source_stats = stats::batch_moments(z);
    x = stats::normalize_features(z, layer.source_stats, layer.scale,
                                  layer.shift, norm_eps);
    if (relu) x = x.cwiseMax(0.0);

    Eigen::MatrixXd az = layer.transform * anchors_x;
    anchors_x = stats::normalize_features(az, layer.source_stats, layer.scale,
                                          layer.shift, norm_eps);
    if (relu) anchors_x = anchors_x.cwiseMax(0.0);

    model.layers.push_back(std::move(layer));
  }
  model.anchors = anchors_x.transpose();
  return model;
}

namespace {

// Per-layer pre-normalization moments of a large corrupted reference sample
// pushed through the source-normalized stack; serves as the fixed ground
// truth the streaming estimates are scored against.
std::vector<stats::ChannelStats> segment_truth(
    const SourceGenerator& gen, const std::vector<engine::LayerModel>& layers,
    const Corruption& corruption, int severity, const RunParams& params,
    std::uint64_t truth_seed) {
  SourceGenerator ref_gen = gen;
  ref_gen.sampler = Sampler::kIidUniform;
  auto rng = make_rng(truth_seed, "truth-sample");
  Eigen::MatrixXd x = sample_batch(ref_gen, params.truth_sample, rng).x;
  apply_corruption(x, corruption, severity, params.max_offset, params.max_scale);
  auto forward = engine::forward_pass(
      layers, x,
      [&](long l, const stats::ChannelStats&) {
        return layers[static_cast<std::size_t>(l)].source_stats;
      },
      params.engine_cfg.norm_eps, params.engine_cfg.relu);
  return std::move(forward.measured);
}

double stats_distance(const stats::ChannelStats& estimate,
                      const stats::ChannelStats& truth) {
  const auto f = static_cast<double>(estimate.channels());
  return ((estimate.mean - truth.mean).squaredNorm() +
          (estimate.variance - truth.variance).squaredNorm()) /
         (2.0 * f);
}

}  // namespace

RunMetrics run_stream(const SourceGenerator& gen, const ShiftScenario& scenario,
                      const RunParams& params) {
  if (scenario.steps.empty()) throw std::invalid_argument("run_stream: empty scenario");
  const auto t0 = std::chrono::steady_clock::now();

  auto model = build_source_model(gen, params.layer_count, params.seed,
                                  params.source_sample, params.engine_cfg.norm_eps,
                                  params.engine_cfg.relu);

  engine::EngineConfig cfg = params.engine_cfg;
  double selected = 1.0;
  if (cfg.mode == engine::Mode::kTemaOnly || cfg.mode == engine::Mode::kFull) {
    selected = params.momentum_override > 0.0
                   ? params.momentum_override
                   : momentum::select_momentum(params.source_batch_size,
                                               params.batch_size, gen.k,
                                               params.momentum_cfg)
                         .m_star;
    cfg.momentum = selected;
  }
  engine::Engine eng(model.layers, cfg);

  std::map<int, Corruption> corruptions;
  std::map<std::pair<int, int>, std::vector<stats::ChannelStats>> truth;
  auto stream_rng = make_rng(params.seed, "stream");

  RunMetrics metrics;
  metrics.selected_momentum = selected;
  metrics.rows.reserve(scenario.steps.size());
  const auto layer_count = model.layers.size();

  long total_samples = 0;
  long total_errors = 0;
  for (std::size_t t = 0; t < scenario.steps.size(); ++t) {
    const auto [corruption_id, severity] = scenario.steps[t];
    auto corr_it = corruptions.find(corruption_id);
    if (corr_it == corruptions.end())
      corr_it = corruptions
                    .emplace(corruption_id,
                             make_corruption(gen.input_width, corruption_id, params.seed))
                    .first;
    auto truth_it = truth.find({corruption_id, severity});
    if (truth_it == truth.end())
      truth_it =
          truth
              .emplace(std::make_pair(corruption_id, severity),
                       segment_truth(gen, model.layers, corr_it->second, severity,
                                     params,
                                     derive_seed(params.seed, "truth",
                                                 static_cast<std::uint64_t>(
                                                     corruption_id * 16 + severity))))
              .first;

    Batch batch = sample_batch(gen, params.batch_size, stream_rng);
    apply_corruption(batch.x, corr_it->second, severity, params.max_offset,
                     params.max_scale);

    auto result = eng.process_batch(batch.x);
    const Eigen::VectorXi predicted = engine::classify(result.output, model.anchors);

    long errors = 0;
    for (long c = 0; c < predicted.size(); ++c)
      if (predicted(c) != batch.labels[static_cast<std::size_t>(c)]) ++errors;
    total_errors += errors;
    total_samples += params.batch_size;

    std::set<int> distinct(batch.labels.begin(), batch.labels.end());

    MetricsRow row;
    row.step = static_cast<long>(t);
    row.batch_size = params.batch_size;
    row.corruption_id = corruption_id;
    row.severity = severity;
    row.mode = engine::mode_to_string(cfg.mode);
    row.error_rate = static_cast<double>(errors) / static_cast<double>(params.batch_size);
    row.cum_error = static_cast<double>(total_errors) / static_cast<double>(total_samples);
    row.alphas = result.alphas;
    row.mean_alpha =
        std::accumulate(result.alphas.begin(), result.alphas.end(), 0.0) /
        static_cast<double>(layer_count);
    row.estimation_error.reserve(layer_count);
    for (std::size_t l = 0; l < layer_count; ++l)
      row.estimation_error.push_back(
          stats_distance(result.target_estimates[l], truth_it->second[l]));
    row.mean_estimation_error =
        std::accumulate(row.estimation_error.begin(), row.estimation_error.end(), 0.0) /
        static_cast<double>(layer_count);
    row.realized_diversity = static_cast<double>(distinct.size());
    metrics.rows.push_back(std::move(row));
  }

  metrics.final_cum_error =
      static_cast<double>(total_errors) / static_cast<double>(total_samples);
  metrics.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return metrics;
}

void write_metrics_csv(const std::string& path, const RunMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_metrics_csv: cannot open " + path);
  out << "step,batch_size,corruption_id,severity,mode,error_rate,cum_error,"
         "mean_alpha,mean_estimation_error,realized_diversity\n";
  for (const auto& row : metrics.rows) {
    out << row.step << ',' << row.batch_size << ',' << row.corruption_id << ','
        << row.severity << ',' << row.mode << ',' << format_double(row.error_rate)
        << ',' << format_double(row.cum_error) << ',' << format_double(row.mean_alpha)
        << ',' << format_double(row.mean_estimation_error) << ','
        << format_double(row.realized_diversity) << '\n';
  }
}

void write_trace_csv(const std::string& path, const RunMetrics& metrics) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trace_csv: cannot open " + path);
  if (metrics.rows.empty()) return;
  const std::size_t layers = metrics.rows.front().alphas.size();
  out << "step";
  for (std::size_t l = 1; l <= layers; ++l) out << ",alpha_" << l;
  for (std::size_t l = 1; l <= layers; ++l) out << ",estimation_error_" << l;
  out << '\n';
  for (const auto& row : metrics.rows) {
    out << row.step;
    for (double a : row.alphas) out << ',' << format_double(a);
    for (double e : row.estimation_error) out << ',' << format_double(e);
    out << '\n';
  }
}

ComparisonTable compare_modes(const SourceGenerator& gen,
                              const ScenarioSpec& scenario_spec,
                              const std::vector<engine::Mode>& modes,
                              const std::vector<long>& batch_sizes,
                              const std::vector<std::uint64_t>& seeds,
                              const RunParams& base) {
  if (modes.empty() || batch_sizes.empty() || seeds.empty())
    throw std::invalid_argument("compare_modes: modes, batch sizes and seeds must be nonempty");

  ComparisonTable table;
  for (auto mode : modes) table.modes.push_back(engine::mode_to_string(mode));
  table.batch_sizes = batch_sizes;
  table.errors.setZero(static_cast<long>(modes.size()),
                       static_cast<long>(batch_sizes.size()));
  for (std::size_t mi = 0; mi < modes.size(); ++mi) {
    for (std::size_t bi = 0; bi < batch_sizes.size(); ++bi) {
      double sum = 0.0;
      for (std::uint64_t seed : seeds) {
        RunParams params = base;
        params.batch_size = batch_sizes[bi];
        params.seed = seed;
        params.engine_cfg.mode = modes[mi];
        const auto scenario =
            make_scenario(resolve_scenario_spec(scenario_spec, batch_sizes[bi]), seed);
        sum += run_stream(gen, scenario, params).final_cum_error;
      }
      table.errors(static_cast<long>(mi), static_cast<long>(bi)) =
          sum / static_cast<double>(seeds.size());
    }
  }
  return table;
}

std::vector<long> diversity_trace(const SourceGenerator& gen, long batch_size,
                                  long batches, std::uint64_t seed) {
  auto rng = make_rng(seed, "diversity-trace");
  std::vector<long> trace;
  trace.reserve(static_cast<std::size_t>(batches));
  for (long b = 0; b < batches; ++b) {
    const auto labels = sample_labels(gen, batch_size, rng);
    std::set<int> distinct(labels.begin(), labels.end());
    trace.push_back(static_cast<long>(distinct.size()));
  }
  return trace;
}

}  // namespace tta::harness
