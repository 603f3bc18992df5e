#include "engine.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace tta::engine {

namespace {
constexpr int kSnapshotFormatVersion = 1;
}

Mode mode_from_string(const std::string& name) {
  if (name == "source_only") return Mode::kSourceOnly;
  if (name == "tbn") return Mode::kTbn;
  if (name == "tema_only") return Mode::kTemaOnly;
  if (name == "fixed_alpha") return Mode::kFixedAlpha;
  if (name == "full") return Mode::kFull;
  throw std::invalid_argument("unknown engine mode: " + name);
}

std::string mode_to_string(Mode mode) {
  switch (mode) {
    case Mode::kSourceOnly: return "source_only";
    case Mode::kTbn: return "tbn";
    case Mode::kTemaOnly: return "tema_only";
    case Mode::kFixedAlpha: return "fixed_alpha";
    case Mode::kFull: return "full";
  }
  throw std::logic_error("mode_to_string: bad mode");
}

ForwardResult forward_pass(const std::vector<LayerModel>& layers,
                           const Eigen::MatrixXd& input,
                           const StatsProvider& provider, double norm_eps,
                           bool relu) {
  if (layers.empty()) throw std::invalid_argument("forward_pass: no layers");
  if (input.cols() < 1) throw std::invalid_argument("forward_pass: empty batch");

  ForwardResult result;
  result.measured.reserve(layers.size());
  Eigen::MatrixXd x = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerModel& layer = layers[l];
    if (layer.transform.cols() != x.rows())
      throw std::invalid_argument("forward_pass: width mismatch at layer " +
                                  std::to_string(l));
    Eigen::MatrixXd z = layer.transform * x;
    ChannelStats measured = stats::batch_moments(z);
    const ChannelStats used =
        provider(static_cast<long>(l), measured);
    x = stats::normalize_features(z, used, layer.scale, layer.shift, norm_eps);
    if (relu) x = x.cwiseMax(0.0);
    result.measured.push_back(std::move(measured));
  }
  result.output = std::move(x);
  return result;
}

Eigen::VectorXi classify(const Eigen::MatrixXd& features,
                         const Eigen::MatrixXd& anchors) {
  if (anchors.cols() != features.rows())
    throw std::invalid_argument("classify: anchor/feature width mismatch");
  const long n = features.cols();
  const long k = anchors.rows();
  Eigen::VectorXi labels(n);
  for (long c = 0; c < n; ++c) {
    long best = 0;
    double best_d = (anchors.row(0).transpose() - features.col(c)).squaredNorm();
    for (long a = 1; a < k; ++a) {
      const double d = (anchors.row(a).transpose() - features.col(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    labels(c) = static_cast<int>(best);
  }
  return labels;
}

Engine::Engine(std::vector<LayerModel> layers, EngineConfig config)
    : layers_(std::move(layers)), config_(config) {
  if (layers_.empty()) throw std::invalid_argument("Engine: no layers");
  if (config_.mode == Mode::kFixedAlpha &&
      (config_.fixed_alpha < 0.0 || config_.fixed_alpha > 1.0))
    throw std::invalid_argument("Engine: fixed_alpha must be in [0, 1]");

  const double m = config_.mode == Mode::kTbn || config_.mode == Mode::kFixedAlpha
                       ? 1.0
                       : config_.momentum;
  if (config_.mode != Mode::kSourceOnly) {
    tema_.reserve(layers_.size());
    for (const LayerModel& layer : layers_)
      tema_.push_back(stats::tema_init(m, layer.source_stats));
    tema_seeded_ = !config_.tema_init_from_first_batch;
  }
  rect_ = rectifier::make_rectifier(static_cast<long>(layers_.size()),
                                    config_.gamma, config_.tau);
}

void Engine::update_tema(long index, const ChannelStats& measured) {
  auto& state = tema_[static_cast<std::size_t>(index)];
  if (!tema_seeded_) {
    state.stats = measured;
    state.batch_index += 1;
    return;
  }
  state = stats::tema_update(state, measured);
}

ChannelStats Engine::stats_for_layer(long index, const ChannelStats& measured,
                                     double alpha) {
  const auto& source = layers_[static_cast<std::size_t>(index)].source_stats;
  switch (config_.mode) {
    case Mode::kSourceOnly:
      return source;
    case Mode::kTbn:
    case Mode::kTemaOnly:
    case Mode::kFull:
      update_tema(index, measured);
      return stats::mix_statistics(alpha, source,
                                   tema_[static_cast<std::size_t>(index)].stats);
    case Mode::kFixedAlpha:
      update_tema(index, measured);
      return stats::mix_statistics(config_.fixed_alpha, source,
                                   tema_[static_cast<std::size_t>(index)].stats);
  }
  throw std::logic_error("stats_for_layer: bad mode");
}

BatchResult Engine::process_batch(const Eigen::MatrixXd& batch) {
  if (batch.cols() < 1) throw std::invalid_argument("process_batch: empty batch");
  const std::size_t layer_count = layers_.size();
  BatchResult result;
  result.divergences.assign(layer_count, 0.0);

  if (config_.mode != Mode::kFull) {
    double alpha;
    switch (config_.mode) {
      case Mode::kSourceOnly: alpha = 1.0; break;
      case Mode::kFixedAlpha: alpha = config_.fixed_alpha; break;
      default: alpha = 0.0; break;  // tbn / tema_only
    }
    auto forward = forward_pass(
        layers_, batch,
        [&](long l, const ChannelStats& measured) {
          return stats_for_layer(l, measured, alpha);
        },
        config_.norm_eps, config_.relu);
    result.alphas.assign(layer_count, alpha);
    result.output = std::move(forward.output);
    for (std::size_t l = 0; l < layer_count; ++l)
      result.target_estimates.push_back(config_.mode == Mode::kSourceOnly
                                            ? layers_[l].source_stats
                                            : tema_[l].stats);
    if (config_.mode != Mode::kSourceOnly) tema_seeded_ = true;
    ++step_;
    return result;
  }

  // Stage 1: measure and absorb batch statistics under the prior mixing,
  // then model source vs TEMA-estimated target as diagonal Gaussians.
  forward_pass(
      layers_, batch,
      [&](long l, const ChannelStats& measured) {
        return stats_for_layer(l, measured, rect_.prior[static_cast<std::size_t>(l)]);
      },
      config_.norm_eps, config_.relu);
  tema_seeded_ = true;
  for (std::size_t l = 0; l < layer_count; ++l)
    result.divergences[l] =
        rectifier::gaussian_sym_kl(layers_[l].source_stats, tema_[l].stats,
                                   config_.kl_eps, config_.kl_aggregate);

  // Stage 2: relative divergence across layers.
  result.alphas = rectifier::divergence_to_alpha(result.divergences, config_.gamma);

  // Stage 3: prediction pass with the fresh coefficients, reusing the
  // TEMA statistics absorbed in stage 1.
  auto prediction = forward_pass(
      layers_, batch,
      [&](long l, const ChannelStats&) {
        return stats::mix_statistics(result.alphas[static_cast<std::size_t>(l)],
                                     layers_[static_cast<std::size_t>(l)].source_stats,
                                     tema_[static_cast<std::size_t>(l)].stats);
      },
      config_.norm_eps, config_.relu);
  result.output = std::move(prediction.output);
  for (std::size_t l = 0; l < layer_count; ++l)
    result.target_estimates.push_back(tema_[l].stats);

  // Stage 4: fold the fresh coefficients into the global prior.
  rect_ = rectifier::update_prior(rect_, result.alphas);
  ++step_;
  return result;
}

std::string Engine::snapshot_json() const {
  nlohmann::json j;
  j["format_version"] = kSnapshotFormatVersion;
  j["mode"] = mode_to_string(config_.mode);
  j["momentum"] = config_.momentum;
  j["step"] = step_;
  j["tema_seeded"] = tema_seeded_;
  j["prior"] = rect_.prior;
  j["prior_step"] = rect_.step;
  nlohmann::json tema = nlohmann::json::array();
  for (const auto& state : tema_) {
    nlohmann::json s;
    s["momentum"] = state.momentum;
    s["batch_index"] = state.batch_index;
    s["mean"] = std::vector<double>(state.stats.mean.begin(), state.stats.mean.end());
    s["variance"] =
        std::vector<double>(state.stats.variance.begin(), state.stats.variance.end());
    tema.push_back(std::move(s));
  }
  j["tema"] = std::move(tema);
  return j.dump(2);
}

void Engine::restore_snapshot(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != kSnapshotFormatVersion)
    throw std::invalid_argument("restore_snapshot: unsupported format_version");
  if (j.at("mode").get<std::string>() != mode_to_string(config_.mode))
    throw std::invalid_argument("restore_snapshot: mode mismatch");
  const auto tema = j.at("tema");
  if (tema.size() != tema_.size())
    throw std::invalid_argument("restore_snapshot: layer count mismatch");
  for (std::size_t l = 0; l < tema_.size(); ++l) {
    const auto& s = tema[l];
    const auto mean = s.at("mean").get<std::vector<double>>();
    const auto variance = s.at("variance").get<std::vector<double>>();
    if (static_cast<long>(mean.size()) != layers_[l].channels())
      throw std::invalid_argument("restore_snapshot: width mismatch");
    tema_[l].momentum = s.at("momentum").get<double>();
    tema_[l].batch_index = s.at("batch_index").get<long>();
    tema_[l].stats = stats::ChannelStats(
        Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<long>(mean.size())),
        Eigen::Map<const Eigen::VectorXd>(variance.data(),
                                          static_cast<long>(variance.size())));
  }
  rect_.prior = j.at("prior").get<std::vector<double>>();
  if (rect_.prior.size() != layers_.size())
    throw std::invalid_argument("restore_snapshot: prior length mismatch");
  rect_.step = j.at("prior_step").get<long>();
  step_ = j.at("step").get<long>();
  tema_seeded_ = j.at("tema_seeded").get<bool>();
}

}  // namespace tta::engine
