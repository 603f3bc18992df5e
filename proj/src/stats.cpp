#include "stats.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace tta::stats {

namespace {
constexpr int kStatsFormatVersion = 1;

void require_same_width(const ChannelStats& a, const ChannelStats& b,
                        const char* where) {
  if (a.channels() != b.channels())
    throw std::invalid_argument(std::string(where) + ": channel count mismatch");
}
}  // namespace

ChannelStats::ChannelStats(Eigen::VectorXd mu, Eigen::VectorXd var)
    : mean(std::move(mu)), variance(std::move(var)) {
  if (mean.size() != variance.size())
    throw std::invalid_argument("ChannelStats: mean/variance length mismatch");
  if ((variance.array() < 0.0).any())
    throw std::invalid_argument("ChannelStats: negative variance");
}

ChannelStats batch_moments(const Eigen::MatrixXd& features) {
  const long n = features.cols();
  if (n < 1) throw std::invalid_argument("batch_moments: empty batch");
  Eigen::VectorXd mean = features.rowwise().mean();
  Eigen::VectorXd variance =
      (features.colwise() - mean).array().square().rowwise().sum() /
      static_cast<double>(n);
  variance = variance.cwiseMax(0.0);
  return ChannelStats(std::move(mean), std::move(variance));
}

TemaState tema_init(double m, ChannelStats source) {
  if (!(m > 0.0) || m > 1.0) throw std::invalid_argument("tema_init: momentum must be in (0, 1]");
  TemaState state;
  state.momentum = m;
  state.stats = std::move(source);
  state.batch_index = 0;
  return state;
}

TemaState tema_update(const TemaState& state, const ChannelStats& batch) {
  require_same_width(state.stats, batch, "tema_update");
  TemaState next;
  next.momentum = state.momentum;
  const double m = state.momentum;
  next.stats.mean = m * batch.mean + (1.0 - m) * state.stats.mean;
  next.stats.variance = m * batch.variance + (1.0 - m) * state.stats.variance;
  next.batch_index = state.batch_index + 1;
  return next;
}

EmaWeights ema_weights(long i, double m) {
  if (i < 1) throw std::invalid_argument("ema_weights: i must be >= 1");
  if (!(m > 0.0) || m > 1.0) throw std::invalid_argument("ema_weights: momentum must be in (0, 1]");
  EmaWeights w;
  w.initial = std::pow(1.0 - m, static_cast<double>(i));
  w.batch.resize(static_cast<std::size_t>(i));
  for (long t = 1; t <= i; ++t)
    w.batch[static_cast<std::size_t>(t - 1)] =
        std::pow(1.0 - m, static_cast<double>(i - t)) * m;
  return w;
}

ChannelStats mix_statistics(double alpha, const ChannelStats& source,
                            const ChannelStats& target) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mix_statistics: alpha must be in [0, 1]");
  require_same_width(source, target, "mix_statistics");
  ChannelStats mixed;
  mixed.mean = alpha * source.mean + (1.0 - alpha) * target.mean;
  mixed.variance = alpha * source.variance + (1.0 - alpha) * target.variance +
                   alpha * (1.0 - alpha) *
                       (source.mean - target.mean).array().square().matrix();
  return mixed;
}

Eigen::MatrixXd normalize_features(const Eigen::MatrixXd& features,
                                   const ChannelStats& stats,
                                   const Eigen::VectorXd& scale,
                                   const Eigen::VectorXd& shift, double eps) {
  const long f = features.rows();
  if (stats.channels() != f || scale.size() != f || shift.size() != f)
    throw std::invalid_argument("normalize_features: channel count mismatch");
  if (eps < 0.0) throw std::invalid_argument("normalize_features: eps must be >= 0");
  const Eigen::ArrayXd inv_std = (stats.variance.array() + eps).sqrt().inverse();
  Eigen::MatrixXd out(f, features.cols());
  for (long c = 0; c < features.cols(); ++c)
    out.col(c) = ((features.col(c) - stats.mean).array() * inv_std * scale.array() +
                  shift.array())
                     .matrix();
  return out;
}

std::string stats_to_json(const ChannelStats& stats) {
  nlohmann::json j;
  j["format_version"] = kStatsFormatVersion;
  j["F"] = stats.channels();
  j["mean"] = std::vector<double>(stats.mean.begin(), stats.mean.end());
  j["variance"] = std::vector<double>(stats.variance.begin(), stats.variance.end());
  return j.dump(2);
}

ChannelStats stats_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.at("format_version").get<int>() != kStatsFormatVersion)
    throw std::invalid_argument("stats_from_json: unsupported format_version");
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto variance = j.at("variance").get<std::vector<double>>();
  if (static_cast<long>(mean.size()) != j.at("F").get<long>() ||
      mean.size() != variance.size())
    throw std::invalid_argument("stats_from_json: inconsistent lengths");
  return ChannelStats(
      Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<long>(mean.size())),
      Eigen::Map<const Eigen::VectorXd>(variance.data(), static_cast<long>(variance.size())));
}

void save_stats(const std::string& path, const ChannelStats& stats) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_stats: cannot open " + path);
  out << stats_to_json(stats) << '\n';
}

ChannelStats load_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_stats: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return stats_from_json(text);
}

}  // namespace tta::stats
