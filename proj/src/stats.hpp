#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace tta::stats {

// Per-channel first and second moments for one normalization layer.
// Variance is the population (divide-by-N) variance throughout.
struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  ChannelStats() = default;
  ChannelStats(Eigen::VectorXd mu, Eigen::VectorXd var);
  long channels() const { return mean.size(); }
  bool operator==(const ChannelStats& other) const = default;
};

// Per-channel mean and population variance of a F x N feature matrix
// (one column per sample).
ChannelStats batch_moments(const Eigen::MatrixXd& features);

// Streaming EMA estimator of target statistics.
struct TemaState {
  double momentum = 1.0;
  ChannelStats stats;
  long batch_index = 0;
};

TemaState tema_init(double m, ChannelStats source);

// mu <- m * mu_batch + (1 - m) * mu_ema, same for the variance.
TemaState tema_update(const TemaState& state, const ChannelStats& batch);

// Weight decomposition of the EMA after i updates:
//   value_i = initial * (1-m)^i + sum_t batch_t * (1-m)^(i-t) * m
struct EmaWeights {
  double initial = 0.0;
  std::vector<double> batch;  // index t-1 holds the weight of batch t
};

EmaWeights ema_weights(long i, double m);

// Source/target interpolation with the exact mixture variance:
//   mu  = a*mu_s + (1-a)*mu_t
//   var = a*var_s + (1-a)*var_t + a*(1-a)*(mu_s - mu_t)^2
ChannelStats mix_statistics(double alpha, const ChannelStats& source,
                            const ChannelStats& target);

// Per-channel standardization followed by the affine transform:
//   (x - mu) / sqrt(var + eps) * scale + shift
Eigen::MatrixXd normalize_features(const Eigen::MatrixXd& features,
                                   const ChannelStats& stats,
                                   const Eigen::VectorXd& scale,
                                   const Eigen::VectorXd& shift,
                                   double eps = 1e-5);

// Versioned JSON snapshot {format_version, F, mean, variance}.
std::string stats_to_json(const ChannelStats& stats);
ChannelStats stats_from_json(const std::string& text);
void save_stats(const std::string& path, const ChannelStats& stats);
ChannelStats load_stats(const std::string& path);

}  // namespace tta::stats
