#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "rectifier.hpp"
#include "stats.hpp"

namespace tta::engine {

using stats::ChannelStats;

// One synthetic normalization layer: a fixed linear map followed by
// statistics-based standardization and a learned-style affine transform.
struct LayerModel {
  ChannelStats source_stats;
  Eigen::VectorXd scale;
  Eigen::VectorXd shift;
  Eigen::MatrixXd transform;  // rows: this layer's width, cols: previous width
  long channels() const { return scale.size(); }
};

enum class Mode { kSourceOnly, kTbn, kTemaOnly, kFixedAlpha, kFull };

Mode mode_from_string(const std::string& name);
std::string mode_to_string(Mode mode);

struct EngineConfig {
  Mode mode = Mode::kFull;
  double fixed_alpha = 0.5;  // only for Mode::kFixedAlpha
  double momentum = 1.0;     // TEMA momentum for kTemaOnly / kFull
  double gamma = 0.5;
  double tau = 0.1;
  double norm_eps = 1e-5;
  double kl_eps = 1e-12;
  bool relu = false;  // optional positive-part nonlinearity after the affine
  bool tema_init_from_first_batch = false;
  rectifier::ChannelAggregate kl_aggregate = rectifier::ChannelAggregate::kMean;
};

struct BatchResult {
  std::vector<double> alphas;            // mixing coefficient used per layer
  std::vector<double> divergences;       // per-layer symmetric KL
  Eigen::MatrixXd output;                // final activations, width of last layer
  std::vector<ChannelStats> target_estimates;  // engine's per-layer target view
  std::vector<double> estimation_error;  // filled by the harness against truth
};

// Statistics used to normalize layer `index`, given its measured batch
// moments. The provider is also where TEMA updates happen.
using StatsProvider =
    std::function<ChannelStats(long index, const ChannelStats& measured)>;

struct ForwardResult {
  std::vector<ChannelStats> measured;  // pre-normalization batch moments
  Eigen::MatrixXd output;
};

ForwardResult forward_pass(const std::vector<LayerModel>& layers,
                           const Eigen::MatrixXd& input,
                           const StatsProvider& provider, double norm_eps = 1e-5,
                           bool relu = false);

// Nearest-anchor assignment under Euclidean distance; ties break toward the
// lower class index. Anchors are one row per class.
Eigen::VectorXi classify(const Eigen::MatrixXd& features,
                         const Eigen::MatrixXd& anchors);

// Per-batch state machine over the layer stack. Strictly sequential within
// one stream; distinct instances are independent.
class Engine {
 public:
  Engine(std::vector<LayerModel> layers, EngineConfig config);

  BatchResult process_batch(const Eigen::MatrixXd& batch);

  const std::vector<LayerModel>& layers() const { return layers_; }
  const EngineConfig& config() const { return config_; }
  long step() const { return step_; }

  // JSON state snapshot (mode, momentum, TEMA stats, prior, step counter);
  // restoring into an engine built from the same layer models resumes the
  // stream bit-exactly.
  std::string snapshot_json() const;
  void restore_snapshot(const std::string& text);

 private:
  ChannelStats stats_for_layer(long index, const ChannelStats& measured,
                               double alpha);
  void update_tema(long index, const ChannelStats& measured);

  std::vector<LayerModel> layers_;
  EngineConfig config_;
  std::vector<stats::TemaState> tema_;
  rectifier::RectifierState rect_;
  long step_ = 0;
  bool tema_seeded_ = false;
};

}  // namespace tta::engine
