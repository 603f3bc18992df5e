#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "common.hpp"
#include "engine.hpp"

using tta::engine::BatchResult;
using tta::engine::classify;
using tta::engine::Engine;
using tta::engine::EngineConfig;
using tta::engine::forward_pass;
using tta::engine::LayerModel;
using tta::engine::Mode;
using tta::stats::ChannelStats;

namespace {

Eigen::MatrixXd random_matrix(long rows, long cols, std::mt19937_64& rng,
                              double sd = 1.0) {
  std::normal_distribution<double> normal(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (long c = 0; c < cols; ++c)
    for (long r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

std::vector<LayerModel> random_stack(long layers, long width,
                                     std::mt19937_64& rng) {
  std::uniform_real_distribution<double> var(0.5, 2.0);
  std::vector<LayerModel> stack;
  for (long l = 0; l < layers; ++l) {
    LayerModel layer;
    layer.transform = random_matrix(width, width, rng, 0.5);
    Eigen::VectorXd mean = random_matrix(width, 1, rng).col(0);
    Eigen::VectorXd variance(width);
    for (long f = 0; f < width; ++f) variance(f) = var(rng);
    layer.source_stats = ChannelStats(mean, variance);
    layer.scale = Eigen::VectorXd::Ones(width);
    layer.shift = Eigen::VectorXd::Zero(width);
    stack.push_back(std::move(layer));
  }
  return stack;
}

std::vector<Eigen::MatrixXd> random_stream(long batches, long width, long n,
                                           std::mt19937_64& rng) {
  std::vector<Eigen::MatrixXd> stream;
  for (long b = 0; b < batches; ++b)
    stream.push_back(random_matrix(width, n, rng).array() + 0.5);
  return stream;
}

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (long c = 0; c < a.cols(); ++c)
    for (long r = 0; r < a.rows(); ++r)
      if (a(r, c) != b(r, c)) return false;
  return true;
}

}  // namespace

TEST_CASE("forward pass reports pre-normalization moments") {
  auto rng = tta::make_rng(31, "engine-test");
  const auto stack = random_stack(1, 3, rng);
  const auto x = random_matrix(3, 20, rng);
  const auto result = forward_pass(
      stack, x, [&](long, const ChannelStats& measured) { return measured; });
  const auto expected = tta::stats::batch_moments(stack[0].transform * x);
  CHECK((result.measured[0].mean - expected.mean).cwiseAbs().maxCoeff() == 0.0);
  // Normalizing by the measured moments standardizes the batch.
  const auto out_stats = tta::stats::batch_moments(result.output);
  CHECK(out_stats.mean.cwiseAbs().maxCoeff() < 1e-10);
  CHECK((out_stats.variance.array() - 1.0).abs().maxCoeff() < 1e-3);
}

TEST_CASE("classify picks the nearest anchor, ties to the lower index") {
  Eigen::MatrixXd anchors(3, 2);
  anchors << 0, 0, 2, 0, 0, 2;
  Eigen::MatrixXd features(2, 4);
  features << 0.1, 1.9, 0.0, 2.0,   // x
              0.0, 0.1, 1.8, 2.0;   // y
  const auto labels = classify(features, anchors);
  CHECK(labels(0) == 0);
  CHECK(labels(1) == 1);
  CHECK(labels(2) == 2);
  CHECK(labels(3) == 1);  // equidistant from anchors 1 and 2: lower index wins
}

TEST_CASE("full mode with gamma 0 equals tema_only bit-exactly") {
  auto rng = tta::make_rng(37, "engine-test");
  const auto stack = random_stack(4, 5, rng);
  const auto stream = random_stream(100, 5, 8, rng);

  EngineConfig full_cfg;
  full_cfg.mode = Mode::kFull;
  full_cfg.gamma = 0.0;
  full_cfg.momentum = 0.1;
  EngineConfig tema_cfg;
  tema_cfg.mode = Mode::kTemaOnly;
  tema_cfg.momentum = 0.1;

  Engine full(stack, full_cfg);
  Engine tema(stack, tema_cfg);
  for (const auto& batch : stream) {
    const auto a = full.process_batch(batch);
    const auto b = tema.process_batch(batch);
    CHECK(bitwise_equal(a.output, b.output));
    for (std::size_t l = 0; l < a.alphas.size(); ++l) CHECK(a.alphas[l] == 0.0);
    for (std::size_t l = 0; l < a.target_estimates.size(); ++l)
      CHECK(a.target_estimates[l] == b.target_estimates[l]);
  }
}

TEST_CASE("tema_only with momentum 1 equals tbn bit-exactly") {
  auto rng = tta::make_rng(41, "engine-test");
  const auto stack = random_stack(3, 4, rng);
  const auto stream = random_stream(100, 4, 6, rng);

  EngineConfig tema_cfg;
  tema_cfg.mode = Mode::kTemaOnly;
  tema_cfg.momentum = 1.0;
  EngineConfig tbn_cfg;
  tbn_cfg.mode = Mode::kTbn;
  tbn_cfg.momentum = 0.25;  // tbn must ignore this and use per-batch stats

  Engine tema(stack, tema_cfg);
  Engine tbn(stack, tbn_cfg);
  for (const auto& batch : stream) {
    const auto a = tema.process_batch(batch);
    const auto b = tbn.process_batch(batch);
    CHECK(bitwise_equal(a.output, b.output));
  }
}

TEST_CASE("fixed_alpha 1 equals source_only bit-exactly") {
  auto rng = tta::make_rng(43, "engine-test");
  const auto stack = random_stack(3, 4, rng);
  const auto stream = random_stream(100, 4, 6, rng);

  EngineConfig fixed_cfg;
  fixed_cfg.mode = Mode::kFixedAlpha;
  fixed_cfg.fixed_alpha = 1.0;
  EngineConfig source_cfg;
  source_cfg.mode = Mode::kSourceOnly;

  Engine fixed(stack, fixed_cfg);
  Engine source(stack, source_cfg);
  for (const auto& batch : stream) {
    const auto a = fixed.process_batch(batch);
    const auto b = source.process_batch(batch);
    CHECK(bitwise_equal(a.output, b.output));
    for (double alpha : a.alphas) CHECK(alpha == 1.0);
  }
}

TEST_CASE("full mode keeps alphas in [0, gamma] and the prior contracts") {
  auto rng = tta::make_rng(47, "engine-test");
  const auto stack = random_stack(4, 5, rng);
  const auto stream = random_stream(60, 5, 16, rng);

  EngineConfig cfg;
  cfg.mode = Mode::kFull;
  cfg.momentum = 0.1;

  Engine engine(stack, cfg);
  std::vector<double> prior(stack.size(), 0.0);
  for (const auto& batch : stream) {
    const auto result = engine.process_batch(batch);
    for (std::size_t l = 0; l < result.alphas.size(); ++l) {
      CHECK(result.alphas[l] >= 0.0);
      CHECK(result.alphas[l] <= cfg.gamma);
      // One prior update moves each coordinate by at most tau * gamma.
      const double next = cfg.tau * result.alphas[l] + (1.0 - cfg.tau) * prior[l];
      CHECK(std::fabs(next - prior[l]) <= cfg.tau * cfg.gamma + 1e-15);
      prior[l] = next;
    }
    CHECK(result.divergences.size() == stack.size());
    for (double d : result.divergences) CHECK(d >= 0.0);
  }
}

TEST_CASE("tema_only target estimates equal the external update chain") {
  auto rng = tta::make_rng(53, "engine-test");
  LayerModel layer;
  layer.transform = Eigen::MatrixXd::Identity(3, 3);
  layer.source_stats = ChannelStats(Eigen::VectorXd::Zero(3),
                                    Eigen::VectorXd::Ones(3));
  layer.scale = Eigen::VectorXd::Ones(3);
  layer.shift = Eigen::VectorXd::Zero(3);

  EngineConfig cfg;
  cfg.mode = Mode::kTemaOnly;
  cfg.momentum = 0.1;
  Engine engine({layer}, cfg);

  auto chain = tta::stats::tema_init(cfg.momentum, layer.source_stats);
  for (int b = 0; b < 30; ++b) {
    const auto batch = random_matrix(3, 12, rng);
    chain = tta::stats::tema_update(chain, tta::stats::batch_moments(batch));
    const auto result = engine.process_batch(batch);
    CHECK((result.target_estimates[0].mean - chain.stats.mean)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
    CHECK((result.target_estimates[0].variance - chain.stats.variance)
              .cwiseAbs()
              .maxCoeff() < 1e-10);
  }
}

TEST_CASE("first-batch initialization replaces the source seed") {
  auto rng = tta::make_rng(59, "engine-test");
  LayerModel layer;
  layer.transform = Eigen::MatrixXd::Identity(2, 2);
  layer.source_stats = ChannelStats(Eigen::VectorXd::Constant(2, 50.0),
                                    Eigen::VectorXd::Constant(2, 9.0));
  layer.scale = Eigen::VectorXd::Ones(2);
  layer.shift = Eigen::VectorXd::Zero(2);

  EngineConfig cfg;
  cfg.mode = Mode::kTemaOnly;
  cfg.momentum = 0.01;
  cfg.tema_init_from_first_batch = true;
  Engine engine({layer}, cfg);

  const auto first = random_matrix(2, 10, rng);
  const auto result = engine.process_batch(first);
  CHECK(result.target_estimates[0] == tta::stats::batch_moments(first));
}

TEST_CASE("snapshot and restore resume the stream bit-exactly") {
  auto rng = tta::make_rng(61, "engine-test");
  const auto stack = random_stack(3, 4, rng);
  const auto warmup = random_stream(10, 4, 8, rng);
  const auto tail = random_stream(10, 4, 8, rng);

  EngineConfig cfg;
  cfg.mode = Mode::kFull;
  cfg.momentum = 0.1;

  Engine original(stack, cfg);
  for (const auto& batch : warmup) original.process_batch(batch);
  const auto snapshot = original.snapshot_json();

  Engine resumed(stack, cfg);
  resumed.restore_snapshot(snapshot);
  CHECK(resumed.step() == original.step());

  for (const auto& batch : tail) {
    const auto a = original.process_batch(batch);
    const auto b = resumed.process_batch(batch);
    CHECK(bitwise_equal(a.output, b.output));
    for (std::size_t l = 0; l < a.alphas.size(); ++l)
      CHECK(a.alphas[l] == b.alphas[l]);
  }
}

TEST_CASE("snapshot restore rejects mismatched engines") {
  auto rng = tta::make_rng(67, "engine-test");
  const auto stack = random_stack(2, 3, rng);
  EngineConfig full_cfg;
  full_cfg.mode = Mode::kFull;
  Engine full(stack, full_cfg);
  EngineConfig tbn_cfg;
  tbn_cfg.mode = Mode::kTbn;
  Engine tbn(stack, tbn_cfg);

  const auto snapshot = full.snapshot_json();
  CHECK_THROWS(tbn.restore_snapshot(snapshot));
  CHECK_THROWS(full.restore_snapshot("{\"format_version\": 99}"));
  CHECK_THROWS(full.restore_snapshot("not json"));
}

TEST_CASE("engine rejects empty input") {
  auto rng = tta::make_rng(71, "engine-test");
  const auto stack = random_stack(2, 3, rng);
  Engine engine(stack, EngineConfig{});
  CHECK_THROWS(engine.process_batch(Eigen::MatrixXd(3, 0)));
  CHECK_THROWS(Engine({}, EngineConfig{}));
}
