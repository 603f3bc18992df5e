#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "common.hpp"
#include "stats.hpp"

using tta::stats::batch_moments;
using tta::stats::ChannelStats;
using tta::stats::ema_weights;
using tta::stats::mix_statistics;
using tta::stats::normalize_features;
using tta::stats::tema_init;
using tta::stats::tema_update;
using tta::stats::TemaState;

namespace {

Eigen::MatrixXd random_matrix(long rows, long cols, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 2.0);
  Eigen::MatrixXd m(rows, cols);
  for (long c = 0; c < cols; ++c)
    for (long r = 0; r < rows; ++r) m(r, c) = normal(rng);
  return m;
}

// Independent two-pass oracle for per-channel moments.
ChannelStats two_pass_moments(const Eigen::MatrixXd& x) {
  const long f = x.rows();
  const long n = x.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(f);
  for (long c = 0; c < n; ++c) mean += x.col(c);
  mean /= static_cast<double>(n);
  Eigen::VectorXd var = Eigen::VectorXd::Zero(f);
  for (long c = 0; c < n; ++c) {
    const Eigen::VectorXd d = x.col(c) - mean;
    var += d.cwiseProduct(d);
  }
  var /= static_cast<double>(n);
  return ChannelStats(mean, var);
}

}  // namespace

TEST_CASE("batch moments match a two-pass oracle") {
  auto rng = tta::make_rng(5, "stats-test");
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = random_matrix(6, 37, rng);
    const auto fast = batch_moments(x);
    const auto slow = two_pass_moments(x);
    CHECK((fast.mean - slow.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fast.variance - slow.variance).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(fast.variance.minCoeff() >= 0.0);
  }
}

TEST_CASE("constant channels have zero variance") {
  Eigen::MatrixXd x(2, 5);
  x.row(0).setConstant(3.25);
  x.row(1) << 1, 2, 3, 4, 5;
  const auto stats = batch_moments(x);
  CHECK(stats.mean(0) == 3.25);
  CHECK(stats.variance(0) == 0.0);
  CHECK(stats.mean(1) == 3.0);
  CHECK(stats.variance(1) == doctest::Approx(2.0));
}

TEST_CASE("EMA weight decomposition reconstructs iterated updates") {
  auto rng = tta::make_rng(7, "stats-test");
  for (double m : {1.0, 0.1, 0.01, 0.001}) {
    const long steps = 50;
    const ChannelStats source(Eigen::VectorXd::Constant(4, 1.5),
                              Eigen::VectorXd::Constant(4, 2.0));
    TemaState state = tema_init(m, source);
    std::vector<ChannelStats> batches;
    for (long t = 0; t < steps; ++t) {
      batches.push_back(two_pass_moments(random_matrix(4, 16, rng)));
      state = tema_update(state, batches.back());
    }
    CHECK(state.batch_index == steps);

    const auto weights = ema_weights(steps, m);
    REQUIRE(static_cast<long>(weights.batch.size()) == steps);
    double weight_sum = weights.initial;
    Eigen::VectorXd mean = weights.initial * source.mean;
    Eigen::VectorXd var = weights.initial * source.variance;
    for (long t = 0; t < steps; ++t) {
      weight_sum += weights.batch[t];
      mean += weights.batch[t] * batches[t].mean;
      var += weights.batch[t] * batches[t].variance;
    }
    CHECK(weight_sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((mean - state.stats.mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((var - state.stats.variance).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("momentum one forgets the initialization immediately") {
  const ChannelStats source(Eigen::VectorXd::Constant(2, 100.0),
                            Eigen::VectorXd::Constant(2, 100.0));
  const ChannelStats batch(Eigen::VectorXd::Constant(2, -1.0),
                           Eigen::VectorXd::Constant(2, 0.5));
  const auto state = tema_update(tema_init(1.0, source), batch);
  CHECK(state.stats == batch);
}

TEST_CASE("mixture moments match the pooled-sample oracle") {
  // Mixing the group statistics with alpha = n1 / (n1 + n2) must reproduce
  // the plain moments of the concatenated sample.
  auto rng = tta::make_rng(11, "stats-test");
  std::uniform_int_distribution<long> size(1, 60);
  for (int trial = 0; trial < 1000; ++trial) {
    const long n1 = size(rng);
    const long n2 = size(rng);
    const auto a = random_matrix(3, n1, rng);
    const auto b = random_matrix(3, n2, rng);
    Eigen::MatrixXd pooled(3, n1 + n2);
    pooled << a, b;
    const double alpha = static_cast<double>(n1) / static_cast<double>(n1 + n2);
    const auto mixed = mix_statistics(alpha, batch_moments(a), batch_moments(b));
    const auto oracle = batch_moments(pooled);
    CHECK((mixed.mean - oracle.mean).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((mixed.variance - oracle.variance).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("mixing endpoints return the inputs") {
  const ChannelStats s(Eigen::VectorXd::Constant(3, 1.0),
                       Eigen::VectorXd::Constant(3, 4.0));
  const ChannelStats t(Eigen::VectorXd::Constant(3, -2.0),
                       Eigen::VectorXd::Constant(3, 0.25));
  CHECK(mix_statistics(1.0, s, t) == s);
  CHECK(mix_statistics(0.0, s, t) == t);
  const auto half = mix_statistics(0.5, s, t);
  CHECK(half.mean(0) == doctest::Approx(-0.5));
  // 0.5*4 + 0.5*0.25 + 0.25*(1 - (-2))^2 = 4.375
  CHECK(half.variance(0) == doctest::Approx(4.375));
}

TEST_CASE("normalization standardizes and applies the affine transform") {
  Eigen::MatrixXd x(1, 3);
  x << 1.0, 2.0, 3.0;
  const ChannelStats stats(Eigen::VectorXd::Constant(1, 2.0),
                           Eigen::VectorXd::Constant(1, 4.0));
  const Eigen::VectorXd scale = Eigen::VectorXd::Constant(1, 3.0);
  const Eigen::VectorXd shift = Eigen::VectorXd::Constant(1, 1.0);
  const auto y = normalize_features(x, stats, scale, shift, 0.0);
  CHECK(y(0, 0) == doctest::Approx(-0.5));
  CHECK(y(0, 1) == doctest::Approx(1.0));
  CHECK(y(0, 2) == doctest::Approx(2.5));
}

TEST_CASE("normalization epsilon guards zero variance") {
  Eigen::MatrixXd x(1, 2);
  x << 5.0, 5.0;
  const ChannelStats stats(Eigen::VectorXd::Constant(1, 5.0),
                           Eigen::VectorXd::Zero(1));
  const auto y = normalize_features(x, stats, Eigen::VectorXd::Ones(1),
                                    Eigen::VectorXd::Zero(1), 1e-5);
  CHECK(std::isfinite(y(0, 0)));
  CHECK(y(0, 0) == 0.0);
}

TEST_CASE("stats JSON round-trips bit-exactly") {
  auto rng = tta::make_rng(13, "stats-test");
  const auto stats = two_pass_moments(random_matrix(9, 41, rng));
  const auto restored = tta::stats::stats_from_json(tta::stats::stats_to_json(stats));
  CHECK(restored == stats);

  const auto path = (std::filesystem::temp_directory_path() /
                     "tta_stats_roundtrip.json")
                        .string();
  tta::stats::save_stats(path, stats);
  CHECK(tta::stats::load_stats(path) == stats);
  std::remove(path.c_str());
}

TEST_CASE("malformed stats JSON is rejected") {
  CHECK_THROWS(tta::stats::stats_from_json("{}"));
  CHECK_THROWS(tta::stats::stats_from_json("not json"));
  CHECK_THROWS(tta::stats::stats_from_json(
      R"({"format_version":1,"F":2,"mean":[0.0],"variance":[1.0,1.0]})"));
}
