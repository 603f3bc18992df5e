#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "diversity.hpp"
#include "momentum.hpp"

using tta::momentum::effective_batch_count;
using tta::momentum::effective_pool;
using tta::momentum::momentum_objective;
using tta::momentum::MomentumConfig;
using tta::momentum::select_momentum;

namespace {

// Independent oracle: multiply (1 - m) until the running weight drops below
// the cutoff; the count of surviving factors is the effective batch count.
long repeated_multiplication_count(double m, double epsilon) {
  if (m >= 1.0) return 1;
  long count = 0;
  double weight = 1.0;
  while (true) {
    weight *= 1.0 - m;
    if (weight < epsilon) break;
    ++count;
  }
  return count < 1 ? 1 : count;
}

}  // namespace

TEST_CASE("effective batch count matches the frozen table") {
  CHECK(effective_batch_count(1.0, 0.1) == 1);
  CHECK(effective_batch_count(0.1, 0.1) == 21);
  CHECK(effective_batch_count(0.01, 0.1) == 229);
  CHECK(effective_batch_count(0.001, 0.1) == 2301);
}

TEST_CASE("effective batch count matches repeated multiplication") {
  for (double m : {1.0, 0.5, 0.3, 0.1, 0.05, 0.01, 0.005, 0.001})
    for (double eps : {0.5, 0.1, 0.01})
      CHECK(effective_batch_count(m, eps) == repeated_multiplication_count(m, eps));
}

TEST_CASE("effective pool scales with the batch size") {
  CHECK(effective_pool(0.01, 2, 0.1) == 458);
  CHECK(effective_pool(0.1, 16, 0.1) == 336);
  CHECK(effective_pool(1.0, 200, 0.1) == 200);
  for (double m : {1.0, 0.1, 0.01})
    CHECK(effective_pool(m, 7, 0.1) == 7 * effective_batch_count(m, 0.1));
}

TEST_CASE("objective matches a from-scratch recomputation") {
  const MomentumConfig cfg;
  for (double m : cfg.grid)
    for (long n_t : {1L, 2L, 16L, 200L}) {
      const long pool = effective_pool(m, n_t, cfg.epsilon);
      const double expected =
          std::fabs(tta::diversity::expected_diversity(10, 128) /
                        tta::diversity::expected_diversity(10, pool) -
                    1.0) +
          cfg.lambda * static_cast<double>(pool) / 128.0;
      CHECK(momentum_objective(m, 128, n_t, 10, cfg) ==
            doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("grid search reproduces the frozen selections") {
  const MomentumConfig cfg;
  CHECK(select_momentum(128, 1, 10, cfg).m_star == 0.01);
  CHECK(select_momentum(128, 2, 10, cfg).m_star == 0.01);
  CHECK(select_momentum(128, 4, 10, cfg).m_star == 0.1);
  CHECK(select_momentum(128, 16, 10, cfg).m_star == 0.1);
  CHECK(select_momentum(128, 64, 10, cfg).m_star == 1.0);
  CHECK(select_momentum(128, 200, 10, cfg).m_star == 1.0);
}

TEST_CASE("selection reports the grid objectives in order") {
  const MomentumConfig cfg;
  const auto choice = select_momentum(128, 2, 10, cfg);
  REQUIRE(choice.objective_values.size() == cfg.grid.size());
  double best = choice.objective_values.front().second;
  for (std::size_t i = 0; i < cfg.grid.size(); ++i) {
    CHECK(choice.objective_values[i].first == cfg.grid[i]);
    CHECK(choice.objective_values[i].second ==
          momentum_objective(cfg.grid[i], 128, 2, 10, cfg));
    best = std::min(best, choice.objective_values[i].second);
  }
  CHECK(momentum_objective(choice.m_star, 128, 2, 10, cfg) == best);
  CHECK(choice.pool_size == effective_pool(choice.m_star, 2, cfg.epsilon));
}

TEST_CASE("chosen momentum is weakly nondecreasing in the batch size") {
  const MomentumConfig cfg;
  double prev = 0.0;
  for (long n_t : {1L, 2L, 4L, 16L, 64L, 200L}) {
    const double m = select_momentum(128, n_t, 10, cfg).m_star;
    CHECK(m >= prev);
    prev = m;
  }
}

TEST_CASE("ties break toward the larger momentum") {
  // With a single category the diversity ratio is always 1, so a zero
  // lambda scores every grid point identically.
  MomentumConfig cfg;
  cfg.grid = {0.001, 0.01, 0.1, 1.0};
  cfg.lambda = 0.0;
  const auto choice = select_momentum(128, 2, 1, cfg);
  for (const auto& [m, objective] : choice.objective_values)
    CHECK(objective == 0.0);
  CHECK(choice.m_star == 1.0);
}
