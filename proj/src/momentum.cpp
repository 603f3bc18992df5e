#include "momentum.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "diversity.hpp"

namespace tta::momentum {

long effective_batch_count(double m, double epsilon) {
  if (!(m > 0.0) || m > 1.0) throw std::invalid_argument("effective_batch_count: m must be in (0, 1]");
  if (!(epsilon > 0.0) || epsilon >= 1.0) throw std::invalid_argument("effective_batch_count: epsilon must be in (0, 1)");
  if (m == 1.0) return 1;  // history fully discarded; only the current batch
  const double count = std::floor(std::log(epsilon) / std::log1p(-m));
  return std::max(1L, static_cast<long>(count));
}

long effective_pool(double m, long n_t, double epsilon) {
  if (n_t < 1) throw std::invalid_argument("effective_pool: n_t must be >= 1");
  return effective_batch_count(m, epsilon) * n_t;
}

double momentum_objective(double m, long n_s, long n_t, long k,
                          const MomentumConfig& cfg) {
  if (n_s < 1) throw std::invalid_argument("momentum_objective: n_s must be >= 1");
  const long pool = effective_pool(m, n_t, cfg.epsilon);
  const double div_s = diversity::expected_diversity(k, n_s);
  const double div_t = diversity::expected_diversity(k, pool);
  return std::abs(div_s / div_t - 1.0) +
         cfg.lambda * static_cast<double>(pool) / static_cast<double>(n_s);
}

MomentumChoice select_momentum(long n_s, long n_t, long k,
                               const MomentumConfig& cfg) {
  if (cfg.grid.empty()) throw std::invalid_argument("select_momentum: empty momentum grid");
  MomentumChoice choice;
  choice.objective_values.reserve(cfg.grid.size());
  bool first = true;
  double best = 0.0;
  for (double m : cfg.grid) {
    const double value = momentum_objective(m, n_s, n_t, k, cfg);
    choice.objective_values.emplace_back(m, value);
    if (first || value < best || (value == best && m > choice.m_star)) {
      best = value;
      choice.m_star = m;
      first = false;
    }
  }
  choice.pool_size = effective_pool(choice.m_star, n_t, cfg.epsilon);
  return choice;
}

}  // namespace tta::momentum
