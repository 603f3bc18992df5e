#pragma once

#include <utility>
#include <vector>

namespace tta::momentum {

struct MomentumConfig {
  std::vector<double> grid{1.0, 0.1, 0.01, 0.001};
  double epsilon = 0.1;  // relative-weight cutoff for the effective pool
  double lambda = 0.01;  // pool-size penalty
};

// Number of batches whose EMA weight stays above the epsilon cutoff:
// floor(log_{1-m} epsilon), with the m = 1 convention of a single batch.
long effective_batch_count(double m, double epsilon);

// Effective sample pool: effective_batch_count(m, epsilon) * n_t.
long effective_pool(double m, long n_t, double epsilon);

// Diversity-alignment objective:
//   |E(M|n_s) / E(M|pool) - 1| + lambda * pool / n_s
double momentum_objective(double m, long n_s, long n_t, long k,
                          const MomentumConfig& cfg);

struct MomentumChoice {
  double m_star = 1.0;
  long pool_size = 0;
  // (grid value, objective value), in grid order.
  std::vector<std::pair<double, double>> objective_values;
};

// Grid search for the objective minimizer. Ties break toward larger m.
MomentumChoice select_momentum(long n_s, long n_t, long k,
                               const MomentumConfig& cfg);

}  // namespace tta::momentum
