#pragma once

#include <vector>

#include "stats.hpp"

namespace tta::rectifier {

enum class ChannelAggregate { kMean, kSum };

// Symmetric KL divergence between two diagonal Gaussians, aggregated over
// channels (mean by default so layers of different widths stay comparable).
// Variances are floored at eps before evaluation.
double gaussian_sym_kl(const stats::ChannelStats& p, const stats::ChannelStats& q,
                       double eps = 1e-12,
                       ChannelAggregate aggregate = ChannelAggregate::kMean);

// Standardize-clip-scale mapping from cross-layer divergences to mixing
// coefficients: z-score over layers (all zeros when the spread is zero),
// clip to [-1, 1], shift into [0, 1], scale by gamma.
std::vector<double> divergence_to_alpha(const std::vector<double>& divergences,
                                        double gamma);

// EMA-smoothed history of mixing coefficients, one entry per layer.
struct RectifierState {
  std::vector<double> prior;
  double gamma = 0.5;
  double tau = 0.1;
  long step = 0;
};

// Prior starts at zero for every layer.
RectifierState make_rectifier(long layers, double gamma = 0.5, double tau = 0.1);

// prior <- tau * fresh + (1 - tau) * prior
RectifierState update_prior(const RectifierState& state,
                            const std::vector<double>& fresh);

}  // namespace tta::rectifier
