#include "rectifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tta::rectifier {

double gaussian_sym_kl(const stats::ChannelStats& p, const stats::ChannelStats& q,
                       double eps, ChannelAggregate aggregate) {
  if (p.channels() != q.channels())
    throw std::invalid_argument("gaussian_sym_kl: channel count mismatch");
  if (!(eps > 0.0)) throw std::invalid_argument("gaussian_sym_kl: eps must be > 0");

  const long f = p.channels();
  double total = 0.0;
  for (long c = 0; c < f; ++c) {
    const double vp = std::max(p.variance(c), eps);
    const double vq = std::max(q.variance(c), eps);
    const double d2 = (p.mean(c) - q.mean(c)) * (p.mean(c) - q.mean(c));
    // 0.5*KL(p||q) + 0.5*KL(q||p); the log-variance terms cancel, leaving
    // a form that is symmetric in its arguments at the expression level.
    total += (vp + d2) / (4.0 * vq) + (vq + d2) / (4.0 * vp) - 0.5;
  }
  if (aggregate == ChannelAggregate::kMean && f > 0)
    total /= static_cast<double>(f);
  return std::max(0.0, total);
}

std::vector<double> divergence_to_alpha(const std::vector<double>& divergences,
                                        double gamma) {
  if (divergences.empty())
    throw std::invalid_argument("divergence_to_alpha: empty divergence vector");
  // gamma = 0 is accepted so the full engine mode degenerates cleanly to
  // target-only mixing.
  if (gamma < 0.0 || gamma > 1.0)
    throw std::invalid_argument("divergence_to_alpha: gamma must be in [0, 1]");

  const auto l = static_cast<double>(divergences.size());
  double mean = 0.0;
  for (double d : divergences) mean += d;
  mean /= l;
  double var = 0.0;
  for (double d : divergences) var += (d - mean) * (d - mean);
  var /= l;
  const double std_dev = std::sqrt(var);

  std::vector<double> alphas(divergences.size());
  for (std::size_t i = 0; i < divergences.size(); ++i) {
    const double z = std_dev > 0.0 ? (divergences[i] - mean) / std_dev : 0.0;
    const double clipped = std::clamp(z, -1.0, 1.0);
    alphas[i] = gamma * (clipped + 1.0) / 2.0;
  }
  return alphas;
}

RectifierState make_rectifier(long layers, double gamma, double tau) {
  if (layers < 1) throw std::invalid_argument("make_rectifier: need at least one layer");
  if (gamma < 0.0 || gamma > 1.0) throw std::invalid_argument("make_rectifier: gamma must be in [0, 1]");
  if (tau < 0.0 || tau > 1.0) throw std::invalid_argument("make_rectifier: tau must be in [0, 1]");
  RectifierState state;
  state.prior.assign(static_cast<std::size_t>(layers), 0.0);
  state.gamma = gamma;
  state.tau = tau;
  return state;
}

RectifierState update_prior(const RectifierState& state,
                            const std::vector<double>& fresh) {
  if (fresh.size() != state.prior.size())
    throw std::invalid_argument("update_prior: layer count mismatch");
  RectifierState next = state;
  for (std::size_t i = 0; i < fresh.size(); ++i)
    next.prior[i] = state.tau * fresh[i] + (1.0 - state.tau) * state.prior[i];
  next.step = state.step + 1;
  return next;
}

}  // namespace tta::rectifier
