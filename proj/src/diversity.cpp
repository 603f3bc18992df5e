#include "diversity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "common.hpp"

namespace tta::diversity {

mpz_class binomial(unsigned long n, unsigned long k) {
  if (k > n) return 0;
  mpz_class r;
  mpz_bin_uiui(r.get_mpz_t(), n, k);
  return r;
}

mpq_class expected_diversity_exact(long k, long n) {
  if (k < 1 || n < 1) throw std::invalid_argument("expected_diversity: K and N must be >= 1");
  const auto ku = static_cast<unsigned long>(k);
  const auto nu = static_cast<unsigned long>(n);
  mpz_class numer = 0;
  for (unsigned long j = 1; j <= ku; ++j) {
    numer += mpz_class(j) * binomial(nu - 1, j - 1) * binomial(ku, j);
  }
  mpq_class r(numer, binomial(nu + ku - 1, ku - 1));
  r.canonicalize();
  return r;
}

double expected_diversity(long k, long n) {
  return expected_diversity_exact(k, n).get_d();
}

McEstimate sample_multiset_diversity(long k, long n, long trials,
                                     std::uint64_t seed) {
  if (k < 1 || n < 1) throw std::invalid_argument("sample_multiset_diversity: K and N must be >= 1");
  if (trials < 1) throw std::invalid_argument("sample_multiset_diversity: trials must be >= 1");

  auto rng = make_rng(seed, "diversity-mc");
  const long slots = n + k - 1;  // stars-and-bars slot count
  std::vector<long> bars(static_cast<std::size_t>(k - 1));

  double sum = 0.0;
  double sum_sq = 0.0;
  std::unordered_set<long> chosen;
  for (long t = 0; t < trials; ++t) {
    // Floyd's algorithm: k-1 distinct slots, uniform over all subsets.
    chosen.clear();
    for (long j = slots - (k - 1); j < slots; ++j) {
      std::uniform_int_distribution<long> dist(0, j);
      long v = dist(rng);
      if (!chosen.insert(v).second) chosen.insert(j);
    }
    bars.assign(chosen.begin(), chosen.end());
    std::sort(bars.begin(), bars.end());

    long distinct = 0;
    long prev = -1;
    for (long b : bars) {
      if (b - prev - 1 > 0) ++distinct;
      prev = b;
    }
    if (slots - 1 - prev > 0) ++distinct;

    const auto d = static_cast<double>(distinct);
    sum += d;
    sum_sq += d * d;
  }

  McEstimate est;
  const auto tr = static_cast<double>(trials);
  est.mean = sum / tr;
  if (trials > 1) {
    const double var = std::max(0.0, (sum_sq - sum * sum / tr) / (tr - 1.0));
    est.std_error = std::sqrt(var / tr);
  }
  return est;
}

}  // namespace tta::diversity
