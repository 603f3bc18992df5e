#pragma once

#include <cstdint>
#include <gmpxx.h>

namespace tta::diversity {

// C(n, k) with exact integer arithmetic. Returns 0 when k > n.
mpz_class binomial(unsigned long n, unsigned long k);

// Expected number of distinct categories in a batch of n samples drawn
// from k equally likely categories, counted over uniform compositions:
//   E(M|N) = sum_{j=1}^{K} j * C(N-1, j-1) * C(K, j) / C(N+K-1, K-1)
// Exact rational result; requires k >= 1 and n >= 1.
mpq_class expected_diversity_exact(long k, long n);

// Same quantity with a single final conversion to double.
double expected_diversity(long k, long n);

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

// Monte Carlo estimate of expected diversity under the uniform-composition
// model: each trial draws k-1 bar positions uniformly among n+k-1 slots
// (stars and bars) and counts the nonzero parts. Deterministic per seed.
McEstimate sample_multiset_diversity(long k, long n, long trials,
                                     std::uint64_t seed);

}  // namespace tta::diversity
