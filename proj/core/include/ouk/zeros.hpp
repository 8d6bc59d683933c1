#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <vector>

#include "ouk/model.hpp"

namespace ouk {

// Sign scan of t -> dK_t/dt(x,u) over (0,1] for a fixed pair.
struct ZeroScanResult {
  Eigen::VectorXd x, u;
  int count = 0;
  std::vector<double> locations;  // strictly increasing, bisection-refined
  double min_gap = 0.0;           // spacing of consecutive zeros; inf when count < 2
  int grid_size = 0;
  bool refined = false;
};

// Counts sign changes of dK/dt on a log-spaced grid over [1e-8, 1] and
// refines each crossing by bisection to bracket width 1e-12.  Since
// dK/dt = K * N with K > 0, the scan runs on the well-scaled factor N alone
// (no underflow at far pairs).  The sign below 1e-8 is locked by the 1/t
// small-time asymptotics; this is asserted by sampling [1e-10, 1e-8].
// Tangential zeros (touch without sign change) are invisible by design:
// downstream bounds only consume the constant-sign interval structure.
// Errors: DimensionMismatch, DomainError (grid_size < 256), SignAmbiguity.
ZeroScanResult count_zeros(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                           int grid_size = 4096);

struct ZeroPairRow {
  std::int64_t pair_id = 0;
  double scale = 1.0;
  int count = 0;
  std::vector<double> locations;
};

struct ZeroSweepResult {
  std::map<int, std::int64_t> histogram;  // zero count -> number of pairs
  int max_count = 0;
  int samples = 0;
  int grid_size = 0;
  std::uint64_t seed = 0;
  std::vector<ZeroPairRow> rows;
};

// Scans `samples` pairs drawn from the invariant Gaussian squared, magnified
// by cycling scales {1, 3, 10}.  Per-pair streams are forked from `seed`, so
// any row can be reproduced in isolation.  Pairs are independent and pure.
// Errors: DomainError (samples < 1000), plus count_zeros errors.
ZeroSweepResult zero_sweep(const OUModel& m, int samples, std::uint64_t seed, int grid_size = 4096);

// Heuristic ceiling on the zero count from the exponential-polynomial
// structure of N_t: enumerates frequency combinations sum m_j nu_j over the
// distinct eigenvalues nu_j of B with integer weights |m_j| <= 2n+2, takes
// kappa = ceil(max |Im|) + 1, counts D distinct (Re, |Im|) pairs, sets
// K = D * (n^2 + 1) (per-factor polynomial degree at most n^2), and returns
// kappa * (2^{K+1} - 2) saturated at int64 max.  HEURISTIC: routinely a wild
// overcount; useful only as a finite consistency ceiling.
std::int64_t theoretical_bound_estimate(const OUModel& m);

}  // namespace ouk
