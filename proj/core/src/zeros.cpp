#include "ouk/zeros.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "ouk/errors.hpp"
#include "ouk/mehler.hpp"
#include "ouk/rng.hpp"

namespace ouk {
namespace {

constexpr double kTFloor = 1e-8;
constexpr double kDead = 1e-300;  // |N| below this carries no usable sign

int sgn(double v) {
  if (std::abs(v) < kDead) return 0;
  return v > 0.0 ? 1 : -1;
}

std::vector<double> log_grid(double lo, double hi, int count) {
  std::vector<double> t(count);
  const double a = std::log(lo), b = std::log(hi);
  for (int i = 0; i < count; ++i)
    t[i] = std::exp(a + (b - a) * i / (count - 1));
  t.front() = lo;
  t.back() = hi;
  return t;
}

// dK/dt = K * N with K > 0 everywhere, so the sign scan runs on N alone.
ZeroScanResult scan_pair(const KernelEvaluator& ev, const std::vector<double>& grid,
                         const std::vector<KernelPieces>& cache, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u) {
  ZeroScanResult res;
  res.x = x;
  res.u = u;
  res.grid_size = static_cast<int>(grid.size());

  auto sign_at = [&](double t) { return sgn(ev.nt(ev.pieces(t), x, u)); };

  // Below the floor the 1/t term of N dominates; assert the lock.
  const int locked = sign_at(1e-10);
  for (int i = 1; i <= 16; ++i) {
    const double t = 1e-10 * std::pow(100.0, i / 16.0);
    if (sign_at(t) != locked)
      fail(ErrorCode::SignAmbiguity, "sign of dK/dt is not locked below the scan floor");
  }

  // Sign at a grid node, with one subdivision probe before flagging a dead cell.
  auto node_sign = [&](int i) {
    const int s = sgn(ev.nt(cache[i], x, u));
    if (s != 0) return s;
    const int probe = sign_at(grid[i] * (1.0 + 1e-9));
    if (probe == 0)
      fail(ErrorCode::SignAmbiguity, "dK/dt numerically vanishes over a whole grid cell");
    return probe;
  };

  auto refine = [&](double a, double b, int sa) {
    while (b - a > 1e-12) {
      const double mid = 0.5 * (a + b);
      const int sm = sign_at(mid);
      if (sm == 0) return mid;  // landed on the zero itself
      if (sm == sa)
        a = mid;
      else
        b = mid;
    }
    return 0.5 * (a + b);
  };

  int prev = node_sign(0);
  for (int i = 1; i < res.grid_size; ++i) {
    const int cur = node_sign(i);
    if (prev * cur < 0) res.locations.push_back(refine(grid[i - 1], grid[i], prev));
    prev = cur;
  }
  res.count = static_cast<int>(res.locations.size());
  res.min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < res.locations.size(); ++i)
    res.min_gap = std::min(res.min_gap, res.locations[i] - res.locations[i - 1]);
  res.refined = true;
  return res;
}

void check_pair(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (x.size() != m.n || u.size() != m.n)
    fail(ErrorCode::DimensionMismatch, "point dimension does not match the model");
  if (!x.allFinite() || !u.allFinite())
    fail(ErrorCode::DomainError, "points must be finite");
}

}  // namespace

ZeroScanResult count_zeros(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                           int grid_size) {
  check_pair(m, x, u);
  if (grid_size < 256) fail(ErrorCode::DomainError, "zero scan needs a grid of at least 256");
  KernelEvaluator ev(m);
  const std::vector<double> grid = log_grid(kTFloor, 1.0, grid_size);
  std::vector<KernelPieces> cache;
  cache.reserve(grid.size());
  for (double t : grid) cache.push_back(ev.pieces(t));
  return scan_pair(ev, grid, cache, x, u);
}

ZeroSweepResult zero_sweep(const OUModel& m, int samples, std::uint64_t seed, int grid_size) {
  if (samples < 1000) fail(ErrorCode::DomainError, "sweep needs at least 1000 pairs");
  if (grid_size < 256) fail(ErrorCode::DomainError, "zero scan needs a grid of at least 256");
  ZeroSweepResult out;
  out.samples = samples;
  out.grid_size = grid_size;
  out.seed = seed;
  out.rows.reserve(samples);

  KernelEvaluator ev(m);
  const std::vector<double> grid = log_grid(kTFloor, 1.0, grid_size);
  std::vector<KernelPieces> cache;  // shared across pairs, built once
  cache.reserve(grid.size());
  for (double t : grid) cache.push_back(ev.pieces(t));

  static constexpr double kScales[3] = {1.0, 3.0, 10.0};
  for (int pair = 0; pair < samples; ++pair) {
    Rng r = Rng::fork(seed, static_cast<std::uint64_t>(pair));
    const double scale = kScales[pair % 3];
    const Eigen::VectorXd x = scale * (m.Q_inf_sqrt * r.normal_vector(m.n));
    const Eigen::VectorXd u = scale * (m.Q_inf_sqrt * r.normal_vector(m.n));
    ZeroScanResult scan = scan_pair(ev, grid, cache, x, u);
    out.histogram[scan.count] += 1;
    out.max_count = std::max(out.max_count, scan.count);
    ZeroPairRow row;
    row.pair_id = pair;
    row.scale = scale;
    row.count = scan.count;
    row.locations = std::move(scan.locations);
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::int64_t theoretical_bound_estimate(const OUModel& m) {
  std::vector<std::complex<double>> nu;
  for (const auto& z : m.eigB) {
    bool dup = false;
    for (const auto& w : nu) dup = dup || std::abs(z - w) < 1e-9;
    if (!dup) nu.push_back(z);
  }
  const int k = static_cast<int>(nu.size());
  const int wmax = 2 * m.n + 2;

  std::set<std::pair<long long, long long>> distinct;
  double mu_max = 0.0;
  std::vector<int> w(k, -wmax);
  while (true) {
    std::complex<double> s{0.0, 0.0};
    for (int j = 0; j < k; ++j) s += static_cast<double>(w[j]) * nu[j];
    const double mu = std::abs(s.imag());
    mu_max = std::max(mu_max, mu);
    distinct.insert({std::llround(s.real() * 1e9), std::llround(mu * 1e9)});
    int j = 0;
    while (j < k && w[j] == wmax) { w[j] = -wmax; ++j; }
    if (j == k) break;
    ++w[j];
  }

  const std::int64_t kappa = static_cast<std::int64_t>(std::ceil(mu_max)) + 1;
  const long long K = static_cast<long long>(distinct.size()) * (1LL * m.n * m.n + 1);
  constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();
  if (K + 1 >= 62) return kMax;
  const std::int64_t doubling = (std::int64_t(1) << (K + 1)) - 2;
  if (doubling > kMax / kappa) return kMax;
  return kappa * doubling;
}

}  // namespace ouk
