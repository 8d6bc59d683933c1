#include "ouk/localization.hpp"

#include <cmath>
#include <string>

#include "ouk/errors.hpp"
#include "ouk/mehler.hpp"
#include "ouk/rng.hpp"

namespace ouk {

namespace {
// Unit cells, packed integer key; coordinates stay well inside +-kGridHalf
// for every domain radius the experiments use.
constexpr std::int64_t kGridSpan = 1 << 12;
constexpr std::int64_t kGridHalf = kGridSpan / 2;

std::int64_t key_of_coords(const Eigen::VectorXd& x) {
  std::int64_t key = 0;
  for (int i = 0; i < x.size(); ++i) {
    std::int64_t c = static_cast<std::int64_t>(std::floor(x[i])) + kGridHalf;
    if (c < 0 || c >= kGridSpan) return -1;
    key = key * kGridSpan + c;
  }
  return key;
}

// quintic smoothstep on [0,1] and its derivative
double smoothstep5(double y) { return y * y * y * (10.0 + y * (-15.0 + 6.0 * y)); }
double smoothstep5_d(double y) {
  const double a = y * (1.0 - y);
  return 30.0 * a * a;
}

// shell profile: 1 for rho <= inner, 0 for rho >= inner+1, smooth between
double shell(double rho, double inner, double* d_drho) {
  if (rho <= inner) {
    if (d_drho) *d_drho = 0;
    return 1.0;
  }
  if (rho >= inner + 1.0) {
    if (d_drho) *d_drho = 0;
    return 0.0;
  }
  const double y = inner + 1.0 - rho;
  if (d_drho) *d_drho = -smoothstep5_d(y);
  return smoothstep5(y);
}
}  // namespace

std::int64_t BallCover::cell_key(const Eigen::VectorXd& x) const { return key_of_coords(x); }

const std::vector<int>& BallCover::neighbors(const Eigen::VectorXd& x) const {
  static const std::vector<int> empty;
  auto it = cell_index.find(key_of_coords(x));
  return it == cell_index.end() ? empty : it->second;
}

namespace {

// does the closed ball B(c, r) meet the unit cell with lower corner `lo`?
bool ball_meets_cell(const Eigen::VectorXd& c, double r, const Eigen::VectorXi& lo) {
  double d2 = 0;
  for (int i = 0; i < c.size(); ++i) {
    const double a = static_cast<double>(lo[i]);
    const double clamped = std::min(std::max(c[i], a), a + 1.0);
    d2 += (c[i] - clamped) * (c[i] - clamped);
  }
  return d2 <= r * r;
}

void index_center(BallCover& cov, int j) {
  const Eigen::VectorXd& c = cov.centers[j];
  const double reach = 6.0 * cov.radii[j] + 1e-9;
  const int n = cov.n;
  Eigen::VectorXi lo(n), hi(n), cur(n);
  for (int i = 0; i < n; ++i) {
    lo[i] = static_cast<int>(std::floor(c[i] - reach));
    hi[i] = static_cast<int>(std::floor(c[i] + reach));
    cur[i] = lo[i];
  }
  while (true) {
    if (ball_meets_cell(c, reach, cur)) {
      std::int64_t key = 0;
      bool ok = true;
      for (int i = 0; i < n; ++i) {
        std::int64_t cc = cur[i] + kGridHalf;
        if (cc < 0 || cc >= kGridSpan) ok = false;
        key = key * kGridSpan + cc;
      }
      if (ok) cov.cell_index[key].push_back(j);
    }
    int i = 0;
    for (; i < n; ++i) {
      if (++cur[i] <= hi[i]) break;
      cur[i] = lo[i];
    }
    if (i == n) break;
  }
}

// own-cell grid for the construction phase: every center sits in exactly
// one cell; disjointness tests only look at cells within +-3 (two balls
// meet only if centers are within r_c + r_j <= 2)
struct PackGrid {
  std::unordered_map<std::int64_t, std::vector<int>> cells;
  void insert(const BallCover& cov, int j) {
    cells[key_of_coords(cov.centers[j])].push_back(j);
  }
  bool disjoint_from_all(const BallCover& cov, const Eigen::VectorXd& cand, double rc) const {
    const int n = static_cast<int>(cand.size());
    Eigen::VectorXi base(n), cur(n);
    for (int i = 0; i < n; ++i) {
      base[i] = static_cast<int>(std::floor(cand[i])) - 3;
      cur[i] = 0;
    }
    while (true) {
      std::int64_t key = 0;
      bool valid = true;
      for (int i = 0; i < n; ++i) {
        std::int64_t c = base[i] + cur[i] + kGridHalf;
        if (c < 0 || c >= kGridSpan) valid = false;
        key = key * kGridSpan + c;
      }
      if (valid) {
        auto it = cells.find(key);
        if (it != cells.end())
          for (int j : it->second)
            if ((cand - cov.centers[j]).norm() < rc + cov.radii[j]) return false;
      }
      int i = 0;
      for (; i < n; ++i) {
        if (++cur[i] <= 6) break;
        cur[i] = 0;
      }
      if (i == n) break;
    }
    return true;
  }
};

// greedy maximal packing pass; returns when `reject_factor * count`
// consecutive candidates fail the disjointness test
void greedy_pack(BallCover& cov, PackGrid& grid, double R, std::uint64_t start,
                 std::uint64_t& index, int reject_factor) {
  int consecutive = 0;
  while (consecutive < reject_factor * static_cast<int>(cov.centers.size())) {
    Eigen::VectorXd h = halton_point(start + index++, cov.n);
    Eigen::VectorXd cand = (2.0 * h.array() - 1.0) * R;
    if (cand.norm() > R) {
      continue;  // corner of the box; not a rejection of a real candidate
    }
    const double rc = BallCover::radius_at(cand);
    if (grid.disjoint_from_all(cov, cand, rc)) {
      cov.centers.push_back(cand);
      cov.radii.push_back(rc);
      grid.insert(cov, static_cast<int>(cov.centers.size()) - 1);
      consecutive = 0;
    } else {
      ++consecutive;
    }
  }
}

// every grid point within probe_radius must lie in some 3B_j; uses the
// final 6B cell index (a superset of the 3B neighbor lists)
bool probe_covered(const BallCover& cov, double probe_radius, double step,
                   Eigen::VectorXd* witness) {
  const int n = cov.n;
  const int per_axis = static_cast<int>(std::floor(2.0 * probe_radius / step)) + 1;
  Eigen::VectorXi cur = Eigen::VectorXi::Zero(n);
  Eigen::VectorXd p(n);
  while (true) {
    for (int i = 0; i < n; ++i) p[i] = -probe_radius + cur[i] * step;
    if (p.norm() <= probe_radius) {
      bool inside = false;
      for (int j : cov.neighbors(p)) {
        if ((p - cov.centers[j]).norm() <= 3.0 * cov.radii[j]) {
          inside = true;
          break;
        }
      }
      if (!inside) {
        if (witness) *witness = p;
        return false;
      }
    }
    int i = 0;
    for (; i < n; ++i) {
      if (++cur[i] < per_axis) break;
      cur[i] = 0;
    }
    if (i == n) break;
  }
  return true;
}

}  // namespace

BallCover build_cover(const OUModel& m, double domain_radius, std::uint64_t seed) {
  if (domain_radius < 1.0) fail(ErrorCode::DomainError, "cover needs domain_radius >= 1");
  BallCover cov;
  cov.n = m.n;
  cov.domain_radius = domain_radius;
  cov.centers.push_back(Eigen::VectorXd::Zero(m.n));
  cov.radii.push_back(1.0);

  std::uint64_t index = 0;
  const std::uint64_t start = 1 + (seed % 65536);
  PackGrid grid;
  grid.insert(cov, 0);
  greedy_pack(cov, grid, domain_radius, start, index, 10);
  for (std::size_t j = 0; j < cov.centers.size(); ++j) index_center(cov, static_cast<int>(j));

  const double probe_radius = domain_radius - 1.0;
  const double r_min = 1.0 / (1.0 + domain_radius);
  const double step = (m.n >= 3) ? r_min : 0.5 * r_min;
  Eigen::VectorXd witness;
  if (!probe_covered(cov, probe_radius, step, &witness)) {
    // densify: keep going with a stingier stopping rule, then re-probe
    const std::size_t had = cov.centers.size();
    greedy_pack(cov, grid, domain_radius, start, index, 40);
    for (std::size_t j = had; j < cov.centers.size(); ++j) index_center(cov, static_cast<int>(j));
    if (!probe_covered(cov, probe_radius, step, &witness)) {
      std::string where = "(";
      for (int i = 0; i < m.n; ++i)
        where += std::to_string(witness[i]) + (i + 1 < m.n ? "," : ")");
      fail(ErrorCode::CoverageFailure, "probe point " + where + " escapes every tripled ball");
    }
  }
  return cov;
}

PartitionOfUnity::PartitionOfUnity(BallCover cover) : cover_(std::move(cover)) {}

double PartitionOfUnity::bump(int j, const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  const Eigen::VectorXd diff = x - cover_.centers[j];
  const double dist = diff.norm();
  const double r = cover_.radii[j];
  double dsh = 0;
  const double val = shell(dist / r, 3.0, grad ? &dsh : nullptr);
  if (grad) {
    if (dsh != 0.0)
      *grad = (dsh / (r * dist)) * diff;
    else
      grad->setZero(cover_.n);
  }
  return val;
}

double PartitionOfUnity::tilde(int j, const Eigen::VectorXd& x, Eigen::VectorXd* grad) const {
  const Eigen::VectorXd diff = x - cover_.centers[j];
  const double dist = diff.norm();
  const double r = cover_.radii[j];
  double dsh = 0;
  const double val = shell(dist / r, 5.0, grad ? &dsh : nullptr);
  if (grad) {
    if (dsh != 0.0)
      *grad = (dsh / (r * dist)) * diff;
    else
      grad->setZero(cover_.n);
  }
  return val;
}

void PartitionOfUnity::check_domain(const Eigen::VectorXd& x) const {
  if (x.size() != cover_.n) fail(ErrorCode::DimensionMismatch, "cutoff point dimension mismatch");
  if (x.norm() > cover_.domain_radius - 1.0)
    fail(ErrorCode::OutOfDomain, "point outside the covered region");
}

double PartitionOfUnity::r(int j, const Eigen::VectorXd& x) const {
  const double b = bump(j, x, nullptr);
  if (b == 0.0) return 0.0;
  double s = 0;
  for (int k : cover_.neighbors(x)) s += bump(k, x, nullptr);
  return b / s;
}

double PartitionOfUnity::r_tilde(int j, const Eigen::VectorXd& x) const {
  return tilde(j, x, nullptr);
}

double PartitionOfUnity::sum_r(const Eigen::VectorXd& x) const {
  double s = 0;
  for (int k : cover_.neighbors(x)) s += bump(k, x, nullptr);
  return s > 0 ? 1.0 : 0.0;  // r_j = bump_j / sum: sums to 1 wherever covered
}

double PartitionOfUnity::eta(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
  check_domain(x);
  check_domain(u);
  const auto& near_u = cover_.neighbors(u);
  double s = 0;
  for (int k : near_u) s += bump(k, u, nullptr);
  if (s <= 0) fail(ErrorCode::CoverageFailure, "point escapes the cover in a cutoff sum");
  double acc = 0;
  for (int j : near_u) {
    const double bj = bump(j, u, nullptr);
    if (bj == 0.0) continue;
    const double tj = tilde(j, x, nullptr);
    if (tj == 0.0) continue;
    acc += tj * bj / s;
  }
  return std::min(1.0, std::max(0.0, acc));
}

void PartitionOfUnity::eta_with_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                     double* eta_out, Eigen::VectorXd* grad_x,
                                     Eigen::VectorXd* grad_u) const {
  check_domain(x);
  check_domain(u);
  const auto& near_u = cover_.neighbors(u);
  double s = 0;
  Eigen::VectorXd s_grad = Eigen::VectorXd::Zero(cover_.n);
  Eigen::VectorXd bg(cover_.n), tg(cover_.n);
  for (int k : near_u) {
    s += bump(k, u, &bg);
    s_grad += bg;
  }
  if (s <= 0) fail(ErrorCode::CoverageFailure, "point escapes the cover in a cutoff sum");
  double acc = 0;
  Eigen::VectorXd gx = Eigen::VectorXd::Zero(cover_.n);
  Eigen::VectorXd gu = Eigen::VectorXd::Zero(cover_.n);
  for (int j : near_u) {
    const double bj = bump(j, u, &bg);
    const double tj = tilde(j, x, &tg);
    if (bj == 0.0 && tj == 0.0) continue;
    const double rj = bj / s;
    acc += tj * rj;
    gx += rj * tg;
    gu += tj * (s * bg - bj * s_grad) / (s * s);
  }
  if (eta_out) *eta_out = std::min(1.0, std::max(0.0, acc));
  if (grad_x) *grad_x = gx;
  if (grad_u) *grad_u = gu;
}

// Same integration by parts as kernel_M0 (the direct -phi dK/dt integrand
// telescopes through huge swings near the diagonal); rows carry
// [scriptK; grad_x scriptK; grad_u scriptK].
KernelM0Gradients kernel_M0_with_grad(const OUModel& m, const Symbol& sym,
                                      const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                      const MultiplierKernelConfig& cfg) {
  const double d = (x - u).norm();
  if (d < 1e-8 * (1.0 + x.norm()))
    fail(ErrorCode::DiagonalPoint, "kernel gradients are undefined on the diagonal");
  KernelM0Gradients out;
  out.grad_x = Eigen::VectorXcd::Zero(m.n);
  out.grad_u = Eigen::VectorXcd::Zero(m.n);

  const double t_scale = diagonal_time_scale(m, x, u);
  const double T = cfg.t_split;
  KernelEvaluator ev(m);
  const int n = m.n;

  auto krows = [&](double t) -> Eigen::VectorXd {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(1 + 2 * n);
    if (!(t > 0) || t_scale / t > 700.0) return row;
    KernelPieces p = ev.pieces(t);
    const double lk = ev.log_script_K(p, x, u);
    if (lk < -700.0) return row;
    const double K = std::exp(lk);
    Eigen::VectorXd pv;
    ev.factors(p, x, u, &pv, nullptr, nullptr);
    row(0) = K;
    row.segment(1, n) = K * pv;
    row.segment(1 + n, n) = -K * (p.QtinvE * (p.Dmt * u - x));
    return row;
  };
  auto store = [&](const Eigen::VectorXcd& rows) {
    out.value = rows(0);
    out.grad_x = rows.segment(1, n);
    out.grad_u = rows.segment(1 + n, n);
  };

  if (sym.kind == SymbolKind::indicator) {
    Eigen::VectorXd rows = -krows(std::min(sym.b, T));
    if (sym.a > 0) rows += krows(std::min(sym.a, T));
    store(rows.cast<std::complex<double>>());
    out.err_bound = 1e-14 * rows.cwiseAbs().maxCoeff();
    return out;
  }

  Eigen::VectorXcd total = (-sym.phi(T)) * krows(T).cast<std::complex<double>>();
  out.err_bound = 1e-15 * total.cwiseAbs().maxCoeff();
  if (sym.kind != SymbolKind::constant) {
    double t_min = std::max(std::min(0.5 * T, t_scale / 700.0), 1e-300);
    auto integrand = [&](double s) -> Eigen::VectorXcd {
      const double t = std::exp(s);
      Eigen::VectorXd rows = krows(t);
      if (rows(0) == 0.0) return Eigen::VectorXcd::Zero(1 + 2 * n);
      return (symbol_phi_prime(sym, t) * t) * rows.cast<std::complex<double>>();
    };
    auto q = adaptive_gauss_kronrod_edges<Eigen::VectorXcd>(
        integrand, kernel_time_edges(t_scale, t_min, T), cfg.quad);
    if (!q.converged)
      fail(ErrorCode::NonConvergence, "kernel gradient quadrature failed to converge");
    total += q.value;
    out.err_bound += q.error;
  }
  store(total);
  return out;
}

LocalGlobalSplit kernel_local_global(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u, const PartitionOfUnity& pou,
                                     const MultiplierKernelConfig& cfg) {
  LocalGlobalSplit out;
  out.eta = pou.eta(x, u);
  KernelValue m0 = kernel_M0(m, sym, x, u, cfg);
  out.M0_loc = m0;
  out.M0_loc.scaled *= out.eta;
  out.M0_loc.err_bound *= out.eta;
  out.M0_glob = m0;
  out.M0_glob.scaled *= (1.0 - out.eta);
  out.M0_glob.err_bound *= (1.0 - out.eta);
  out.Q_cz = m0.scaled * out.eta;  // e^{-R(x)} M0_loc, already in cancelled form
  return out;
}

CzScanReport cz_bound_scan(const OUModel& m, const Symbol& sym, const PartitionOfUnity& pou,
                           const CzSampleSpec& spec, const MultiplierKernelConfig& cfg) {
  CzScanReport rep;
  rep.rows.reserve(spec.n_pairs);
  const double R = pou.cover().domain_radius;
  MultiplierKernelConfig scan_cfg = cfg;
  // sup-fitting needs far fewer digits than the default contract tolerances
  scan_cfg.quad.rel_tol = std::max(scan_cfg.quad.rel_tol, 1e-8);
  scan_cfg.quad.abs_tol = std::max(scan_cfg.quad.abs_tol, 1e-12);

  const int n = m.n;
  std::uint64_t attempts = 0;
  const std::uint64_t max_attempts = 40ull * spec.n_pairs;
  while (static_cast<int>(rep.rows.size()) < spec.n_pairs && attempts < max_attempts) {
    Rng rng = Rng::fork(spec.seed, attempts++);
    Eigen::VectorXd dir = rng.normal_vector(n);
    if (dir.norm() == 0) continue;
    dir.normalize();
    const double rad = (R - 2.0) * std::pow(rng.next_double(), 1.0 / n);
    Eigen::VectorXd x = rad * dir;
    const double rx = BallCover::radius_at(x);
    Eigen::VectorXd dir2 = rng.normal_vector(n);
    if (dir2.norm() == 0) continue;
    dir2.normalize();
    const double dlo = spec.min_dist_factor * rx, dhi = 3.0 * rx;
    const double dist = dlo * std::exp(std::log(dhi / dlo) * rng.next_double());
    Eigen::VectorXd u = x + dist * dir2;
    if (u.norm() > R - 1.0) continue;

    double eta = 0;
    Eigen::VectorXd eta_gx(n), eta_gu(n);
    pou.eta_with_grad(x, u, &eta, &eta_gx, &eta_gu);
    if (eta <= 0) continue;

    auto g = kernel_M0_with_grad(m, sym, x, u, scan_cfg);
    const std::complex<double> Q = g.value * eta;
    Eigen::VectorXcd qgx = g.grad_x * eta + g.value * eta_gx.cast<std::complex<double>>();
    Eigen::VectorXcd qgu = g.grad_u * eta + g.value * eta_gu.cast<std::complex<double>>();

    CzPairRecord row;
    row.dist = dist;
    row.absQ_scaled = std::abs(Q) * std::pow(dist, n);
    row.gradx_scaled = qgx.norm() * std::pow(dist, n + 1);
    row.gradu_scaled = qgu.norm() * std::pow(dist, n + 1);
    rep.rows.push_back(row);
    rep.sup_absQ = std::max(rep.sup_absQ, row.absQ_scaled);
    rep.sup_gradx = std::max(rep.sup_gradx, row.gradx_scaled);
    rep.sup_gradu = std::max(rep.sup_gradu, row.gradu_scaled);
  }
  rep.n_pairs = static_cast<int>(rep.rows.size());
  if (rep.n_pairs < spec.n_pairs / 2)
    fail(ErrorCode::BudgetTooSmall, "too few local pairs accepted in the bound scan");
  return rep;
}

}  // namespace ouk
