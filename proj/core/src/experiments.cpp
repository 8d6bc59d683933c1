#include "ouk/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>

#include "ouk/errors.hpp"
#include "ouk/measure.hpp"
#include "ouk/mehler.hpp"
#include "ouk/quadrature.hpp"
#include "ouk/rng.hpp"
#include "ouk/sha256.hpp"
#include "ouk/zeros.hpp"

namespace ouk {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double golden_max(const std::function<double(double)>& f, double a, double b) {
  const double gr = 0.6180339887498948482;
  double best = std::max(f(a), f(b));
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 90 && (b - a) > 1e-12; ++i) {
    if (fc > fd) {
      b = d; d = c; fd = fc;
      c = b - gr * (b - a);
      fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + gr * (b - a);
      fd = f(d);
    }
    best = std::max(best, std::max(fc, fd));
  }
  return best;
}

// Scan cache: every node's log-kernel (and optionally N) contracted against
// the fixed point mass, flattened to [c, g[n], H[n*n]] blocks so the million-
// sample loop runs on raw doubles with no matrix work.
struct ScanCache {
  int n = 0;
  std::vector<double> qk;               // log scriptK quadratics, one block per node
  std::vector<double> qn;               // N quadratics (empty unless needed)
  std::vector<std::complex<double>> f0; // premultiplied symbol/weight factor
  std::vector<double> tnodes;
  int stride() const { return 1 + n + n * n; }
  std::size_t size() const { return f0.size(); }
};

void pack_quad(const KernelQuadratic& q, std::vector<double>& out) {
  out.push_back(q.c);
  for (int i = 0; i < q.g.size(); ++i) out.push_back(q.g(i));
  for (int i = 0; i < q.H.rows(); ++i)
    for (int j = 0; j < q.H.cols(); ++j) out.push_back(q.H(i, j));
}

double quad_eval(const double* q, const double* x, int n) {
  double v = q[0];
  const double* g = q + 1;
  const double* H = q + 1 + n;
  for (int i = 0; i < n; ++i) {
    double hx = 0;
    const double* Hi = H + i * n;
    for (int j = 0; j < n; ++j) hx += Hi[j] * x[j];
    v += (g[i] + hx) * x[i];
  }
  return v;
}

void cache_push(ScanCache& c, const KernelEvaluator& ev, const Eigen::VectorXd& u0, double t,
                std::complex<double> factor, bool need_n) {
  KernelPieces p = ev.pieces(t);
  pack_quad(ev.log_kernel_in_x(p, u0), c.qk);
  if (need_n) pack_quad(ev.nt_in_x(p, u0), c.qn);
  c.f0.push_back(factor);
  c.tnodes.push_back(t);
}

}  // namespace

double maximal_kernel_sup(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          SupRegime regime, const PartitionOfUnity* pou) {
  if (x.size() != m.n || u.size() != m.n)
    fail(ErrorCode::DimensionMismatch, "point dimension does not match the model");
  const double d = (x - u).norm();
  if (regime != SupRegime::large_t && d < 1e-12 * (1.0 + x.norm()))
    fail(ErrorCode::DiagonalPoint, "short-time kernel sup diverges on the diagonal");

  KernelEvaluator ev(m);
  const double r_x = quadratic_form_R(m, x);
  auto log_K = [&](double s) {
    return ev.log_script_K(ev.pieces(std::exp(s)), x, u) + r_x;
  };

  double best = kNegInf;
  auto scan = [&](double s_lo, double s_hi) {
    for (int cell = 0; cell < 16; ++cell) {
      const double a = s_lo + (s_hi - s_lo) * cell / 16.0;
      const double b = s_lo + (s_hi - s_lo) * (cell + 1) / 16.0;
      best = std::max(best, golden_max(log_K, a, b));
    }
  };

  if (regime != SupRegime::large_t) {
    // reach below 1e-8 when the pair is so close that the kernel peaks earlier
    const double t_scale = diagonal_time_scale(m, x, u);
    const double s_lo = std::min(std::log(1e-8), std::log(t_scale) - 5.0);
    scan(s_lo, 0.0);
  }
  if (regime != SupRegime::small_t) {
    const double t_max = std::max(20.0, 40.0 / m.hurwitz_margin);
    scan(0.0, std::log(t_max));
    best = std::max(best, 0.0);  // t -> inf limit: K_inf = 1
  }

  double factor = 1.0;
  if (pou && regime == SupRegime::small_t) factor = 1.0 - pou->eta(x, u);
  if (factor <= 0.0) return 0.0;
  if (best + std::log(factor) > 700.0)
    fail(ErrorCode::Overflow, "kernel sup exceeds the double range");
  return std::exp(best) * factor;
}

OperatorKind operator_kind_parse(const std::string& name) {
  if (name == "M_full") return OperatorKind::M_full;
  if (name == "M1") return OperatorKind::M1;
  if (name == "M0_glob") return OperatorKind::M0_glob;
  if (name == "S0_glob") return OperatorKind::S0_glob;
  if (name == "S_inf") return OperatorKind::S_inf;
  if (name == "S_all") return OperatorKind::S_all;
  fail(ErrorCode::DomainError, "unknown operator kernel: " + name);
}

std::string operator_kind_name(OperatorKind op) {
  switch (op) {
    case OperatorKind::M_full: return "M_full";
    case OperatorKind::M1: return "M1";
    case OperatorKind::M0_glob: return "M0_glob";
    case OperatorKind::S0_glob: return "S0_glob";
    case OperatorKind::S_inf: return "S_inf";
    case OperatorKind::S_all: return "S_all";
  }
  return "?";
}

std::string canonical_config_json(const OUModel& m, const ExperimentConfig& cfg,
                                  const std::string& op) {
  std::string s = "{\"op\":\"" + op + "\",\"n\":" + std::to_string(m.n) + ",\"B\":[";
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j)
      s += fmt17(m.B(i, j)) + (i == m.n - 1 && j == m.n - 1 ? "" : ",");
  s += "],\"Q\":[";
  for (int i = 0; i < m.n; ++i)
    for (int j = 0; j < m.n; ++j)
      s += fmt17(m.Q(i, j)) + (i == m.n - 1 && j == m.n - 1 ? "" : ",");
  s += "],\"symbol\":\"" + cfg.symbol.to_string() + "\",\"alphas\":[";
  for (std::size_t i = 0; i < cfg.alpha_grid.size(); ++i)
    s += fmt17(cfg.alpha_grid[i]) + (i + 1 < cfg.alpha_grid.size() ? "," : "");
  s += "],\"mc_budget\":" + std::to_string(cfg.mc_budget) +
       ",\"seed\":" + std::to_string(cfg.seed) + ",\"u0\":[";
  for (int i = 0; i < cfg.u0.size(); ++i)
    s += fmt17(cfg.u0(i)) + (i + 1 < cfg.u0.size() ? "," : "");
  s += "],\"domain_radius\":" + fmt17(cfg.domain_radius) + "}";
  return s;
}

std::string experiment_config_hash(const OUModel& m, const ExperimentConfig& cfg,
                                   const std::string& op) {
  return sha256_hex(canonical_config_json(m, cfg, op));
}

ExperimentReport weak_type_scan(const OUModel& m, const ExperimentConfig& cfg, OperatorKind op) {
  if (cfg.alpha_grid.empty() || cfg.alpha_grid.front() <= 2.0)
    fail(ErrorCode::DomainError, "alpha grid must start above 2");
  for (std::size_t i = 1; i < cfg.alpha_grid.size(); ++i)
    if (cfg.alpha_grid[i] <= cfg.alpha_grid[i - 1])
      fail(ErrorCode::DomainError, "alpha grid must be strictly increasing");
  if (cfg.mc_budget < 10000) fail(ErrorCode::DomainError, "mc_budget below 1e4");

  const auto t_start = std::chrono::steady_clock::now();
  const double alpha_max = cfg.alpha_grid.back();
  ExperimentConfig used = cfg;
  if (used.u0.size() == 0)
    used.u0 = std::sqrt(std::log(alpha_max)) * m.Q_inf_sqrt.col(0);
  else if (used.u0.size() != m.n)
    fail(ErrorCode::DimensionMismatch, "u0 dimension does not match the model");
  const Eigen::VectorXd u0 = used.u0;

  KernelEvaluator ev(m);
  const Symbol& sym = used.symbol;
  const double t_max = std::max(20.0, 40.0 / m.hurwitz_margin);

  const bool wants_m0 = op == OperatorKind::M_full || op == OperatorKind::M0_glob;
  const bool wants_m1 = op == OperatorKind::M_full || op == OperatorKind::M1;
  const bool wants_small_sup = op == OperatorKind::S0_glob || op == OperatorKind::S_all;
  const bool wants_large_sup = op == OperatorKind::S_inf || op == OperatorKind::S_all;
  const bool wants_eta = op == OperatorKind::M0_glob || op == OperatorKind::S0_glob;

  // Multiplier nodes: the short-time part in its integrated-by-parts form
  // (endpoint terms plus a phi' integral), the long-time part as the direct
  // phi * K * N integral; both on fixed composite Gauss rules in log t.
  ScanCache m_nodes, sup_nodes;
  m_nodes.n = sup_nodes.n = m.n;
  if (wants_m0) {
    if (sym.kind == SymbolKind::indicator) {
      const double ta = std::min(sym.a, 1.0), tb = std::min(sym.b, 1.0);
      if (ta > 0) cache_push(m_nodes, ev, u0, ta, 1.0, false);
      cache_push(m_nodes, ev, u0, tb, -1.0, false);
    } else {
      cache_push(m_nodes, ev, u0, 1.0, -sym.phi(1.0), false);
      if (sym.kind != SymbolKind::constant) {
        PanelRule rule = composite_gauss4(linear_edges(std::log(1e-8), 0.0, 80));
        for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
          const double t = std::exp(rule.nodes[k]);
          cache_push(m_nodes, ev, u0, t, rule.weights[k] * symbol_phi_prime(sym, t) * t, false);
        }
      }
    }
  }
  const std::size_t m1_begin = m_nodes.size();
  if (wants_m1) {
    PanelRule rule = composite_gauss4(linear_edges(0.0, std::log(t_max), 40));
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double t = std::exp(rule.nodes[k]);
      if (sym.kind == SymbolKind::indicator && (t <= sym.a || t >= sym.b)) continue;
      cache_push(m_nodes, ev, u0, t, -rule.weights[k] * sym.phi(t) * t, true);
    }
  }
  if (wants_small_sup || wants_large_sup) {
    cache_push(sup_nodes, ev, u0, 1.0, 0.0, false);
    PanelRule rule = wants_small_sup
                         ? composite_gauss4(linear_edges(std::log(1e-8), 0.0, 80))
                         : PanelRule{};
    if (wants_large_sup) {
      PanelRule lg = composite_gauss4(linear_edges(0.0, std::log(t_max), 40));
      rule.nodes.insert(rule.nodes.end(), lg.nodes.begin(), lg.nodes.end());
    }
    for (double s : rule.nodes) cache_push(sup_nodes, ev, u0, std::exp(s), 0.0, false);
  }

  std::unique_ptr<PartitionOfUnity> pou;
  if (wants_eta) {
    double R_dom = used.domain_radius > 0 ? used.domain_radius : default_domain_radius(alpha_max);
    R_dom = std::max(R_dom, u0.norm() + 2.0);
    pou = std::make_unique<PartitionOfUnity>(build_cover(m, R_dom, used.seed));
  }

  const Eigen::MatrixXd X = gamma_sample(m, used.mc_budget, used.seed);
  std::vector<double> log_val(used.mc_budget, kNegInf);

  // Nodes whose kernel sits this far (in log) below the smallest threshold
  // cannot move an exceedance decision; skipping them saves the exp call.
  const double skip_margin = std::log(used.alpha_grid.front()) - 45.0;
  const int n = m.n, stride = m_nodes.stride();
  Eigen::VectorXd xbuf(n);

  for (int i = 0; i < used.mc_budget; ++i) {
    xbuf = X.col(i);
    const double* xp = xbuf.data();
    const double r_x = quadratic_form_R(m, xbuf);
    const double skip = skip_margin - r_x;
    double lv = kNegInf;

    if (wants_m0 || wants_m1) {
      std::complex<double> sc0 = 0.0, sc1 = 0.0;
      for (std::size_t k = 0; k < m_nodes.size(); ++k) {
        const double lk = quad_eval(m_nodes.qk.data() + k * stride, xp, n);
        if (lk < skip) continue;
        if (k < m1_begin) {
          sc0 += m_nodes.f0[k] * std::exp(lk);
        } else {
          const double nt = quad_eval(m_nodes.qn.data() + (k - m1_begin) * stride, xp, n);
          sc1 += m_nodes.f0[k] * (std::exp(lk) * nt);
        }
      }
      std::complex<double> sc = sc0 + sc1;
      if (op == OperatorKind::M0_glob) {
        double eta = 0.0;
        if (xbuf.norm() <= pou->cover().domain_radius - 1.0) eta = pou->eta(xbuf, u0);
        sc = sc0 * (1.0 - eta);
      }
      if (std::abs(sc) > 0.0) lv = std::log(std::abs(sc)) + r_x;
    } else {
      double lk_best = kNegInf;
      for (std::size_t k = 0; k < sup_nodes.size(); ++k)
        lk_best = std::max(lk_best, quad_eval(sup_nodes.qk.data() + k * stride, xp, n));
      if (wants_large_sup) lk_best = std::max(lk_best, -r_x);  // K_inf = 1
      lv = lk_best + r_x;
      if (op == OperatorKind::S0_glob) {
        double eta = 0.0;
        if (xbuf.norm() <= pou->cover().domain_radius - 1.0) eta = pou->eta(xbuf, u0);
        if (eta >= 1.0) lv = kNegInf;
        else lv += std::log1p(-eta);
      }
    }
    log_val[i] = lv;
  }

  ExperimentReport rep;
  rep.op = operator_kind_name(op);
  rep.config_hash = experiment_config_hash(m, used, rep.op);
  rep.seed = used.seed;
  rep.mc_budget = used.mc_budget;
  rep.u0 = u0;
  for (double alpha : used.alpha_grid) {
    const double la = std::log(alpha);
    std::int64_t c = 0;
    for (double lv : log_val)
      if (lv > la) ++c;
    WeakTypeRow row;
    row.alpha = alpha;
    row.exceedances = c;
    row.measure = static_cast<double>(c) / used.mc_budget;
    row.std_error = std::sqrt(row.measure * (1.0 - row.measure) / used.mc_budget);
    row.alpha_measure = alpha * row.measure;
    row.alpha_sqrtlog_measure = alpha * std::sqrt(la) * row.measure;
    rep.rows.push_back(row);
  }
  if (rep.rows.front().exceedances < 50)
    fail(ErrorCode::BudgetTooSmall,
         "fewer than 50 exceedances at the smallest alpha; enlarge mc_budget");
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return rep;
}

double level_set_measure_polar(const OUModel& m,
                               const std::function<double(const Eigen::VectorXd&)>& value,
                               double alpha, int surface_nodes, int s_panels) {
  if (m.n > 2) fail(ErrorCode::DomainError, "polar estimator is n <= 2 only");
  if (!(alpha > 2.0)) fail(ErrorCode::DomainError, "alpha must exceed 2");
  if (surface_nodes < 4 || s_panels < 16) fail(ErrorCode::DomainError, "node counts too small");
  const double beta = 1.0;
  auto surf = surface_quadrature(m, beta, surface_nodes);
  // R(D_s x_tilde) is strictly increasing in s: walk out until the density
  // underflows (s_hi) and in until the remaining core mass is negligible
  // (s_lo); the step never overshoots because R moves monotonically.
  const double step = 0.5 / m.hurwitz_margin;
  double total = 0.0;
  for (const auto& [xt, sw] : surf) {
    double s_hi = 0.0;
    while (quadratic_form_R(m, d_matrix(m, s_hi) * xt) < 720.0) s_hi += step;
    double s_lo = 0.0;
    while (quadratic_form_R(m, d_matrix(m, s_lo) * xt) > 1e-14) s_lo -= step;
    auto indicator = [&](double s) { return value(d_matrix(m, s) * xt) > alpha; };
    auto smooth = [&](double a, double b) {  // density * volume element over [a, b]
      PanelRule g = composite_gauss4({a, b});
      double v = 0.0;
      for (std::size_t k = 0; k < g.nodes.size(); ++k) {
        PolarCoord pc{g.nodes[k], xt, beta};
        v += g.weights[k] * gamma_density(m, d_matrix(m, g.nodes[k]) * xt) *
             polar_volume_element(m, pc);
      }
      return v;
    };
    // Panels whose endpoints disagree get their crossing located by bisection;
    // flips strictly interior to a panel are below the rule's resolution.
    std::vector<double> edges = linear_edges(s_lo, s_hi, s_panels);
    double line = 0.0;
    bool ia = indicator(edges.front());
    for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
      double a = edges[k], b = edges[k + 1];
      bool ib = indicator(b);
      if (ia == ib) {
        if (ia) line += smooth(a, b);
      } else {
        double lo = a, hi = b;
        for (int it = 0; it < 50 && hi - lo > 1e-13 * (1.0 + std::fabs(lo)); ++it) {
          double mid = 0.5 * (lo + hi);
          (indicator(mid) == ia ? lo : hi) = mid;
        }
        double cross = 0.5 * (lo + hi);
        line += ia ? smooth(a, cross) : smooth(cross, b);
      }
      ia = ib;
    }
    total += sw * line;
  }
  return total;
}

std::string report_csv(const ExperimentReport& rep) {
  std::string s = "alpha,measure,stderr,alpha_measure,alpha_sqrtlog_measure\n";
  for (const auto& r : rep.rows)
    s += fmt17(r.alpha) + "," + fmt17(r.measure) + "," + fmt17(r.std_error) + "," +
         fmt17(r.alpha_measure) + "," + fmt17(r.alpha_sqrtlog_measure) + "\n";
  return s;
}

namespace {

void push(VerifyLedger& led, const std::string& model_tag, const std::string& check_id,
          const std::string& module, double value, double tol) {
  VerifyCheck c;
  c.check_id = model_tag + "/" + check_id;
  c.module = module;
  c.value = value;
  c.tol = tol;
  c.pass = value <= tol;
  if (!c.pass) led.all_pass = false;
  led.checks.push_back(c);
}

bool is_standard_1d(const OUModel& m) {
  return m.n == 1 && std::abs(m.B(0, 0) + 1.0) < 1e-12 && std::abs(m.Q(0, 0) - 2.0) < 1e-12;
}

}  // namespace

VerifyLedger verify_suite(const std::vector<OUModel>& models, const VerifyProfile& profile) {
  VerifyLedger led;
  const double ts = profile.tol_scale;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const OUModel& m = models[mi];
    const std::string tag = "model" + std::to_string(mi);
    KernelEvaluator ev(m);
    Rng rng = Rng::fork(profile.seed, 1000 + mi);

    {  // gramian additivity Q_{t+s} = Q_t + e^{tB} Q_s e^{tB^T}
      double worst = 0;
      for (double t : {0.3, 1.7})
        for (double s : {0.45, 2.2}) {
          Eigen::MatrixXd E = matrix_exp(m.B, t);
          Eigen::MatrixXd lhs = gramian_Qt_fast(m, t + s);
          Eigen::MatrixXd rhs = gramian_Qt_fast(m, t) + E * gramian_Qt_fast(m, s) * E.transpose();
          worst = std::max(worst, (lhs - rhs).norm() / rhs.norm());
        }
      push(led, tag, "matrix.gramian_additive", "matrix-core", worst, 1e-8 * ts);
    }
    {  // flow group law D_t D_s = D_{t+s}
      double worst = 0;
      for (double t : {0.6, -1.1})
        for (double s : {0.8, -0.4}) {
          Eigen::MatrixXd lhs = d_matrix(m, t) * d_matrix(m, s);
          worst = std::max(worst, (lhs - d_matrix(m, t + s)).norm() / lhs.norm());
        }
      push(led, tag, "matrix.flow_group", "matrix-core", worst, 1e-10 * ts);
    }
    {  // W D_t = Q_t^{-1} e^{tB}
      double worst = 0;
      for (double t : {0.25, 0.9}) {
        KernelPieces p = ev.pieces(t);
        worst = std::max(worst, (p.W * p.Dt - p.QtinvE).norm() / p.QtinvE.norm());
      }
      push(led, tag, "matrix.transition_identity", "matrix-core", worst, 1e-8 * ts);
    }
    {  // polar decomposition round trip
      double worst = 0;
      for (int trial = 0; trial < 8; ++trial) {
        Eigen::VectorXd x = m.Q_inf_sqrt * rng.normal_vector(m.n);
        if (x.norm() < 1e-6) continue;
        PolarCoord pc = polar_decompose(m, x, 0.8);
        Eigen::VectorXd back = d_matrix(m, pc.s) * pc.x_tilde;
        worst = std::max(worst, (back - x).norm() / (1.0 + x.norm()));
      }
      push(led, tag, "measure.polar_roundtrip", "measure-geometry", worst, 1e-10 * ts);
    }
    {  // N forms agree at t <= 1
      double worst = 0;
      for (int trial = 0; trial < 6; ++trial) {
        Eigen::VectorXd x = rng.normal_vector(m.n), u = rng.normal_vector(m.n);
        KernelPieces p = ev.pieces(0.9);
        worst = std::max(worst, std::abs(ev.nt(p, x, u) - ev.nt_form_R(p, x, u)) /
                                    (1.0 + std::abs(ev.nt(p, x, u))));
      }
      push(led, tag, "kernel.nt_forms_agree", "mehler-kernel", worst, 1e-8 * ts);
    }
    {  // d/dt log K = N by finite differences
      double worst = 0;
      const double h = 1e-5;
      for (int trial = 0; trial < 6; ++trial) {
        Eigen::VectorXd x = rng.normal_vector(m.n), u = rng.normal_vector(m.n);
        const double t = 0.3 + 0.5 * rng.next_double();
        const double fd = (ev.log_script_K(ev.pieces(t + h), x, u) -
                           ev.log_script_K(ev.pieces(t - h), x, u)) /
                          (2.0 * h);
        worst = std::max(worst, std::abs(fd - ev.nt(ev.pieces(t), x, u)));
      }
      push(led, tag, "kernel.dlogK_dt_fd", "mehler-kernel", worst, 1e-5 * ts);
    }
    {  // grad_x log scriptK = P_vec by finite differences
      double worst = 0;
      const double h = 1e-6;
      for (int trial = 0; trial < 4; ++trial) {
        Eigen::VectorXd x = rng.normal_vector(m.n), u = rng.normal_vector(m.n);
        const double t = 0.2 + 0.6 * rng.next_double();
        KernelPieces p = ev.pieces(t);
        Eigen::VectorXd pv;
        ev.factors(p, x, u, &pv, nullptr, nullptr);
        for (int k = 0; k < m.n; ++k) {
          Eigen::VectorXd xp = x, xm = x;
          xp(k) += h;
          xm(k) -= h;
          const double fd =
              (ev.log_script_K(p, xp, u) - ev.log_script_K(p, xm, u)) / (2.0 * h);
          worst = std::max(worst, std::abs(fd - pv(k)));
        }
      }
      push(led, tag, "kernel.factors_fd", "mehler-kernel", worst, 1e-4 * ts);
    }
    if (m.n <= 2) {  // mass: int K_t(x,u) dgamma(u) = 1 by Gauss-Hermite
      std::vector<double> gh_x, gh_w;
      gauss_hermite_prob(m.n == 1 ? 64 : 40, gh_x, gh_w);
      Eigen::VectorXd x = 0.8 * rng.normal_vector(m.n);
      KernelPieces p = ev.pieces(0.7);
      const double r_x = quadratic_form_R(m, x);
      double mass = 0;
      if (m.n == 1) {
        for (std::size_t i = 0; i < gh_x.size(); ++i) {
          Eigen::VectorXd u = m.Q_inf_sqrt * Eigen::VectorXd::Constant(1, gh_x[i]);
          mass += gh_w[i] * std::exp(ev.log_script_K(p, x, u) + r_x);
        }
      } else {
        for (std::size_t i = 0; i < gh_x.size(); ++i)
          for (std::size_t j = 0; j < gh_x.size(); ++j) {
            Eigen::VectorXd z(2);
            z << gh_x[i], gh_x[j];
            mass += gh_w[i] * gh_w[j] * std::exp(ev.log_script_K(p, x, m.Q_inf_sqrt * z));
          }
        mass *= std::exp(r_x);
      }
      push(led, tag, "kernel.mass", "mehler-kernel", std::abs(mass - 1.0),
           (m.n == 1 ? 1e-6 : 1e-4) * ts);
    }
    if (is_standard_1d(m)) {  // Hermite eigenfunction action of the identity symbol
      Symbol sc = Symbol::parse("const");
      auto f = [](const Eigen::VectorXd& v) { return v(0) * v(0) - 1.0; };  // He_2
      Eigen::VectorXd x0(1);
      x0 << 0.7;
      auto r = apply_multiplier(m, sc, f, x0);
      push(led, tag, "multiplier.hermite_identity", "multiplier",
           std::abs(r.value.real() - f(x0)), 1e-3 * ts);
    }
    {  // indicator long-time part equals a kernel endpoint difference
      Symbol si;
      si.kind = SymbolKind::indicator;
      si.a = 1.3;
      si.b = 2.1;
      si.has_closed_form_m = true;
      Eigen::VectorXd x = rng.normal_vector(m.n), u = rng.normal_vector(m.n);
      if ((x - u).norm() > 1e-4) {
        KernelValue v = kernel_M1(m, si, x, u);
        const double Ka = std::exp(ev.log_script_K(ev.pieces(1.3), x, u));
        const double Kb = std::exp(ev.log_script_K(ev.pieces(2.1), x, u));
        push(led, tag, "multiplier.endpoint_identity", "multiplier",
             std::abs(v.scaled.real() - (Ka - Kb)) / (1.0 + std::abs(Ka - Kb)), 1e-8 * ts);
      }
    }
    {  // matrix action trace vs eigenvalue sum, expdecay symbol
      Symbol se = Symbol::parse("expdecay:0.7");
      Eigen::MatrixXcd M = linear_poly_multiplier_matrix(m, se);
      std::complex<double> tr = M.trace(), want = 0.0;
      for (const auto& nu : m.eigB) want += symbol_m_eval(se, -std::conj(nu));
      push(led, tag, "multiplier.matrix_trace", "multiplier", std::abs(tr - want) / std::abs(want),
           1e-8 * ts);
    }
    if (m.n <= 2) {  // partition of unity and eta lemmas
      const double R_dom = 6.5;
      PartitionOfUnity pou(build_cover(m, R_dom, profile.seed + mi));
      double worst_sum = 0, worst_eta = 0;
      for (int trial = 0; trial < 24; ++trial) {
        Eigen::VectorXd x = rng.normal_vector(m.n);
        x *= (R_dom - 1.2) * std::pow(rng.next_double(), 1.0 / m.n) / x.norm();
        worst_sum = std::max(worst_sum, std::abs(pou.sum_r(x) - 1.0));
        Eigen::VectorXd dir = rng.normal_vector(m.n);
        dir.normalize();
        Eigen::VectorXd un = x + dir * (rng.next_double() / 3.0) / (1.0 + x.norm());
        if (un.norm() <= R_dom - 1.2)
          worst_eta = std::max(worst_eta, std::abs(pou.eta(x, un) - 1.0));
        Eigen::VectorXd uf = x + dir * 70.0 / (1.0 + x.norm());
        if (uf.norm() <= R_dom - 1.2) worst_eta = std::max(worst_eta, pou.eta(x, uf));
      }
      push(led, tag, "localization.partition_sum", "localization", worst_sum, 1e-10 * ts);
      push(led, tag, "localization.eta_lemmas", "localization", worst_eta, 1e-12 * ts);

      Symbol sc = Symbol::parse("const");
      CzSampleSpec spec;
      spec.n_pairs = profile.cz_pairs;
      spec.seed = profile.seed + 77;
      CzScanReport rep = cz_bound_scan(m, sc, pou, spec);
      const bool finite =
          std::isfinite(rep.sup_absQ) && std::isfinite(rep.sup_gradx) && std::isfinite(rep.sup_gradu);
      push(led, tag, "localization.cz_sups_finite", "localization", finite ? 0.0 : 1.0, 0.5);
    }
    {  // zero counts: grid stability and the heuristic ceiling
      int diffs = 0;
      for (int trial = 0; trial < 10; ++trial) {
        Eigen::VectorXd x = 3.0 * (m.Q_inf_sqrt * rng.normal_vector(m.n));
        Eigen::VectorXd u = 3.0 * (m.Q_inf_sqrt * rng.normal_vector(m.n));
        if (count_zeros(m, x, u, 1024).count != count_zeros(m, x, u, 4096).count) ++diffs;
      }
      push(led, tag, "zeros.grid_stability", "zero-analysis", diffs, 0.5);
      ZeroSweepResult sw = zero_sweep(m, profile.zero_pairs, profile.seed + 5, 1024);
      const std::int64_t bound = theoretical_bound_estimate(m);
      push(led, tag, "zeros.sweep_within_bound", "zero-analysis",
           sw.max_count <= bound ? 0.0 : 1.0, 0.5);
    }
    if (m.n <= 2) {  // level-set scan: alpha * measure bounded
      ExperimentConfig cfg;
      cfg.alpha_grid = {10.0, 100.0};
      cfg.mc_budget = std::max(10000, profile.mc_budget);
      cfg.seed = profile.seed;
      ExperimentReport rep = weak_type_scan(m, cfg, OperatorKind::M_full);
      double worst = 0;
      for (const auto& row : rep.rows) worst = std::max(worst, row.alpha_measure);
      push(led, tag, "weaktype.alpha_measure_bounded", "experiments-cli", worst, 10.0 * ts);
    }
  }
  return led;
}

std::string ledger_json(const VerifyLedger& ledger) {
  std::string s = "[";
  for (std::size_t i = 0; i < ledger.checks.size(); ++i) {
    const VerifyCheck& c = ledger.checks[i];
    s += std::string(i ? "," : "") + "\n  {\"check_id\":\"" + c.check_id + "\",\"module\":\"" +
         c.module + "\",\"value\":" + fmt17(c.value) + ",\"tol\":" + fmt17(c.tol) +
         ",\"pass\":" + (c.pass ? "true" : "false") + "}";
  }
  s += "\n]\n";
  return s;
}

}  // namespace ouk
