#include "ouk/multiplier.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

#include "ouk/errors.hpp"
#include "ouk/measure.hpp"
#include "ouk/mehler.hpp"

namespace ouk {

namespace {
constexpr std::complex<double> kI{0.0, 1.0};

double effective_t_max(const OUModel& m, const MultiplierKernelConfig& cfg) {
  double want = cfg.t_max > 0 ? cfg.t_max : std::max(20.0, 40.0 / m.hurwitz_margin);
  // d_matrix refuses |t|*|B| > 700; stay under with headroom.
  return std::min(want, 650.0 / std::max(m.b_norm, 1e-6));
}
}  // namespace

std::complex<double> Symbol::phi(double t) const {
  switch (kind) {
    case SymbolKind::constant:
      return 1.0;
    case SymbolKind::exp_decay:
      return std::exp(-a * t);
    case SymbolKind::imag_power:
      return std::exp(-kI * gamma * std::log(t));
    case SymbolKind::indicator:
      return (t > a && t < b) ? 1.0 : 0.0;
  }
  return 0.0;
}

Symbol Symbol::parse(const std::string& text) {
  Symbol s;
  auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (head == "const") {
    s.kind = SymbolKind::constant;
    if (!args.empty()) fail(ErrorCode::DomainError, "const symbol takes no arguments");
  } else if (head == "expdecay") {
    s.kind = SymbolKind::exp_decay;
    s.a = std::stod(args);
    if (!(s.a > 0)) fail(ErrorCode::DomainError, "expdecay rate must be positive");
  } else if (head == "imagpow") {
    s.kind = SymbolKind::imag_power;
    s.gamma = std::stod(args);
    if (s.gamma == 0 || !std::isfinite(s.gamma))
      fail(ErrorCode::DomainError, "imagpow exponent must be nonzero");
  } else if (head == "indicator") {
    s.kind = SymbolKind::indicator;
    auto comma = args.find(',');
    if (comma == std::string::npos)
      fail(ErrorCode::DomainError, "indicator symbol needs two endpoints a,b");
    s.a = std::stod(args.substr(0, comma));
    const std::string bs = args.substr(comma + 1);
    s.b = (bs == "inf" || bs == "Inf" || bs == "INF")
              ? std::numeric_limits<double>::infinity()
              : std::stod(bs);
    if (!(s.a >= 0) || !(s.b > s.a))
      fail(ErrorCode::DomainError, "indicator needs 0 <= a < b");
  } else {
    fail(ErrorCode::DomainError, "unknown symbol '" + text + "'");
  }
  return s;
}

std::string Symbol::to_string() const {
  char buf[64];
  switch (kind) {
    case SymbolKind::constant:
      return "const";
    case SymbolKind::exp_decay:
      std::snprintf(buf, sizeof buf, "expdecay:%.17g", a);
      return buf;
    case SymbolKind::imag_power:
      std::snprintf(buf, sizeof buf, "imagpow:%.17g", gamma);
      return buf;
    case SymbolKind::indicator:
      if (std::isinf(b)) {
        std::snprintf(buf, sizeof buf, "indicator:%.17g,inf", a);
      } else {
        std::snprintf(buf, sizeof buf, "indicator:%.17g,%.17g", a, b);
      }
      return buf;
  }
  return "?";
}

std::complex<double> complex_gamma(std::complex<double> z) {
  static const double g[9] = {0.99999999999980993,  676.5203681218851,   -1259.1392167224028,
                              771.32342877765313,   -176.61502916214059, 12.507343278686905,
                              -0.13857109526572012, 9.9843695780195716e-6,
                              1.5056327351493116e-7};
  if (z.real() < 0.5) {
    // reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z)
    return M_PI / (std::sin(M_PI * z) * complex_gamma(1.0 - z));
  }
  z -= 1.0;
  std::complex<double> x = g[0];
  for (int i = 1; i < 9; ++i) x += g[i] / (z + static_cast<double>(i));
  std::complex<double> t = z + 7.5;
  return std::sqrt(2.0 * M_PI) * std::pow(t, z + 0.5) * std::exp(-t) * x;
}

std::complex<double> symbol_m_eval(const Symbol& sym, std::complex<double> lambda, int order) {
  if (!(lambda.real() > 0))
    fail(ErrorCode::DomainError, "symbol evaluation requires Re(lambda) > 0");
  if (order < 0) fail(ErrorCode::DomainError, "derivative order must be nonnegative");
  switch (sym.kind) {
    case SymbolKind::constant:
      return order == 0 ? 1.0 : 0.0;
    case SymbolKind::exp_decay: {
      if (order == 0) return lambda / (lambda + sym.a);
      // m = 1 - a/(lambda+a); d^k: a (-1)^{k+1} k! (lambda+a)^{-(k+1)}
      double fact = 1;
      for (int j = 2; j <= order; ++j) fact *= j;
      double sign = (order % 2 == 0) ? -1.0 : 1.0;
      return sym.a * sign * fact * std::pow(lambda + sym.a, -(order + 1.0));
    }
    case SymbolKind::imag_power: {
      std::complex<double> coef = complex_gamma(1.0 - kI * sym.gamma);
      std::complex<double> expo = kI * sym.gamma;
      for (int j = 0; j < order; ++j) coef *= expo - static_cast<double>(j);
      return coef * std::pow(lambda, expo - static_cast<double>(order));
    }
    case SymbolKind::indicator: {
      std::complex<double> va =
          std::pow(std::complex<double>(-sym.a), order) * std::exp(-sym.a * lambda);
      std::complex<double> vb =
          std::isinf(sym.b)
              ? 0.0
              : std::pow(std::complex<double>(-sym.b), order) * std::exp(-sym.b * lambda);
      if (sym.a == 0 && order > 0) va = 0.0;  // 0^k = 0 for k >= 1
      return va - vb;
    }
  }
  return 0.0;
}

std::complex<double> KernelValue::full() const {
  const double mag = std::abs(scaled);
  if (mag > 0 && r_x + std::log(mag) > 700.0)
    fail(ErrorCode::Overflow, "multiplier kernel exceeds double range at this x");
  return std::exp(r_x) * scaled;
}

double diagonal_time_scale(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qes(m.Q);
  return 0.5 * (x - u).squaredNorm() / qes.eigenvalues().maxCoeff();
}

// Near the diagonal the integrand's left flank behaves like
// exp(-t_scale/t): it climbs by e-folds on a 1/E fraction of a decade, so
// uniform-in-log panels starve the adaptive loop.  Space the edges
// geometrically in the exponent E(t) = t_scale/t through the flank instead.
std::vector<double> kernel_time_edges(double t_scale, double lo, double hi) {
  const double s_lo = std::log(lo), s_hi = std::log(hi);
  if (!(t_scale > 1.5 * lo)) return linear_edges(s_lo, s_hi, 14);
  const double s_peak = std::log(std::min(t_scale, hi));
  std::vector<double> edges{s_lo};
  const double E_lo = t_scale / lo;
  const int J = 20;
  for (int j = 1; j <= J; ++j) {
    const double E = std::pow(E_lo, 1.0 - static_cast<double>(j) / J);
    const double s = std::log(t_scale / E);
    if (s > edges.back() + 1e-9 && s < s_peak - 1e-9) edges.push_back(s);
  }
  if (s_peak > edges.back() + 1e-9 && s_peak < s_hi - 1e-9) edges.push_back(s_peak);
  if (s_hi > edges.back() + 1e-9) {
    const double from = edges.back();
    const int tail = 12;
    for (int j = 1; j <= tail; ++j) edges.push_back(from + (s_hi - from) * j / tail);
  }
  edges.back() = s_hi;
  return edges;
}

namespace {

// -int phi(t) scriptK N dt over [lo,hi] in t, adaptive in log t.
struct ScaledIntegral {
  std::complex<double> value{0.0};
  double err = 0;
};

ScaledIntegral integrate_scaled_dk(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u, double lo, double hi, double t_scale,
                                   const QuadratureSpec& spec) {
  ScaledIntegral out;
  if (!(hi > lo)) return out;
  KernelEvaluator ev(m);
  auto integrand = [&](double s) -> std::complex<double> {
    const double t = std::exp(s);
    KernelPieces p = ev.pieces(t);
    const double lk = ev.log_script_K(p, x, u);
    if (lk < -700.0) return 0.0;
    return -sym.phi(t) * std::exp(lk) * ev.nt(p, x, u) * t;  // t = Jacobian of s = log t
  };
  std::vector<double> edges = kernel_time_edges(t_scale, lo, hi);
  auto q = adaptive_gauss_kronrod_edges<std::complex<double>>(integrand, edges, spec);
  if (!q.converged)
    fail(ErrorCode::NonConvergence, "multiplier kernel quadrature failed to converge");
  out.value = q.value;
  out.err = q.error;
  return out;
}

void check_pair(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (x.size() != m.n || u.size() != m.n)
    fail(ErrorCode::DimensionMismatch, "kernel point dimension mismatch");
  if (!x.allFinite() || !u.allFinite()) fail(ErrorCode::DomainError, "kernel point must be finite");
}

}  // namespace

KernelValue kernel_M1(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u, const MultiplierKernelConfig& cfg) {
  check_pair(m, x, u);
  if (!(cfg.eps > 0)) fail(ErrorCode::DomainError, "tail piece needs eps > 0");
  KernelValue kv;
  kv.r_x = quadratic_form_R(m, x);
  const double t_hi = effective_t_max(m, cfg);
  double lo = cfg.eps, hi = t_hi;
  if (sym.kind == SymbolKind::indicator) {
    lo = std::max(lo, sym.a);
    hi = std::min(hi, sym.b);
  }
  if (hi <= lo) return kv;
  auto part = integrate_scaled_dk(m, sym, x, u, lo, hi, diagonal_time_scale(m, x, u), cfg.quad);
  kv.scaled = part.value;
  // certified-by-decay tail: the integrand decays at least like e^{-margin t}
  // past t_max; bound the remainder by twice the endpoint value over the rate.
  double tail = 0;
  if (hi >= t_hi && !std::isinf(hi)) {
    KernelEvaluator ev(m);
    KernelPieces p = ev.pieces(t_hi);
    double endpoint = std::exp(ev.log_script_K(p, x, u)) * std::abs(ev.nt(p, x, u));
    tail = 2.0 * endpoint / m.hurwitz_margin;
  }
  kv.err_bound = part.err + tail;
  return kv;
}

// d phi / dt for the smooth profiles (const and indicator are handled by
// endpoint evaluation instead).
std::complex<double> symbol_phi_prime(const Symbol& sym, double t) {
  switch (sym.kind) {
    case SymbolKind::exp_decay:
      return -sym.a * std::exp(-sym.a * t);
    case SymbolKind::imag_power:
      return (-kI * sym.gamma) * std::exp(-kI * sym.gamma * std::log(t)) / t;
    default:
      return 0.0;
  }
}

// The direct form -int phi dK/dt cancels through ~K_max * t_scale/t orders
// near the diagonal (the integrand telescopes), which drowns the tiny true
// value in roundoff.  Integrate by parts instead: the boundary term at 0+
// vanishes off the diagonal (scriptK dies like exp(-t_scale/t), phi is
// bounded), leaving -phi(T) scriptK_T + int phi' scriptK, a single-signed
// integrand with no cancellation.
KernelValue kernel_M0(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u, const MultiplierKernelConfig& cfg) {
  check_pair(m, x, u);
  const double d = (x - u).norm();
  if (d < 1e-8 * (1.0 + x.norm()))
    fail(ErrorCode::DiagonalPoint, "time integral of the kernel derivative diverges on the diagonal");
  KernelValue kv;
  kv.r_x = quadratic_form_R(m, x);
  const double t_scale = diagonal_time_scale(m, x, u);
  const double T = cfg.t_split;

  KernelEvaluator ev(m);
  auto scriptK = [&](double t) -> double {
    if (!(t > 0) || t_scale / t > 700.0) return 0.0;  // underflown flank
    const double lk = ev.log_script_K(ev.pieces(t), x, u);
    return lk < -700.0 ? 0.0 : std::exp(lk);
  };

  if (sym.kind == SymbolKind::indicator) {
    // phi' is a pair of endpoint atoms: M_0 = scriptK(min(a,T)) - scriptK(min(b,T))
    const double Ka = sym.a <= 0 ? 0.0 : scriptK(std::min(sym.a, T));
    const double Kb = scriptK(std::min(sym.b, T));
    kv.scaled = Ka - Kb;
    kv.err_bound = 1e-14 * (std::abs(Ka) + std::abs(Kb));
    return kv;
  }

  const std::complex<double> boundary = -sym.phi(T) * scriptK(T);
  kv.scaled = boundary;
  kv.err_bound = 1e-15 * std::abs(boundary);
  if (sym.kind == SymbolKind::constant) return kv;

  double t_min = std::max(std::min(0.5 * T, t_scale / 700.0), 1e-300);
  auto integrand = [&](double s) -> std::complex<double> {
    const double t = std::exp(s);
    const double K = scriptK(t);
    if (K == 0.0) return 0.0;
    return symbol_phi_prime(sym, t) * K * t;  // t = Jacobian of s = log t
  };
  auto q = adaptive_gauss_kronrod_edges<std::complex<double>>(
      integrand, kernel_time_edges(t_scale, t_min, T), cfg.quad);
  if (!q.converged)
    fail(ErrorCode::NonConvergence, "short-time kernel quadrature failed to converge");
  kv.scaled += q.value;
  kv.err_bound += q.error;
  return kv;
}

KernelValue apply_multiplier_point(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u0, const MultiplierKernelConfig& cfg) {
  KernelValue m0 = kernel_M0(m, sym, x, u0, cfg);
  KernelValue m1 = kernel_M1(m, sym, x, u0, cfg);
  KernelValue kv;
  kv.r_x = m0.r_x;
  kv.scaled = m0.scaled + m1.scaled;
  kv.err_bound = m0.err_bound + m1.err_bound;
  return kv;
}

ApplyResult apply_multiplier(const OUModel& m, const Symbol& sym,
                             const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x, const MultiplierKernelConfig& cfg,
                             int hermite_nodes) {
  if (m.n > 2)
    fail(ErrorCode::DomainError, "quadrature application is limited to n <= 2");
  if (x.size() != m.n) fail(ErrorCode::DimensionMismatch, "application point dimension mismatch");
  if (hermite_nodes < 4) fail(ErrorCode::DomainError, "need at least 4 Hermite nodes");

  std::vector<double> gh_x, gh_w;
  gauss_hermite_prob(hermite_nodes, gh_x, gh_w);

  KernelEvaluator ev(m);
  const double t_hi = effective_t_max(m, cfg);
  const double t_floor = 1e-7;

  // h(t) = E[N_t(x,u) f(u)] over u ~ N(e^{tB}x, Q_t)  ( = d/dt H_t f(x) )
  auto expectation = [&](double t) -> double {
    KernelPieces p = ev.pieces(t);
    Eigen::LLT<Eigen::MatrixXd> llt(p.Qt);
    if (llt.info() != Eigen::Success)
      fail(ErrorCode::NonConvergence, "transition factorization failed in application");
    Eigen::MatrixXd L = llt.matrixL();
    Eigen::VectorXd mean = p.expB * x;
    double acc = 0;
    if (m.n == 1) {
      Eigen::VectorXd u(1);
      for (int i = 0; i < hermite_nodes; ++i) {
        u(0) = mean(0) + L(0, 0) * gh_x[i];
        acc += gh_w[i] * ev.nt(p, x, u) * f(u);
      }
    } else {
      Eigen::VectorXd u(2), z(2);
      for (int i = 0; i < hermite_nodes; ++i) {
        for (int j = 0; j < hermite_nodes; ++j) {
          z(0) = gh_x[i];
          z(1) = gh_x[j];
          u = mean + L * z;
          acc += gh_w[i] * gh_w[j] * ev.nt(p, x, u) * f(u);
        }
      }
    }
    return acc;
  };

  double b_lo = t_floor, b_hi = t_hi;
  if (sym.kind == SymbolKind::indicator) {
    b_lo = std::max(b_lo, sym.a);
    b_hi = std::min(b_hi, sym.b);
  }
  ApplyResult res;
  if (b_hi <= b_lo) {
    res.value = 0.0;
    return res;
  }
  auto integrand = [&](double s) -> std::complex<double> {
    const double t = std::exp(s);
    return -sym.phi(t) * expectation(t) * t;
  };
  QuadratureSpec spec = cfg.quad;
  spec.rel_tol = std::max(spec.rel_tol, 1e-9);
  spec.abs_tol = std::max(spec.abs_tol, 1e-11);
  std::vector<double> edges = linear_edges(std::log(b_lo), std::log(b_hi), 18);
  auto q = adaptive_gauss_kronrod_edges<std::complex<double>>(integrand, edges, spec);
  if (!q.converged)
    fail(ErrorCode::NonConvergence, "multiplier application quadrature failed to converge");
  res.value = q.value;
  // the [0, t_floor) sliver contributes ~ |phi| |h(t_floor)| t_floor
  res.err_estimate = q.error + std::abs(expectation(t_floor)) * t_floor;
  return res;
}

namespace {
thread_local const Symbol* g_stem_symbol = nullptr;
std::complex<double> stem_bridge(std::complex<double> lambda, int order) {
  return symbol_m_eval(*g_stem_symbol, lambda, order);
}
}  // namespace

Eigen::MatrixXcd linear_poly_multiplier_matrix(const OUModel& m, const Symbol& sym) {
  if (!sym.has_closed_form_m)
    fail(ErrorCode::DomainError, "matrix action needs closed-form symbol derivatives");
  Eigen::MatrixXcd A = (-m.B.transpose()).cast<std::complex<double>>();
  g_stem_symbol = &sym;
  Eigen::MatrixXcd out = A.matrixFunction(stem_bridge);
  g_stem_symbol = nullptr;
  if (!out.allFinite())
    fail(ErrorCode::DefectiveStructureTolerance,
         "blockwise symbol series produced non-finite entries");
  return out;
}

}  // namespace ouk
