#pragma once

#include <Eigen/Dense>
#include <complex>
#include <functional>
#include <string>

#include "ouk/model.hpp"
#include "ouk/quadrature.hpp"

namespace ouk {

// Bounded time profiles phi and their Laplace-type symbols
// m(lambda) = lambda * int_0^inf phi(t) e^{-t lambda} dt.
enum class SymbolKind { constant, exp_decay, imag_power, indicator };

struct Symbol {
  SymbolKind kind = SymbolKind::constant;
  double a = 0;      // exp_decay rate, or indicator left endpoint
  double b = 0;      // indicator right endpoint (may be +inf)
  double gamma = 0;  // imag_power exponent
  bool has_closed_form_m = true;

  std::complex<double> phi(double t) const;  // |phi| <= 1 for all built-ins
  bool is_real() const { return kind != SymbolKind::imag_power; }

  // CLI syntax: "const", "expdecay:a", "imagpow:g", "indicator:a,b" (b may be "inf").
  static Symbol parse(const std::string& text);
  std::string to_string() const;
};

// order-th lambda-derivative of m, closed form, Re lambda > 0 only.
std::complex<double> symbol_m_eval(const Symbol& sym, std::complex<double> lambda, int order = 0);

// d phi / dt for the smooth profiles; zero for const and indicator.
std::complex<double> symbol_phi_prime(const Symbol& sym, double t);

// Gamma on the complex plane (Lanczos); used by the imaginary-power symbol.
std::complex<double> complex_gamma(std::complex<double> z);

struct MultiplierKernelConfig {
  double eps = 1.0;    // lower cut of the M_eps tail piece
  double t_split = 1.0;
  QuadratureSpec quad{1e-10, 1e-13, 600, true};
  double t_max = 0;    // 0 = auto: max(20, 40/hurwitz_margin), capped by overflow
};

// Kernel values carry the e^{-R(x)} scale explicitly so that large |x| never
// overflows intermediate work; full() restores the absolute normalization.
struct KernelValue {
  std::complex<double> scaled;  // e^{-R(x)} * M(x,u)
  double r_x = 0;               // R(x)
  double err_bound = 0;         // absolute bound on `scaled`: quadrature + tail truncation
  std::complex<double> full() const;  // e^{R(x)} * scaled; throws Overflow past exp range
};

// Characteristic time of the kernel's near-diagonal flank: below t_scale =
// |u-x|^2 / (2 lambda_max(Q)) the kernel dies like exp(-t_scale/t).
double diagonal_time_scale(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u);

// Seed subdivision in s = log t for time-integrals of the kernel: edges
// geometric in the exponent t_scale/t through the flank, uniform in log t
// past the peak.  Keeps the adaptive loop from starving on the doubly-
// exponential rise.
std::vector<double> kernel_time_edges(double t_scale, double t_lo, double t_hi);

// M_eps(x,u) = -int_eps^inf phi(t) dK_t/dt (x,u) dt, eps = cfg.eps (default 1).
KernelValue kernel_M1(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u, const MultiplierKernelConfig& cfg = {});
// M_0(x,u) = -int_0^1 phi(t) dK_t/dt (x,u) dt, defined off the diagonal.
// Errors: DiagonalPoint when |x-u| < 1e-8 (1+|x|).
KernelValue kernel_M0(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u, const MultiplierKernelConfig& cfg = {});

// Point-mass application: M_0 + M_1 at (x, u0), in the same scaled convention.
KernelValue apply_multiplier_point(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u0,
                                   const MultiplierKernelConfig& cfg = {});

struct ApplyResult {
  std::complex<double> value;
  double err_estimate = 0;
};

// m(T) f (x) for evaluable f with polynomial growth, computed in the
// absolutely convergent order: outer adaptive quadrature in t of
// -phi(t) * d/dt H_t f(x), the inner derivative realized as the Gaussian
// expectation E[N_t(x,u) f(u)] over u ~ N(e^{tB}x, Q_t) by tensor
// Gauss-Hermite (exact for polynomial f).  n <= 2 for quadrature mode.
ApplyResult apply_multiplier(const OUModel& m, const Symbol& sym,
                             const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x, const MultiplierKernelConfig& cfg = {},
                             int hermite_nodes = 20);

// Exact action of m(T) on linear polynomials p_v(x) = <v,x>: returns
// m(-B^T) by Schur-Parlett with the symbol's closed-form derivative series
// on each (possibly defective) diagonal block.
// Errors: DefectiveStructureTolerance if the blockwise series fails to
// produce finite entries.
Eigen::MatrixXcd linear_poly_multiplier_matrix(const OUModel& m, const Symbol& sym);

}  // namespace ouk
