#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ouk/model.hpp"

namespace ouk {

// R(x) = (1/2) <Q_inf^{-1} x, x> and the associated norm |x|_Q = |Q_inf^{-1/2} x|.
double quadratic_form_R(const OUModel& m, const Eigen::VectorXd& x);
double q_norm(const OUModel& m, const Eigen::VectorXd& x);

// Lebesgue density of the invariant measure: (2pi)^{-n/2} det(Q_inf)^{-1/2} e^{-R(x)}.
double gamma_log_density(const OUModel& m, const Eigen::VectorXd& x);
double gamma_density(const OUModel& m, const Eigen::VectorXd& x);

// i.i.d. draws x = Q_inf^{1/2} z, z standard normal; columns are samples.
// Deterministic given (seed, count).
Eigen::MatrixXd gamma_sample(const OUModel& m, int count, std::uint64_t seed);

// Group-flow coordinates: every x != 0 is uniquely x = D_s x_tilde with
// R(x_tilde) = beta.
struct PolarCoord {
  double s = 0.0;
  Eigen::VectorXd x_tilde;
  double beta = 0.0;
};

// Solves R(D_{-s} x) = beta for s by safeguarded Newton on the bracket
// [-50, +50]/hurwitz_margin (widened once).  The map s -> R(D_{-s}x) is
// strictly decreasing: its derivative is -(1/2)|Q^{1/2} Q_inf^{-1} D_{-s}x|^2;
// positivity of that expression is asserted at runtime.
// Errors: ZeroPoint (x = 0), BracketFailure.
PolarCoord polar_decompose(const OUModel& m, const Eigen::VectorXd& x, double beta,
                           double tol = 1e-12);

// Jacobian factor w(s, x_tilde) with dx = w dS_beta(x_tilde) ds:
// e^{-s tr B} |Q^{1/2} Q_inf^{-1} x_tilde|^2 / (2 |Q_inf^{-1} x_tilde|).
double polar_volume_element(const OUModel& m, const PolarCoord& coord);

// Nodes and weights for surface integration over E_beta = {R = beta},
// n <= 2: exact parametrization through the unit sphere mapped by
// sqrt(2 beta) Q_inf^{1/2} with the analytic arc-length Jacobian.
// Each entry is (point on E_beta, surface weight).
std::vector<std::pair<Eigen::VectorXd, double>> surface_quadrature(const OUModel& m, double beta,
                                                                   int nodes);

}  // namespace ouk
