#include "ouk/measure.hpp"

#include <cmath>

#include "ouk/rng.hpp"

namespace ouk {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

double quadratic_form_R(const OUModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.n) fail(ErrorCode::DimensionMismatch, "point dimension");
  return 0.5 * x.dot(m.Q_inf_inv * x);
}

double q_norm(const OUModel& m, const Eigen::VectorXd& x) {
  if (x.size() != m.n) fail(ErrorCode::DimensionMismatch, "point dimension");
  return (m.Q_inf_inv_sqrt * x).norm();
}

double gamma_log_density(const OUModel& m, const Eigen::VectorXd& x) {
  return -0.5 * m.n * std::log(kTwoPi) - 0.5 * m.log_det_Q_inf - quadratic_form_R(m, x);
}

double gamma_density(const OUModel& m, const Eigen::VectorXd& x) {
  return std::exp(gamma_log_density(m, x));
}

Eigen::MatrixXd gamma_sample(const OUModel& m, int count, std::uint64_t seed) {
  if (count < 1) fail(ErrorCode::DomainError, "count must be >= 1");
  Eigen::MatrixXd out(m.n, count);
  Rng rng(seed);
  for (int j = 0; j < count; ++j) out.col(j) = m.Q_inf_sqrt * rng.normal_vector(m.n);
  return out;
}

PolarCoord polar_decompose(const OUModel& m, const Eigen::VectorXd& x, double beta, double tol) {
  if (x.size() != m.n) fail(ErrorCode::DimensionMismatch, "point dimension");
  if (!(beta > 0.0)) fail(ErrorCode::DomainError, "beta must be positive");
  if (x.norm() == 0.0) fail(ErrorCode::ZeroPoint, "polar coordinates are undefined at x = 0");

  // g(s) = R(D_{-s} x) with y(s) = D_{-s} x; g'(s) = -(1/2)|Q^{1/2}Q_inf^{-1}y|^2 < 0.
  auto g_and_slope = [&](double s, double& slope) {
    const Eigen::VectorXd y = d_matrix(m, -s) * x;
    const Eigen::VectorXd w = m.Q_inf_inv * y;
    slope = -0.5 * (m.Q_sqrt * w).squaredNorm();
    return 0.5 * y.dot(w);
  };

  // Keep the bracket inside the matrix_exp overflow guard.
  const double s_safe = std::min(100.0 / m.hurwitz_margin, 650.0 / m.b_norm);
  double lo = -std::min(50.0 / m.hurwitz_margin, s_safe);
  double hi = -lo;
  double slope;
  double g_lo = g_and_slope(lo, slope);
  double g_hi = g_and_slope(hi, slope);
  if (!(g_lo >= beta && g_hi <= beta)) {
    lo = -s_safe;
    hi = s_safe;
    g_lo = g_and_slope(lo, slope);
    g_hi = g_and_slope(hi, slope);
    if (!(g_lo >= beta && g_hi <= beta))
      fail(ErrorCode::BracketFailure,
           "level " + std::to_string(beta) + " not bracketed on the group orbit");
  }

  double s = 0.0;
  double g = g_and_slope(s, slope);
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    if (!(slope < 0.0))
      fail(ErrorCode::BracketFailure, "non-decreasing orbit map (slope >= 0)");
    if (std::abs(g - beta) <= tol * std::max(1.0, beta)) {
      converged = true;
      break;
    }
    // keep the bracket consistent with monotone decrease
    if (g > beta)
      lo = s;
    else
      hi = s;
    // Newton on log g: the orbit map runs over e^{+-2 Re(lambda) s} scales, and
    // plain Newton crawls when started far on the steep side.
    double s_next = s - std::log(g / beta) * (g / slope);
    if (!(s_next > lo && s_next < hi)) s_next = 0.5 * (lo + hi);
    s = s_next;
    g = g_and_slope(s, slope);
  }
  if (!converged && std::abs(g - beta) > 1e-10 * std::max(1.0, beta))
    fail(ErrorCode::BracketFailure, "polar solve did not converge");

  PolarCoord c;
  c.s = s;
  c.x_tilde = d_matrix(m, -s) * x;
  c.beta = beta;
  return c;
}

double polar_volume_element(const OUModel& m, const PolarCoord& coord) {
  const Eigen::VectorXd w = m.Q_inf_inv * coord.x_tilde;
  const double wn = w.norm();
  if (wn == 0.0) fail(ErrorCode::ZeroPoint, "volume element undefined at x_tilde = 0");
  return std::exp(-coord.s * m.trace_B) * (m.Q_sqrt * w).squaredNorm() / (2.0 * wn);
}

std::vector<std::pair<Eigen::VectorXd, double>> surface_quadrature(const OUModel& m, double beta,
                                                                   int nodes) {
  if (!(beta > 0.0)) fail(ErrorCode::DomainError, "beta must be positive");
  std::vector<std::pair<Eigen::VectorXd, double>> out;
  const double r = std::sqrt(2.0 * beta);
  if (m.n == 1) {
    // E_beta is two points; the "surface measure" is counting measure.
    Eigen::VectorXd p(1);
    p[0] = r * m.Q_inf_sqrt(0, 0);
    out.emplace_back(p, 1.0);
    out.emplace_back(-p, 1.0);
    return out;
  }
  if (m.n != 2)
    fail(ErrorCode::DomainError, "surface_quadrature implemented for n <= 2");
  // Trapezoid in the angle is spectrally accurate for smooth periodic maps.
  const double dth = kTwoPi / nodes;
  for (int i = 0; i < nodes; ++i) {
    const double th = i * dth;
    Eigen::Vector2d omega(std::cos(th), std::sin(th));
    Eigen::Vector2d domega(-std::sin(th), std::cos(th));
    Eigen::VectorXd p = r * (m.Q_inf_sqrt * omega);
    const double jac = (r * (m.Q_inf_sqrt * domega)).norm();
    out.emplace_back(p, jac * dth);
  }
  return out;
}

}  // namespace ouk
