#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "ouk/errors.hpp"

namespace ouk {

// Tolerances and subdivision budget for adaptive quadrature.
// log_substitution asks integrators with an endpoint at 0+ to integrate in
// tau = log t; only the kernel time-integrals consult it.
struct QuadratureSpec {
  double rel_tol = 1e-12;
  double abs_tol = 1e-14;
  int max_subdivisions = 2000;
  bool log_substitution = true;
};

inline double quad_norm(double v) { return std::abs(v); }
inline double quad_norm(const std::complex<double>& v) { return std::abs(v); }
template <class Derived>
double quad_norm(const Eigen::MatrixBase<Derived>& v) {
  if (v.size() == 0) return 0.0;
  return v.cwiseAbs().maxCoeff();
}

template <class T>
struct QuadOutcome {
  T value;
  double error = 0.0;
  int subdivisions = 0;
  bool converged = false;
};

namespace detail {

// 7-point Gauss / 15-point Kronrod pair (QUADPACK constants).
inline const double* gk_nodes() {
  static const double x[8] = {
      0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
      0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
      0.586087235467691130294144838258730, 0.405845151377397166906606412076961,
      0.207784955007898467600689403773245, 0.0};
  return x;
}
inline const double* gk_wk() {
  static const double w[8] = {
      0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
      0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
      0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
      0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  return w;
}
inline const double* gk_wg() {
  static const double w[4] = {
      0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
      0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
  return w;
}

template <class T, class F>
void gk15(F&& f, double a, double b, T& value, double& err, double* roundoff_floor = nullptr) {
  const double* xk = gk_nodes();
  const double* wk = gk_wk();
  const double* wg = gk_wg();
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);

  T fc = f(c);
  T flo[7], fhi[7];
  T sk = wk[7] * fc;
  T sg = wg[3] * fc;
  double resabs = wk[7] * quad_norm(fc);
  for (int j = 0; j < 7; ++j) {
    flo[j] = f(c - h * xk[j]);
    fhi[j] = f(c + h * xk[j]);
    T pair = flo[j] + fhi[j];
    sk += wk[j] * pair;
    if (j % 2 == 1) sg += wg[j / 2] * pair;  // odd Kronrod indices are Gauss nodes
    resabs += wk[j] * (quad_norm(flo[j]) + quad_norm(fhi[j]));
  }
  value = h * sk;
  T diff = h * (sk - sg);
  const double d = quad_norm(diff);
  // QUADPACK error model: sharpen |K-G| by the scale of the integrand's
  // variation (resasc), and never claim less than the roundoff floor.
  T mean = 0.5 * sk;  // Kronrod weights sum to 2 on [-1,1]
  double resasc = wk[7] * quad_norm(fc - mean);
  for (int j = 0; j < 7; ++j)
    resasc += wk[j] * (quad_norm(flo[j] - mean) + quad_norm(fhi[j] - mean));
  resasc *= std::abs(h);
  resabs *= std::abs(h);
  err = d;
  if (resasc > 0.0 && d > 0.0)
    err = resasc * std::min(1.0, std::pow(200.0 * d / resasc, 1.5));
  const double floor = 50.0 * std::numeric_limits<double>::epsilon() * resabs;
  if (floor > err) err = floor;
  if (roundoff_floor) *roundoff_floor = floor;
}

template <class T>
struct Segment {
  double a, b;
  T value;
  double err;
  double floor;  // roundoff floor of this panel; err can never drop below it
};

}  // namespace detail

// Adaptive Gauss-Kronrod integration of f over the segments defined by
// `edges` (ascending).  Supplying interior edges seeds the subdivision so
// that narrow features and integrand breakpoints are not missed.
template <class T, class F>
QuadOutcome<T> adaptive_gauss_kronrod_edges(F&& f, const std::vector<double>& edges,
                                            const QuadratureSpec& spec = {}) {
  QuadOutcome<T> out;
  std::vector<detail::Segment<T>> segs;
  segs.reserve(edges.size() + 64);
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    detail::Segment<T> s;
    s.a = edges[i];
    s.b = edges[i + 1];
    detail::gk15(f, s.a, s.b, s.value, s.err, &s.floor);
    segs.push_back(std::move(s));
  }
  if (segs.empty()) fail(ErrorCode::DomainError, "quadrature needs at least one segment");

  T total = segs[0].value;
  double err_total = segs[0].err;
  double floor_total = segs[0].floor;
  for (std::size_t i = 1; i < segs.size(); ++i) {
    total += segs[i].value;
    err_total += segs[i].err;
    floor_total += segs[i].floor;
  }

  int splits = 0;
  while (true) {
    const double tol = std::max(spec.abs_tol, spec.rel_tol * quad_norm(total));
    if (err_total <= tol) {
      out.converged = true;
      break;
    }
    // A cancellation-heavy integral cannot beat the accumulated roundoff of
    // |f|; once the estimate sits at that floor, further splitting is noise.
    if (err_total <= 2.0 * floor_total) {
      out.converged = true;
      break;
    }
    if (splits >= spec.max_subdivisions) break;
    std::size_t worst = 0;
    for (std::size_t i = 1; i < segs.size(); ++i)
      if (segs[i].err > segs[worst].err) worst = i;
    detail::Segment<T> seg = segs[worst];
    const double mid = 0.5 * (seg.a + seg.b);
    if (mid <= seg.a || mid >= seg.b) break;  // interval exhausted at double resolution
    detail::Segment<T> left{seg.a, mid, seg.value, 0.0, 0.0};
    detail::Segment<T> right{mid, seg.b, seg.value, 0.0, 0.0};
    detail::gk15(f, left.a, left.b, left.value, left.err, &left.floor);
    detail::gk15(f, right.a, right.b, right.value, right.err, &right.floor);
    total += left.value + right.value - seg.value;
    err_total += left.err + right.err - seg.err;
    floor_total += left.floor + right.floor - seg.floor;
    segs[worst] = std::move(left);
    segs.push_back(std::move(right));
    ++splits;
  }

  // Recompute the sums directly; the incremental updates can drift.
  err_total = 0.0;
  floor_total = 0.0;
  for (const auto& s : segs) {
    err_total += s.err;
    floor_total += s.floor;
  }
  out.value = std::move(total);
  out.error = err_total;
  out.subdivisions = splits;
  if (!out.converged)
    out.converged = err_total <= std::max({spec.abs_tol, spec.rel_tol * quad_norm(out.value),
                                           2.0 * floor_total});
  return out;
}

template <class T, class F>
QuadOutcome<T> adaptive_gauss_kronrod(F&& f, double a, double b, const QuadratureSpec& spec = {}) {
  return adaptive_gauss_kronrod_edges<T>(std::forward<F>(f), std::vector<double>{a, b}, spec);
}

template <class T, class F>
T integrate_or_throw(F&& f, const std::vector<double>& edges, const QuadratureSpec& spec,
                     const char* what) {
  auto out = adaptive_gauss_kronrod_edges<T>(std::forward<F>(f), edges, spec);
  if (!out.converged)
    fail(ErrorCode::NonConvergence, std::string(what) + ": quadrature error " +
                                        std::to_string(out.error) + " above tolerance");
  return out.value;
}

// Fixed composite rule: 4-point Gauss-Legendre on each panel.  Used on hot
// paths where the node set must be known in advance so per-node state can be
// precomputed once and shared across millions of evaluations.
struct PanelRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

inline PanelRule composite_gauss4(const std::vector<double>& edges) {
  static const double gx[2] = {0.339981043584856264802665759103245,
                               0.861136311594052575223946488892809};
  static const double gw[2] = {0.652145154862546142626936050778001,
                               0.347854845137453857373063942221748};
  PanelRule r;
  r.nodes.reserve(4 * (edges.size() - 1));
  r.weights.reserve(4 * (edges.size() - 1));
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double c = 0.5 * (edges[i] + edges[i + 1]);
    const double h = 0.5 * (edges[i + 1] - edges[i]);
    for (int j = 1; j >= 0; --j) {
      r.nodes.push_back(c - h * gx[j]);
      r.weights.push_back(h * gw[j]);
    }
    for (int j = 0; j < 2; ++j) {
      r.nodes.push_back(c + h * gx[j]);
      r.weights.push_back(h * gw[j]);
    }
  }
  return r;
}

inline std::vector<double> linear_edges(double a, double b, int panels) {
  std::vector<double> e(panels + 1);
  for (int i = 0; i <= panels; ++i) e[i] = a + (b - a) * static_cast<double>(i) / panels;
  e.back() = b;
  return e;
}

inline std::vector<double> log_edges(double a, double b, int panels) {
  if (a <= 0.0 || b <= a) fail(ErrorCode::DomainError, "log_edges needs 0 < a < b");
  const double la = std::log(a), lb = std::log(b);
  std::vector<double> e(panels + 1);
  for (int i = 0; i <= panels; ++i)
    e[i] = std::exp(la + (lb - la) * static_cast<double>(i) / panels);
  e.front() = a;
  e.back() = b;
  return e;
}

// Gauss-Hermite rule for the weight e^{-z^2/2}/sqrt(2*pi) (Golub-Welsch).
// Sum of weights is 1; exact for polynomials of degree <= 2*n_nodes-1.
inline void gauss_hermite_prob(int n_nodes, std::vector<double>& nodes,
                               std::vector<double>& weights) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  for (int i = 0; i + 1 < n_nodes; ++i) {
    const double b = std::sqrt(static_cast<double>(i + 1));
    J(i, i + 1) = b;
    J(i + 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  nodes.resize(n_nodes);
  weights.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    nodes[i] = es.eigenvalues()[i];
    const double v0 = es.eigenvectors()(0, i);
    weights[i] = v0 * v0;
  }
}

}  // namespace ouk
