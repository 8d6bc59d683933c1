#include "ouk/mehler.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "ouk/errors.hpp"
#include "ouk/measure.hpp"
#include "ouk/rng.hpp"

namespace ouk {

namespace {

void check_point(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (!(t > 0.0) || !std::isfinite(t))
    fail(ErrorCode::DomainError, "kernel time must be positive and finite");
  if (x.size() != m.n || u.size() != m.n)
    fail(ErrorCode::DimensionMismatch, "kernel point dimension does not match model");
  if (!x.allFinite() || !u.allFinite())
    fail(ErrorCode::DomainError, "kernel point must be finite");
}

}  // namespace

KernelEvaluator::KernelEvaluator(const OUModel& m) : m_(&m) {
  A_drift_ = m.Q_inf * m.B.transpose() * m.Q_inf_inv;
}

KernelPieces KernelEvaluator::pieces(double t) const {
  const OUModel& m = *m_;
  if (!(t > 0.0) || !std::isfinite(t))
    fail(ErrorCode::DomainError, "kernel time must be positive and finite");
  KernelPieces p;
  p.t = t;
  p.expB = matrix_exp(m.B, t);

  if (t <= m.gramian_taylor_tmax) {
    p.Qt = gramian_Qt_fast(m, t);
  } else if (t > 50.0 / m.hurwitz_margin) {
    p.Qt = m.Q_inf;
  } else {
    p.Qt = m.Q_inf - p.expB * m.Q_inf * p.expB.transpose();
    p.Qt = 0.5 * (p.Qt + p.Qt.transpose()).eval();
  }

  Eigen::LLT<Eigen::MatrixXd> llt(p.Qt);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NonConvergence, "covariance factorization failed at t=" + std::to_string(t));
  p.Qt_inv = llt.solve(Eigen::MatrixXd::Identity(m.n, m.n));
  p.Qt_inv = 0.5 * (p.Qt_inv + p.Qt_inv.transpose()).eval();
  p.log_det_Qt = 0.0;
  for (int i = 0; i < m.n; ++i) p.log_det_Qt += 2.0 * std::log(llt.matrixL()(i, i));

  // Q_t^{-1} - Q_inf^{-1} assembled as Q_t^{-1}(Q_inf - Q_t)Q_inf^{-1}; the gap
  // matrix comes from the exponential product once past the Taylor window, so
  // the difference never cancels catastrophically at large t.
  Eigen::MatrixXd gap;
  if (t <= m.gramian_taylor_tmax)
    gap = m.Q_inf - p.Qt;
  else
    gap = p.expB * m.Q_inf * p.expB.transpose();
  p.W = p.Qt_inv * gap * m.Q_inf_inv;
  p.W = 0.5 * (p.W + p.W.transpose()).eval();

  p.Dt = d_matrix(m, t);
  p.Dmt = m.Q_inf * p.expB.transpose() * m.Q_inf_inv;

  p.QtinvE = p.Qt_inv * p.expB;
  p.QtinvE_T = p.QtinvE.transpose();
  Eigen::MatrixXd EQE = p.expB * m.Q * p.expB.transpose();
  p.trace_term = (p.Qt_inv * EQE).trace();
  p.M_half = m.Q_sqrt * p.QtinvE_T;
  p.QtinvB = p.Qt_inv * m.B;
  p.GE = p.Qt_inv * EQE * p.QtinvE;
  return p;
}

double KernelEvaluator::log_script_K_form(const KernelPieces& p, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& u, KernelForm f) const {
  const double pref = 0.5 * (m_->log_det_Q_inf - p.log_det_Qt);
  if (f == KernelForm::small_t) {
    Eigen::VectorXd w = u - p.Dt * x;
    return pref - 0.5 * w.dot(p.W * w);
  }
  Eigen::VectorXd v = p.Dmt * u - x;
  return pref - 0.5 * (p.QtinvE * v).dot(p.Dt * v);
}

double KernelEvaluator::log_script_K(const KernelPieces& p, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u) const {
  if (p.t <= 1.0) return log_script_K_form(p, x, u, KernelForm::small_t);
  // The large form couples e^{+at}- and e^{-at}-sized factors; the stored
  // matrices only hold their fast-direction entries to a relative accuracy of
  // eps * e^{spread*t}, so past spread*t ~ 13 the quadratic form is regrouped
  // into the equivalent all-moderate arrangement
  //   pref - 1/2 <Q_t^{-1}(u - e^{tB}x), u - e^{tB}x> + R(u) - R(x).
  if (m_->spectral_spread * p.t <= 13.0) return log_script_K_form(p, x, u, KernelForm::large_t);
  Eigen::VectorXd r = u - p.expB * x;
  return 0.5 * (m_->log_det_Q_inf - p.log_det_Qt) - 0.5 * r.dot(p.Qt_inv * r) +
         0.5 * u.dot(m_->Q_inf_inv * u) - 0.5 * x.dot(m_->Q_inf_inv * x);
}

double KernelEvaluator::nt_form_R(const KernelPieces& p, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u) const {
  Eigen::VectorXd w = u - p.Dt * x;
  double val = -0.5 * p.trace_term;
  val += 0.5 * (p.M_half * w).squaredNorm();
  val -= (A_drift_ * (p.Dt * x)).dot(p.W * w);
  return val;
}

NtTerms KernelEvaluator::nt_terms(const KernelPieces& p, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u) const {
  Eigen::VectorXd v = p.Dmt * u - x;
  Eigen::VectorXd ev = p.expB * v;
  Eigen::VectorXd du = p.Dmt * u;
  NtTerms r;
  r.I = -0.5 * p.trace_term;
  r.II = 0.5 * (p.M_half * ev).squaredNorm();
  r.III = -(p.QtinvB * ev).dot(ev);
  r.IV = -(p.QtinvE * (A_drift_ * du)).dot(ev);
  r.V = -(m_->B.transpose() * (m_->Q_inf_inv * du)).dot(v);
  return r;
}

KernelQuadratic KernelEvaluator::log_kernel_in_x(const KernelPieces& p,
                                                 const Eigen::VectorXd& u) const {
  const double pref = 0.5 * (m_->log_det_Q_inf - p.log_det_Qt);
  KernelQuadratic q;
  if (p.t <= 1.0) {
    Eigen::VectorXd Wu = p.W * u;
    q.c = pref - 0.5 * u.dot(Wu);
    q.g = p.Dt.transpose() * Wu;
    q.H = -0.5 * p.Dt.transpose() * p.W * p.Dt;
  } else if (m_->spectral_spread * p.t <= 13.0) {
    Eigen::MatrixXd S =
        0.5 * (p.QtinvE.transpose() * p.Dt + p.Dt.transpose() * p.QtinvE);
    Eigen::VectorXd a = p.Dmt * u;
    Eigen::VectorXd Sa = S * a;
    q.c = pref - 0.5 * a.dot(Sa);
    q.g = Sa;
    q.H = -0.5 * S;
  } else {
    Eigen::VectorXd qu = p.Qt_inv * u;
    q.c = pref - 0.5 * u.dot(qu) + 0.5 * u.dot(m_->Q_inf_inv * u);
    q.g = p.expB.transpose() * qu;
    q.H = -0.5 * (p.expB.transpose() * p.Qt_inv * p.expB + m_->Q_inf_inv);
  }
  q.H = (0.5 * (q.H + q.H.transpose())).eval();
  return q;
}

KernelQuadratic KernelEvaluator::nt_in_x(const KernelPieces& p, const Eigen::VectorXd& u) const {
  KernelQuadratic q;
  Eigen::MatrixXd M2 = p.M_half.transpose() * p.M_half;
  if (p.t <= 1.0) {
    Eigen::VectorXd M2u = M2 * u;
    Eigen::MatrixXd AW = A_drift_.transpose() * p.W;
    Eigen::MatrixXd C = p.Dt.transpose() * AW * p.Dt;
    q.c = -0.5 * p.trace_term + 0.5 * u.dot(M2u);
    q.g = -(p.Dt.transpose() * (M2u + AW * u));
    q.H = 0.5 * p.Dt.transpose() * M2 * p.Dt + 0.5 * (C + C.transpose());
  } else {
    Eigen::VectorXd a = p.Dmt * u;
    Eigen::MatrixXd G2 = p.expB.transpose() * M2 * p.expB;
    Eigen::MatrixXd S3 =
        0.5 * p.expB.transpose() * (p.QtinvB + p.QtinvB.transpose()) * p.expB;
    Eigen::VectorXd b4 = p.expB.transpose() * (p.QtinvE * (A_drift_ * a));
    Eigen::VectorXd b5 = m_->B.transpose() * (m_->Q_inf_inv * a);
    q.c = -0.5 * p.trace_term + 0.5 * a.dot(G2 * a) - a.dot(S3 * a) - b4.dot(a) - b5.dot(a);
    q.g = -(G2 * a) + 2.0 * (S3 * a) + b4 + b5;
    q.H = 0.5 * G2 - S3;
  }
  q.H = (0.5 * (q.H + q.H.transpose())).eval();
  return q;
}

double KernelEvaluator::nt(const KernelPieces& p, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u) const {
  if (p.t <= 1.0) return nt_form_R(p, x, u);
  return nt_terms(p, x, u).sum();
}

void KernelEvaluator::factors(const KernelPieces& p, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u, Eigen::VectorXd* P_vec,
                              Eigen::VectorXd* S_vec, Eigen::VectorXd* R_vec) const {
  if (p.t > 1.0)
    fail(ErrorCode::OutOfRegime, "spatial derivative factors are defined for t <= 1");
  Eigen::VectorXd w = u - p.Dt * x;
  Eigen::VectorXd P = p.QtinvE_T * w;
  if (P_vec) *P_vec = P;
  if (!S_vec && !R_vec) return;
  const double N = nt_form_R(p, x, u);
  if (S_vec) {
    Eigen::VectorXd S = N * P;
    S -= p.GE.transpose() * w;
    S += (p.QtinvB * p.expB).transpose() * w;
    S += p.QtinvE_T * (A_drift_ * (p.Dt * x));
    *S_vec = S;
  }
  if (R_vec) {
    Eigen::VectorXd v = p.Dmt * u - x;
    Eigen::VectorXd ev = p.expB * v;
    Eigen::VectorXd R = -N * (p.QtinvE * v);
    R += p.GE * v;
    R -= p.QtinvB * ev;
    R -= p.QtinvE * (A_drift_ * (p.Dmt * u));
    *R_vec = R;
  }
}

double log_script_K(const OUModel& m, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u) {
  check_point(m, t, x, u);
  KernelEvaluator ev(m);
  return ev.log_script_K(ev.pieces(t), x, u);
}

double script_K(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  double lv = log_script_K(m, t, x, u);
  if (lv > 700.0) fail(ErrorCode::Overflow, "kernel value exceeds double range");
  return std::exp(lv);
}

double log_mehler_K(const OUModel& m, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u) {
  return quadratic_form_R(m, x) + log_script_K(m, t, x, u);
}

double mehler_K(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  double lv = log_mehler_K(m, t, x, u);
  if (lv > 700.0) fail(ErrorCode::Overflow, "kernel value exceeds double range");
  return std::exp(lv);
}

std::pair<double, double> nt_factor(const OUModel& m, double t, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& u) {
  check_point(m, t, x, u);
  KernelEvaluator ev(m);
  KernelPieces p = ev.pieces(t);
  return {ev.nt_form_R(p, x, u), ev.nt_terms(p, x, u).sum()};
}

NtTerms nt_terms(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  check_point(m, t, x, u);
  KernelEvaluator ev(m);
  return ev.nt_terms(ev.pieces(t), x, u);
}

double dkdt(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  check_point(m, t, x, u);
  KernelEvaluator ev(m);
  KernelPieces p = ev.pieces(t);
  double lk = quadratic_form_R(m, x) + ev.log_script_K(p, x, u);
  if (lk > 700.0) fail(ErrorCode::Overflow, "kernel value exceeds double range");
  return std::exp(lk) * ev.nt(p, x, u);
}

double dscript_K_dt(const OUModel& m, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u) {
  check_point(m, t, x, u);
  KernelEvaluator ev(m);
  KernelPieces p = ev.pieces(t);
  return std::exp(ev.log_script_K(p, x, u)) * ev.nt(p, x, u);
}

void spatial_derivative_factors(const OUModel& m, double t, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u, Eigen::VectorXd* P_vec,
                                Eigen::VectorXd* S_vec, Eigen::VectorXd* R_vec) {
  check_point(m, t, x, u);
  if (t > 1.0)
    fail(ErrorCode::OutOfRegime, "spatial derivative factors are defined for t <= 1");
  KernelEvaluator ev(m);
  ev.factors(ev.pieces(t), x, u, P_vec, S_vec, R_vec);
}

KernelEvaluation kernel_eval(const OUModel& m, double t, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u, bool cross_check) {
  check_point(m, t, x, u);
  KernelEvaluator ev(m);
  KernelPieces p = ev.pieces(t);
  KernelEvaluation out;
  out.t = t;
  out.x = x;
  out.u = u;
  out.form = t <= 1.0 ? KernelForm::small_t : KernelForm::large_t;
  out.log_scriptK = ev.log_script_K_form(p, x, u, out.form);
  out.N = out.form == KernelForm::small_t ? ev.nt_form_R(p, x, u) : ev.nt_terms(p, x, u).sum();

  if (cross_check && t >= 0.5 && t <= 2.0) {
    KernelForm other =
        out.form == KernelForm::small_t ? KernelForm::large_t : KernelForm::small_t;
    double alt = ev.log_script_K_form(p, x, u, other);
    if (std::abs(alt - out.log_scriptK) > 1e-9 * std::max(1.0, std::abs(out.log_scriptK)))
      fail(ErrorCode::NonConvergence, "kernel forms disagree in the overlap band");
    double nalt = out.form == KernelForm::small_t ? ev.nt_terms(p, x, u).sum()
                                                  : ev.nt_form_R(p, x, u);
    double ntol = std::abs(out.N) < 1.0 ? 1e-10 : 1e-8 * std::abs(out.N);
    if (std::abs(nalt - out.N) > std::max(ntol, 1e-10))
      fail(ErrorCode::NonConvergence, "time-derivative factor forms disagree");
  }

  out.log_K = quadratic_form_R(m, x) + out.log_scriptK;
  if (out.log_K > 700.0) fail(ErrorCode::Overflow, "kernel value exceeds double range");
  out.K = std::exp(out.log_K);
  out.scriptK = std::exp(out.log_scriptK);
  out.dK_dt = out.K * out.N;
  out.dscriptK_dt = out.scriptK * out.N;
  if (t <= 1.0) ev.factors(p, x, u, &out.P_vec, &out.S_vec, &out.R_vec);
  return out;
}

std::vector<KernelBoundFit> kernel_bound_fit(const OUModel& m, KernelRegime regime,
                                             const KernelSampleSpec& spec) {
  if (spec.t_count < 2 || spec.point_count < 4)
    fail(ErrorCode::DomainError, "bound fit needs at least 2 times and 4 points");
  KernelEvaluator ev(m);
  Rng rng(spec.seed);

  const double t_lo = regime == KernelRegime::small ? 1e-3 : 1.0;
  const double t_hi = regime == KernelRegime::small
                          ? 1.0
                          : std::min(40.0 / m.hurwitz_margin,
                                     650.0 / std::max(1.0, m.b_norm));
  std::vector<double> ts(spec.t_count);
  for (int i = 0; i < spec.t_count; ++i) {
    double a = static_cast<double>(i) / (spec.t_count - 1);
    ts[i] = t_lo * std::pow(t_hi / t_lo, a);
  }

  double exp_lo = 1e300, exp_hi = -1e300;
  double pref_lo = 1e300, pref_hi = -1e300;
  double shape_lo = 1e300, shape_hi = -1e300;
  int n_exp = 0, n_shape = 0;

  for (double t : ts) {
    KernelPieces p = ev.pieces(t);
    double pref = 0.5 * (m.log_det_Q_inf - p.log_det_Qt);
    if (regime == KernelRegime::small) pref += 0.5 * m.n * std::log(t);
    pref = std::exp(pref);
    pref_lo = std::min(pref_lo, pref);
    pref_hi = std::max(pref_hi, pref);

    for (int k = 0; k < spec.point_count; ++k) {
      Eigen::VectorXd x = spec.x_scale * (m.Q_inf_sqrt * rng.normal_vector(m.n));
      Eigen::VectorXd u;
      if (regime == KernelRegime::small) {
        // place u near D_t x at the length scale sqrt(t) where the bound bites
        double delta = std::sqrt(t) * std::exp(std::log(0.03) +
                                               rng.next_double() * std::log(3.0 / 0.03));
        u = p.Dt * x + delta * rng.unit_vector(m.n);
      } else {
        u = spec.x_scale * (m.Q_inf_sqrt * rng.normal_vector(m.n));
      }

      if (regime == KernelRegime::small) {
        Eigen::VectorXd w = u - p.Dt * x;
        double wn2 = w.squaredNorm();
        if (wn2 > 1e-24) {
          double rho = w.dot(p.W * w) * t / (2.0 * wn2);
          exp_lo = std::min(exp_lo, rho);
          exp_hi = std::max(exp_hi, rho);
          ++n_exp;
        }
        double N = ev.nt_form_R(p, x, u);
        double wn = std::sqrt(wn2);
        double denom = 1.0 / t + wn2 / (t * t) + x.norm() * wn / t;
        double rho = std::abs(N) / denom;
        shape_lo = std::min(shape_lo, rho);
        shape_hi = std::max(shape_hi, rho);
        ++n_shape;
      } else {
        Eigen::VectorXd v = p.Dmt * u - x;
        double vq2 = v.dot(m.Q_inf_inv * v);
        if (vq2 > 1e-24) {
          // exponent assembled in the all-moderate arrangement, exact at any t
          Eigen::VectorXd r = u - p.expB * x;
          double e_lg = r.dot(p.Qt_inv * r) - u.dot(m.Q_inf_inv * u) + x.dot(m.Q_inf_inv * x);
          double rho = e_lg / vq2;
          exp_lo = std::min(exp_lo, rho);
          exp_hi = std::max(exp_hi, rho);
          ++n_exp;
        }
        double N = ev.nt_terms(p, x, u).sum();
        double decay = std::exp(-m.hurwitz_margin * t);
        double denom = v.norm() * (p.Dmt * u).norm() + decay * v.squaredNorm() + decay;
        double rho = std::abs(N) / denom;
        shape_lo = std::min(shape_lo, rho);
        shape_hi = std::max(shape_hi, rho);
        ++n_shape;
      }
    }
  }

  const std::string tag = regime == KernelRegime::small ? "small" : "large";
  std::vector<KernelBoundFit> out;
  out.push_back({tag + "_exponent", exp_lo, exp_hi,
                 exp_lo > 0 ? exp_hi / exp_lo : std::numeric_limits<double>::infinity(),
                 n_exp});
  out.push_back({tag + "_det_prefactor", pref_lo, pref_hi,
                 pref_lo > 0 ? pref_hi / pref_lo : std::numeric_limits<double>::infinity(),
                 spec.t_count});
  out.push_back({tag + "_N_shape", shape_lo, shape_hi, shape_hi, n_shape});
  return out;
}

}  // namespace ouk
