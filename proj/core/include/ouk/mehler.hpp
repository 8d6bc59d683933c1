#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "ouk/model.hpp"

namespace ouk {

enum class KernelForm { small_t, large_t };
enum class KernelRegime { small, large };

// The five-term decomposition of N_t (the t >= 1 workhorse form).
struct NtTerms {
  double I = 0, II = 0, III = 0, IV = 0, V = 0;
  double sum() const { return I + II + III + IV + V; }
};

// A quadratic polynomial of x: value = c + g.x + x^T H x, H symmetric.
struct KernelQuadratic {
  double c = 0;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double eval(const Eigen::VectorXd& x) const { return c + g.dot(x) + x.dot(H * x); }
};

struct KernelEvaluation {
  double t = 0;
  Eigen::VectorXd x, u;
  double K = 0;         // e^{R(x)} scale; throws Overflow instead of returning inf
  double log_K = 0;
  double scriptK = 0;   // e^{-R(x)} K, stable up to |x|_Q^2 ~ 1400
  double log_scriptK = 0;
  double N = 0;
  double dK_dt = 0;        // K * N
  double dscriptK_dt = 0;  // scriptK * N
  KernelForm form = KernelForm::small_t;
  Eigen::VectorXd P_vec, S_vec, R_vec;  // spatial factors, filled for t <= 1
};

// Everything t-dependent needed by kernel formulas, assembled once per t and
// reused across many (x,u).  All members are cancellation-free at any t in
// the representable range.
struct KernelPieces {
  double t = 0;
  Eigen::MatrixXd expB;       // e^{tB}
  Eigen::MatrixXd Qt;
  Eigen::MatrixXd Qt_inv;
  double log_det_Qt = 0;
  Eigen::MatrixXd W;          // Q_t^{-1} - Q_inf^{-1}, via Q_t^{-1}(Q_inf - Q_t)Q_inf^{-1}
  Eigen::MatrixXd Dt;         // D_t
  Eigen::MatrixXd Dmt;        // D_{-t}
  double trace_term = 0;      // tr(Q_t^{-1} e^{tB} Q e^{tB^T})
  Eigen::MatrixXd M_half;     // Q^{1/2} e^{tB^T} Q_t^{-1}
  Eigen::MatrixXd QtinvE;     // Q_t^{-1} e^{tB}
  Eigen::MatrixXd QtinvE_T;   // e^{tB^T} Q_t^{-1}
  Eigen::MatrixXd QtinvB;     // Q_t^{-1} B
  Eigen::MatrixXd GE;         // Q_t^{-1} e^{tB} Q e^{tB^T} Q_t^{-1} e^{tB}
};

class KernelEvaluator {
 public:
  explicit KernelEvaluator(const OUModel& m);
  const OUModel& model() const { return *m_; }

  KernelPieces pieces(double t) const;

  // log scriptK with the regime-appropriate form (small for t <= 1).
  double log_script_K(const KernelPieces& p, const Eigen::VectorXd& x,
                      const Eigen::VectorXd& u) const;
  double log_script_K_form(const KernelPieces& p, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u, KernelForm f) const;

  double nt(const KernelPieces& p, const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  double nt_form_R(const KernelPieces& p, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& u) const;
  NtTerms nt_terms(const KernelPieces& p, const Eigen::VectorXd& x,
                   const Eigen::VectorXd& u) const;

  // Spatial derivative factors (valid in the t <= 1 regime):
  //   d/dx_l scriptK       = scriptK * P_l
  //   d/dx_l d/dt scriptK  = scriptK * S_l
  //   d/du_l d/dt scriptK  = scriptK * R_l
  void factors(const KernelPieces& p, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
               Eigen::VectorXd* P_vec, Eigen::VectorXd* S_vec, Eigen::VectorXd* R_vec) const;

  // Both log scriptK and the time-derivative factor are quadratic polynomials
  // in x once u is pinned; contracting against a fixed u turns a whole scan
  // over x into (c, g, H) evaluations with no matrix work per point.
  // Uses the same regime branches as log_script_K / nt at the node's t.
  KernelQuadratic log_kernel_in_x(const KernelPieces& p, const Eigen::VectorXd& u) const;
  KernelQuadratic nt_in_x(const KernelPieces& p, const Eigen::VectorXd& u) const;

  const Eigen::MatrixXd& drift_conj() const { return A_drift_; }  // Q_inf B^T Q_inf^{-1}

 private:
  const OUModel* m_;
  Eigen::MatrixXd A_drift_;
};

// Convenience one-shot entry points (each builds pieces internally).
double log_mehler_K(const OUModel& m, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u);
double mehler_K(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u);
double log_script_K(const OUModel& m, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u);
double script_K(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u);
// Both independent N_t evaluations: {form (R) built from u - D_t x,
// five-term form built from D_{-t}u - x}.
std::pair<double, double> nt_factor(const OUModel& m, double t, const Eigen::VectorXd& x,
                                    const Eigen::VectorXd& u);
NtTerms nt_terms(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u);
double dkdt(const OUModel& m, double t, const Eigen::VectorXd& x, const Eigen::VectorXd& u);
double dscript_K_dt(const OUModel& m, double t, const Eigen::VectorXd& x,
                    const Eigen::VectorXd& u);
// Errors: OutOfRegime for t > 1.
void spatial_derivative_factors(const OUModel& m, double t, const Eigen::VectorXd& x,
                                const Eigen::VectorXd& u, Eigen::VectorXd* P_vec,
                                Eigen::VectorXd* S_vec, Eigen::VectorXd* R_vec);
// Full record; cross_check additionally evaluates the opposite form in the
// overlap band t in [0.5, 2] and asserts agreement.
KernelEvaluation kernel_eval(const OUModel& m, double t, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u, bool cross_check = false);

struct KernelBoundFit {
  std::string bound_id;
  double c = 0;
  double C = 0;
  double worst_ratio = 0;
  int samples = 0;
};
struct KernelSampleSpec {
  int t_count = 24;
  int point_count = 48;
  double x_scale = 1.5;
  std::uint64_t seed = 20240917;
};
std::vector<KernelBoundFit> kernel_bound_fit(const OUModel& m, KernelRegime regime,
                                             const KernelSampleSpec& spec = {});

}  // namespace ouk
