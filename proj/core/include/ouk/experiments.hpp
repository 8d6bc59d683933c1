#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ouk/localization.hpp"
#include "ouk/model.hpp"
#include "ouk/multiplier.hpp"

namespace ouk {

enum class SupRegime { small_t, large_t, all_t };

// sup_t K_t(x,u) by golden-section search on log t from 16 multistart cells.
// small_t covers (0,1] and multiplies the sup by (1 - eta(x,u)) when a
// partition is supplied; large_t covers [1, t_max] plus the t -> inf limit
// K_inf = 1; all_t is the max of both.  Returns the unscaled value.
// Errors: DiagonalPoint (small_t and all_t need x != u), Overflow.
double maximal_kernel_sup(const OUModel& m, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          SupRegime regime, const PartitionOfUnity* pou = nullptr);

// Operators whose point-mass kernels the level-set scan measures.
//   M_full  : M0 + M1 multiplier kernel
//   M1      : long-time part alone
//   M0_glob : short-time part times (1 - eta)
//   S0_glob : sup_{t<=1} K_t times (1 - eta)
//   S_inf   : sup_{t>=1} K_t
//   S_all   : sup over all t
enum class OperatorKind { M_full, M1, M0_glob, S0_glob, S_inf, S_all };
OperatorKind operator_kind_parse(const std::string& name);  // DomainError on unknown
std::string operator_kind_name(OperatorKind op);

struct ExperimentConfig {
  // Oscillating profile by default: with phi == const the multiplier kernel
  // collapses to -exp(-R(x)) pointwise and every threshold scan is empty.
  Symbol symbol = Symbol::parse("imagpow:0.5");
  std::vector<double> alpha_grid{10.0, 100.0, 1000.0, 10000.0};
  int mc_budget = 200000;
  std::uint64_t seed = 20240901;
  Eigen::VectorXd u0;          // empty: placed on the level set R = log(alpha_max)/2
  double domain_radius = 0.0;  // <= 0: default_domain_radius(alpha_max)
};

struct WeakTypeRow {
  double alpha = 0.0;
  double measure = 0.0;  // gamma_inf{ x : |kernel(x, u0)| > alpha }, MC estimate
  double std_error = 0.0;
  double alpha_measure = 0.0;
  double alpha_sqrtlog_measure = 0.0;
  std::int64_t exceedances = 0;
};

struct ExperimentReport {
  std::string op;
  std::string config_hash;
  std::uint64_t seed = 0;
  int mc_budget = 0;
  Eigen::VectorXd u0;
  std::vector<WeakTypeRow> rows;
  double runtime_seconds = 0.0;  // informational; never serialized
};

// Estimates gamma_inf{ |kernel(x, u0)| > alpha } over the alpha grid by one
// Monte Carlo pass: x ~ gamma_inf, kernel values from fixed composite-Gauss
// caches in log t (thresholds compared in log space, so no overflow at large
// R(x)).  The adaptive-quadrature routes in multiplier/localization are the
// reference implementations the caches are tested against.
// Errors: DomainError (alpha grid not increasing or min <= 2, budget < 1e4),
// BudgetTooSmall (fewer than 50 exceedances at the smallest alpha).
ExperimentReport weak_type_scan(const OUModel& m, const ExperimentConfig& cfg, OperatorKind op);

// gamma_inf{ x : value(x) > alpha } for n <= 2 by quadrature in group-flow
// polar coordinates: surface nodes on E_1 times a composite Gauss rule along
// each flow line, integrand = indicator * gamma density * volume element,
// with level crossings bisection-refined inside any panel whose endpoints
// disagree.  Deterministic cross-check for the Monte Carlo column; cost per
// value() call keeps it off the default path.
// Errors: DomainError (n > 2, alpha <= 2, degenerate node counts).
double level_set_measure_polar(const OUModel& m,
                               const std::function<double(const Eigen::VectorXd&)>& value,
                               double alpha, int surface_nodes = 64, int s_panels = 400);

// Deterministic %.17g serializations shared by the CLI and the tests:
// identical config + seed => byte-identical bytes.
std::string canonical_config_json(const OUModel& m, const ExperimentConfig& cfg,
                                  const std::string& op);
std::string experiment_config_hash(const OUModel& m, const ExperimentConfig& cfg,
                                   const std::string& op);  // SHA-256 of the above
std::string report_csv(const ExperimentReport& rep);

struct VerifyCheck {
  std::string check_id;  // e.g. "kernel.forms_agree"
  std::string module;
  double value = 0.0;
  double tol = 0.0;
  bool pass = false;
};

struct VerifyProfile {
  double tol_scale = 1.0;  // multiplies every default tolerance
  int zero_pairs = 1000;
  int cz_pairs = 150;
  int mc_budget = 30000;
  std::uint64_t seed = 20240901;
};

struct VerifyLedger {
  std::vector<VerifyCheck> checks;
  bool all_pass = true;
};

// Runs the cross-module invariant battery on each model: matrix identities,
// kernel form agreement, finite-difference checks, multiplier eigen-actions,
// partition lemmas, a CZ mini-scan, a zero sweep, and a small level-set scan.
// Failures are data, not errors.
VerifyLedger verify_suite(const std::vector<OUModel>& models, const VerifyProfile& profile = {});
std::string ledger_json(const VerifyLedger& ledger);

}  // namespace ouk
