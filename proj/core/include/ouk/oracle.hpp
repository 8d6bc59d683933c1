#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <vector>

#include "ouk/model.hpp"
#include "ouk/rng.hpp"

namespace ouk {

// Lebesgue density at u of the process at time t started from x,
// i.e. the Gaussian N(e^{tB}x, Q_t).  Everything here is independent of the
// kernel module on purpose: the identity
//   transition_density = mehler_K * gamma_density
// is the main cross-check between the two code paths.
double transition_log_density(const OUModel& m, double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u);
double transition_density(const OUModel& m, double t, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u);

// Draw u ~ N(e^{tB}x, Q_t) exactly.
Eigen::VectorXd transition_sample(const OUModel& m, double t, const Eigen::VectorXd& x, Rng& rng);

// Euler-Maruyama for dX = BX dt + Q^{1/2} dW.  If path is non-null it receives
// the full trajectory, one column per step including the endpoints.
Eigen::VectorXd sample_path(const OUModel& m, const Eigen::VectorXd& x0, double t, int n_steps,
                            std::uint64_t seed, Eigen::MatrixXd* path = nullptr);

struct McEstimate {
  double value = 0;
  double std_error = 0;
  long n_paths = 0;
};

// Monte-Carlo application of the semigroup: average f over exact transition
// samples.  This is the probabilistic oracle for integrals of K_t against f.
McEstimate mc_semigroup_apply(const OUModel& m, const std::function<double(const Eigen::VectorXd&)>& f,
                              const Eigen::VectorXd& x, double t, long n_paths, std::uint64_t seed);

// Probabilists' Hermite polynomial He_k by the three-term recurrence.
double hermite_value(int k, double x);

// Product eigenfunction He_k = prod_i He_{k_i}(x_i) for the standard model
// (B = -I, Q = 2I, stationary measure = standard Gaussian).
struct HermiteFunction {
  std::vector<int> k;
  long eigenvalue = 0;   // sum k_i
  double norm_sq = 1;    // prod k_i!
  double operator()(const Eigen::VectorXd& x) const;
  double normalized(const Eigen::VectorXd& x) const;  // value / sqrt(norm_sq)
};
HermiteFunction hermite_eigenfunction(const std::vector<int>& k);

}  // namespace ouk
