#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "ouk/model.hpp"
#include "ouk/multiplier.hpp"

namespace ouk {

// Maximal packing of balls B(x_j, 1/(1+|x_j|)) inside a bounded box.
// x_0 = 0 always; the family is pairwise disjoint and the tripled balls
// cover everything up to distance domain_radius - 1 from the origin.
struct BallCover {
  int n = 0;
  double domain_radius = 0;
  std::vector<Eigen::VectorXd> centers;
  std::vector<double> radii;  // radii[j] = 1/(1+|x_j|)

  // Cell -> centers whose 6B_j meets that cell; cell size 1.
  std::unordered_map<std::int64_t, std::vector<int>> cell_index;

  static double radius_at(const Eigen::VectorXd& x) { return 1.0 / (1.0 + x.norm()); }
  std::int64_t cell_key(const Eigen::VectorXd& x) const;
  // Centers j with x possibly inside 6B_j (superset, via the cell index).
  const std::vector<int>& neighbors(const Eigen::VectorXd& x) const;
};

// Errors: CoverageFailure if, after a densified retry, some probe point
// within domain_radius - 1 is not inside any 3B_j.
BallCover build_cover(const OUModel& m, double domain_radius, std::uint64_t seed);

// domain_radius for level-set experiments up to a given alpha.
inline double default_domain_radius(double alpha_max) {
  return 2.0 + std::sqrt(4.0 * std::log(alpha_max));
}

// Smooth cutoffs subordinate to the cover: r_j is a normalized quintic bump
// (== 1 on 3B_j before normalizing, supp in 4B_j, sum_j r_j = 1 on the
// domain); r_tilde_j == 1 on 5B_j with supp in 6B_j.  eta(x,u) =
// sum_j r_tilde_j(x) r_j(u) is 1 near the diagonal and 0 for far pairs.
class PartitionOfUnity {
 public:
  explicit PartitionOfUnity(BallCover cover);

  const BallCover& cover() const { return cover_; }

  // Normalized cutoff r_j and its gradient (zero outside 4B_j).
  double r(int j, const Eigen::VectorXd& x) const;
  // Wide cutoff r_tilde_j (zero outside 6B_j).
  double r_tilde(int j, const Eigen::VectorXd& x) const;

  double sum_r(const Eigen::VectorXd& x) const;  // == 1 on the domain

  // eta and its two gradients; locally finite sums via the cell index.
  // Errors: OutOfDomain if |x| or |u| exceeds domain_radius - 1.
  double eta(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  void eta_with_grad(const Eigen::VectorXd& x, const Eigen::VectorXd& u, double* eta_out,
                     Eigen::VectorXd* grad_x, Eigen::VectorXd* grad_u) const;

 private:
  BallCover cover_;

  double bump(int j, const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;
  double tilde(int j, const Eigen::VectorXd& x, Eigen::VectorXd* grad) const;
  void check_domain(const Eigen::VectorXd& x) const;
};

// Scaled M_0 value together with its spatial gradients, all in the
// e^{-R(x)}-conjugated (script-K) convention, integrated in one quadrature
// pass via the kernel's derivative factors.
struct KernelM0Gradients {
  std::complex<double> value;
  Eigen::VectorXcd grad_x, grad_u;
  double err_bound = 0;
};
KernelM0Gradients kernel_M0_with_grad(const OUModel& m, const Symbol& sym,
                                      const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                      const MultiplierKernelConfig& cfg = {});

// Local/global split of the short-time kernel piece at one pair:
// M0_loc = M_0 eta, M0_glob = M_0 (1 - eta), and the Lebesgue-conjugated
// local kernel Q = e^{-R(x)} M0_loc (== scaled M_0 times eta directly).
struct LocalGlobalSplit {
  KernelValue M0_loc, M0_glob;
  std::complex<double> Q_cz{0.0};
  double eta = 0;
};
LocalGlobalSplit kernel_local_global(const OUModel& m, const Symbol& sym, const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& u, const PartitionOfUnity& pou,
                                     const MultiplierKernelConfig& cfg = {});

// Calderon-Zygmund bound scan over random local pairs (eta > 0): records
// |Q| d^n and |grad Q| d^{n+1} with d = |u-x|, gradients by the factor
// route (grad of M_0 under the integral plus grad eta terms).
struct CzSampleSpec {
  int n_pairs = 10000;
  std::uint64_t seed = 20241105;
  double min_dist_factor = 1e-3;  // smallest |u-x| as a fraction of 1/(1+|x|)
};
struct CzPairRecord {
  double dist = 0;
  double absQ_scaled = 0;    // |Q| |u-x|^n
  double gradx_scaled = 0;   // |grad_x Q| |u-x|^{n+1}
  double gradu_scaled = 0;   // |grad_u Q| |u-x|^{n+1}
};
struct CzScanReport {
  double sup_absQ = 0;
  double sup_gradx = 0;
  double sup_gradu = 0;
  int n_pairs = 0;
  std::vector<CzPairRecord> rows;  // one per sampled pair, for the CSV report
};
CzScanReport cz_bound_scan(const OUModel& m, const Symbol& sym, const PartitionOfUnity& pou,
                           const CzSampleSpec& spec = {},
                           const MultiplierKernelConfig& cfg = {});

}  // namespace ouk
