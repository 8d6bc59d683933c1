#include "ouk/oracle.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "ouk/errors.hpp"

namespace ouk {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;

struct TransitionGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd chol;  // lower factor of Q_t
  double log_norm;       // -n/2 log(2pi) - 1/2 log det Q_t
};

TransitionGaussian transition_gaussian(const OUModel& m, double t, const Eigen::VectorXd& x) {
  if (!(t > 0.0) || !std::isfinite(t)) fail(ErrorCode::DomainError, "transition requires t > 0");
  if (x.size() != m.n) fail(ErrorCode::DimensionMismatch, "transition start dimension mismatch");
  TransitionGaussian g;
  g.mean = matrix_exp(m.B, t) * x;
  Eigen::MatrixXd Qt = gramian_Qt_fast(m, t);
  Eigen::LLT<Eigen::MatrixXd> llt(Qt);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NonConvergence, "transition covariance factorization failed");
  g.chol = llt.matrixL();
  double log_det = 0;
  for (int i = 0; i < m.n; ++i) log_det += 2.0 * std::log(g.chol(i, i));
  g.log_norm = -0.5 * m.n * kLogTwoPi - 0.5 * log_det;
  return g;
}
}  // namespace

double transition_log_density(const OUModel& m, double t, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) {
  if (u.size() != m.n) fail(ErrorCode::DimensionMismatch, "transition target dimension mismatch");
  TransitionGaussian g = transition_gaussian(m, t, x);
  Eigen::VectorXd z = g.chol.triangularView<Eigen::Lower>().solve(u - g.mean);
  return g.log_norm - 0.5 * z.squaredNorm();
}

double transition_density(const OUModel& m, double t, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& u) {
  return std::exp(transition_log_density(m, t, x, u));
}

Eigen::VectorXd transition_sample(const OUModel& m, double t, const Eigen::VectorXd& x, Rng& rng) {
  TransitionGaussian g = transition_gaussian(m, t, x);
  return g.mean + g.chol * rng.normal_vector(m.n);
}

Eigen::VectorXd sample_path(const OUModel& m, const Eigen::VectorXd& x0, double t, int n_steps,
                            std::uint64_t seed, Eigen::MatrixXd* path) {
  if (x0.size() != m.n) fail(ErrorCode::DimensionMismatch, "path start dimension mismatch");
  if (n_steps < 10) fail(ErrorCode::DomainError, "path simulation needs at least 10 steps");
  if (!(t > 0.0)) fail(ErrorCode::DomainError, "path simulation requires t > 0");
  Rng rng(seed);
  const double dt = t / n_steps;
  const double sdt = std::sqrt(dt);
  Eigen::VectorXd X = x0;
  if (path) {
    path->resize(m.n, n_steps + 1);
    path->col(0) = X;
  }
  for (int k = 0; k < n_steps; ++k) {
    X += dt * (m.B * X) + sdt * (m.Q_sqrt * rng.normal_vector(m.n));
    if (path) path->col(k + 1) = X;
  }
  return X;
}

McEstimate mc_semigroup_apply(const OUModel& m,
                              const std::function<double(const Eigen::VectorXd&)>& f,
                              const Eigen::VectorXd& x, double t, long n_paths,
                              std::uint64_t seed) {
  if (n_paths < 2) fail(ErrorCode::DomainError, "monte carlo needs at least 2 paths");
  TransitionGaussian g = transition_gaussian(m, t, x);
  Rng rng(seed);
  double sum = 0, sum2 = 0;
  Eigen::VectorXd u(m.n);
  for (long i = 0; i < n_paths; ++i) {
    u = g.mean + g.chol * rng.normal_vector(m.n);
    double v = f(u);
    sum += v;
    sum2 += v * v;
  }
  McEstimate est;
  est.n_paths = n_paths;
  est.value = sum / n_paths;
  double var = std::max(0.0, sum2 / n_paths - est.value * est.value);
  est.std_error = std::sqrt(var / n_paths);
  return est;
}

double hermite_value(int k, double x) {
  if (k < 0) fail(ErrorCode::DomainError, "hermite order must be nonnegative");
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int j = 1; j < k; ++j) {
    double next = x * cur - j * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

double HermiteFunction::operator()(const Eigen::VectorXd& x) const {
  if (x.size() != static_cast<Eigen::Index>(k.size()))
    fail(ErrorCode::DimensionMismatch, "hermite argument dimension mismatch");
  double v = 1.0;
  for (std::size_t i = 0; i < k.size(); ++i) v *= hermite_value(k[i], x(i));
  return v;
}

double HermiteFunction::normalized(const Eigen::VectorXd& x) const {
  return (*this)(x) / std::sqrt(norm_sq);
}

HermiteFunction hermite_eigenfunction(const std::vector<int>& k) {
  if (k.empty()) fail(ErrorCode::DomainError, "hermite multi-index must be nonempty");
  HermiteFunction h;
  h.k = k;
  for (int ki : k) {
    if (ki < 0) fail(ErrorCode::DomainError, "hermite multi-index must be nonnegative");
    h.eigenvalue += ki;
    for (int j = 2; j <= ki; ++j) h.norm_sq *= j;
  }
  if (h.eigenvalue > 10) fail(ErrorCode::DomainError, "hermite total degree is limited to 10");
  return h;
}

}  // namespace ouk
