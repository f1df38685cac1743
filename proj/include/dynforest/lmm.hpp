#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "dynforest/dataset.hpp"
#include "dynforest/spline.hpp"

namespace dynforest {

// Maximum-likelihood fit of one marker's linear mixed model on one sample:
//   Y_ij = X_i(t_ij)' beta + Z_i(t_ij)' b_i + eps_ij,
//   b_i ~ N(0, re_cov), eps_ij ~ N(0, resid_var).
struct MixedModelFit {
  Eigen::VectorXd beta;     // fixed effects, length p
  Eigen::MatrixXd re_cov;   // random-effect covariance, q x q, PSD
  double resid_var = 1.0;   // > 0
  double loglik = 0.0;      // marginal log-likelihood at the estimates
  bool converged = false;
  int n_subjects = 0;       // subjects with at least one observation
  int n_obs = 0;
  int n_iterations = 0;
};

struct LmmOptions {
  int min_subjects = 10;      // subjects with >= 1 observation required to fit
  int max_iterations = 200;
  double tol_loglik = 1e-6;   // relative log-likelihood change
  double tol_param = 1e-5;    // parameter change
};

class InsufficientDataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class RankDeficientError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Design matrices and responses of the subjects carrying observations.
struct LmmData {
  std::vector<Eigen::MatrixXd> x;  // fixed design per subject
  std::vector<Eigen::MatrixXd> z;  // random design per subject
  std::vector<Eigen::VectorXd> y;
  int n_obs = 0;

  static LmmData assemble(const LongitudinalDataset& ds, const std::vector<int>& rows, int marker,
                          const LmmSpec& spec);
};

// Marginal log-likelihood at explicit parameter values.
double lmm_loglik(const LmmData& data, const Eigen::VectorXd& beta, const Eigen::MatrixXd& re_cov,
                  double resid_var);

// Maximum-likelihood estimation. beta is profiled out in closed form by
// generalized least squares; the variance parameters are optimized by
// Nelder-Mead over an unconstrained parameterization (Cholesky factor of
// re_cov, log residual standard deviation). When init is given the search
// starts there, so a warm start can never return a lower log-likelihood
// than its initializer. Reaching the iteration cap returns the best point
// found with converged = false.
MixedModelFit fit_lmm(const LongitudinalDataset& ds, const std::vector<int>& rows, int marker,
                      const LmmSpec& spec, const LmmOptions& options = {},
                      const MixedModelFit* init = nullptr);

// Predicted random effects for one subject given a fit:
//   b_i = B Z_i' V_i^{-1} (y_i - X_i beta),  V_i = Z_i B Z_i' + sigma^2 I.
// The zero vector (prior mean) for an empty series.
Eigen::VectorXd blup(const MixedModelFit& fit, const MarkerSeries& series, const LmmSpec& spec);

}  // namespace dynforest
