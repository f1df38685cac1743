#include "dynforest/lmm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <cmath>
#include <limits>
#include <numbers>

namespace dynforest {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)

// Unconstrained parameter vector: row-wise lower triangle of the Cholesky
// factor of re_cov, then log of the residual standard deviation.
struct VarianceParams {
  Eigen::MatrixXd chol;  // q x q lower triangular
  double log_sigma = 0.0;

  static int dim(int q) { return q * (q + 1) / 2 + 1; }

  Eigen::VectorXd pack() const {
    const int q = static_cast<int>(chol.rows());
    Eigen::VectorXd theta(dim(q));
    int k = 0;
    for (int r = 0; r < q; ++r)
      for (int c = 0; c <= r; ++c) theta[k++] = chol(r, c);
    theta[k] = log_sigma;
    return theta;
  }

  static VarianceParams unpack(const Eigen::VectorXd& theta, int q) {
    VarianceParams p;
    p.chol = Eigen::MatrixXd::Zero(q, q);
    int k = 0;
    for (int r = 0; r < q; ++r)
      for (int c = 0; c <= r; ++c) p.chol(r, c) = theta[k++];
    p.log_sigma = theta[k];
    return p;
  }

  Eigen::MatrixXd re_cov() const { return chol * chol.transpose(); }
  double resid_var() const { return std::exp(2.0 * log_sigma); }
};

// Lower-triangular factor of a PSD matrix; tolerates zero eigenvalues by
// adding the smallest ridge that makes the plain Cholesky succeed.
Eigen::MatrixXd psd_cholesky(const Eigen::MatrixXd& mat) {
  Eigen::MatrixXd m = 0.5 * (mat + mat.transpose());
  double ridge = 0.0;
  const double scale = std::max(m.diagonal().maxCoeff(), 1e-12);
  for (int attempt = 0; attempt < 12; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(m + ridge * Eigen::MatrixXd::Identity(m.rows(), m.cols()));
    if (llt.info() == Eigen::Success) return llt.matrixL();
    ridge = ridge == 0.0 ? 1e-12 * scale : ridge * 10.0;
  }
  // Last resort: eigenvalue clipping.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(1e-12 * scale);
  Eigen::LLT<Eigen::MatrixXd> llt(es.eigenvectors() * ev.asDiagonal() *
                                  es.eigenvectors().transpose());
  return llt.matrixL();
}

// Profile log-likelihood: beta solved by generalized least squares given the
// variance parameters. Returns -inf on numerical failure so the optimizer
// backs away.
double profile_loglik(const LmmData& data, const VarianceParams& params,
                      Eigen::VectorXd* beta_out = nullptr) {
  const int p = static_cast<int>(data.x.front().cols());
  const Eigen::MatrixXd re_cov = params.re_cov();
  const double resid_var = params.resid_var();
  if (!std::isfinite(resid_var) || resid_var <= 0.0)
    return -std::numeric_limits<double>::infinity();

  std::vector<Eigen::LLT<Eigen::MatrixXd>> factors;
  factors.reserve(data.x.size());
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  double logdet = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const auto& z = data.z[i];
    Eigen::MatrixXd v = z * re_cov * z.transpose();
    v.diagonal().array() += resid_var;
    factors.emplace_back(v);
    if (factors.back().info() != Eigen::Success)
      return -std::numeric_limits<double>::infinity();
    logdet += 2.0 * factors.back().matrixLLT().diagonal().array().log().sum();
    const Eigen::MatrixXd vinv_x = factors.back().solve(data.x[i]);
    normal.noalias() += data.x[i].transpose() * vinv_x;
    rhs.noalias() += vinv_x.transpose() * data.y[i];
  }
  const Eigen::LDLT<Eigen::MatrixXd> normal_ldlt(normal);
  if (normal_ldlt.info() != Eigen::Success)
    return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd beta = normal_ldlt.solve(rhs);

  double quad = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    const Eigen::VectorXd resid = data.y[i] - data.x[i] * beta;
    quad += resid.dot(factors[i].solve(resid));
  }
  const double loglik = -0.5 * (data.n_obs * kLog2Pi + logdet + quad);
  if (!std::isfinite(loglik)) return -std::numeric_limits<double>::infinity();
  if (beta_out) *beta_out = beta;
  return loglik;
}

struct NelderMeadResult {
  Eigen::VectorXd best;
  double best_value = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
};

// Minimizes f. The starting point is a simplex vertex, so the best value
// found never exceeds f(start).
template <typename F>
NelderMeadResult nelder_mead(F&& f, const Eigen::VectorXd& start, const LmmOptions& options) {
  const int dim = static_cast<int>(start.size());
  std::vector<Eigen::VectorXd> simplex;
  std::vector<double> value;
  simplex.push_back(start);
  value.push_back(f(start));
  for (int j = 0; j < dim; ++j) {
    Eigen::VectorXd v = start;
    v[j] += 0.25 * std::max(std::abs(start[j]), 0.4);
    simplex.push_back(v);
    value.push_back(f(v));
  }

  const auto order = [&]() {
    for (std::size_t a = 0; a < simplex.size(); ++a)
      for (std::size_t b = a + 1; b < simplex.size(); ++b)
        if (value[b] < value[a]) {
          std::swap(value[a], value[b]);
          std::swap(simplex[a], simplex[b]);
        }
  };
  order();

  NelderMeadResult result;
  for (result.iterations = 0; result.iterations < options.max_iterations; ++result.iterations) {
    const double spread = value.back() - value.front();
    double param_spread = 0.0;
    for (const auto& v : simplex)
      param_spread = std::max(param_spread, (v - simplex.front()).cwiseAbs().maxCoeff());
    if (spread < options.tol_loglik * (std::abs(value.front()) + 1e-3) ||
        param_spread < options.tol_param) {
      result.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (int v = 0; v < dim; ++v) centroid += simplex[v];
    centroid /= dim;

    const Eigen::VectorXd reflected = centroid + (centroid - simplex.back());
    const double f_reflected = f(reflected);
    if (f_reflected < value.front()) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex.back());
      const double f_expanded = f(expanded);
      if (f_expanded < f_reflected) {
        simplex.back() = expanded;
        value.back() = f_expanded;
      } else {
        simplex.back() = reflected;
        value.back() = f_reflected;
      }
    } else if (f_reflected < value[dim - 1]) {
      simplex.back() = reflected;
      value.back() = f_reflected;
    } else {
      const bool outside = f_reflected < value.back();
      const Eigen::VectorXd contracted =
          centroid + 0.5 * ((outside ? reflected : simplex.back()) - centroid);
      const double f_contracted = f(contracted);
      if (f_contracted < std::min(f_reflected, value.back())) {
        simplex.back() = contracted;
        value.back() = f_contracted;
      } else {
        for (std::size_t v = 1; v < simplex.size(); ++v) {
          simplex[v] = simplex.front() + 0.5 * (simplex[v] - simplex.front());
          value[v] = f(simplex[v]);
        }
      }
    }
    order();
  }
  result.best = simplex.front();
  result.best_value = value.front();
  return result;
}

}  // namespace

LmmData LmmData::assemble(const LongitudinalDataset& ds, const std::vector<int>& rows, int marker,
                          const LmmSpec& spec) {
  LmmData data;
  for (const int i : rows) {
    const auto& series = ds.marker(i, marker);
    if (series.empty()) continue;
    data.x.push_back(spec.design_fixed(series.times));
    data.z.push_back(spec.design_random(series.times));
    data.y.push_back(series.values);
    data.n_obs += static_cast<int>(series.size());
  }
  return data;
}

double lmm_loglik(const LmmData& data, const Eigen::VectorXd& beta, const Eigen::MatrixXd& re_cov,
                  double resid_var) {
  double loglik = 0.0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    Eigen::MatrixXd v = data.z[i] * re_cov * data.z[i].transpose();
    v.diagonal().array() += resid_var;
    const Eigen::LLT<Eigen::MatrixXd> llt(v);
    const Eigen::VectorXd resid = data.y[i] - data.x[i] * beta;
    loglik += -0.5 * (resid.size() * kLog2Pi +
                      2.0 * llt.matrixLLT().diagonal().array().log().sum() +
                      resid.dot(llt.solve(resid)));
  }
  return loglik;
}

MixedModelFit fit_lmm(const LongitudinalDataset& ds, const std::vector<int>& rows, int marker,
                      const LmmSpec& spec, const LmmOptions& options, const MixedModelFit* init) {
  spec.validate();
  const int p = spec.n_fixed();
  const int q = spec.n_random();
  const LmmData data = LmmData::assemble(ds, rows, marker, spec);
  const int n_subjects = static_cast<int>(data.x.size());
  if (n_subjects < options.min_subjects)
    throw InsufficientDataError("fit_lmm: marker '" + ds.schema.markers[marker] + "': only " +
                                std::to_string(n_subjects) + " subjects with observations (need " +
                                std::to_string(options.min_subjects) + ")");

  // Stacked fixed design; rank deficiency means the node cannot identify beta.
  Eigen::MatrixXd stacked(data.n_obs, p);
  Eigen::VectorXd stacked_y(data.n_obs);
  int row = 0;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    stacked.middleRows(row, data.x[i].rows()) = data.x[i];
    stacked_y.segment(row, data.y[i].size()) = data.y[i];
    row += static_cast<int>(data.x[i].rows());
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(stacked);
  if (qr.rank() < p)
    throw RankDeficientError("fit_lmm: marker '" + ds.schema.markers[marker] +
                             "': fixed design is rank deficient at this node");

  VarianceParams start;
  if (init) {
    start.chol = psd_cholesky(init->re_cov);
    start.log_sigma = 0.5 * std::log(std::max(init->resid_var, 1e-12));
  } else {
    // Method-of-moments start: split the OLS residual variance evenly
    // between the random effects and the measurement error.
    const Eigen::VectorXd beta_ols = qr.solve(stacked_y);
    const double ols_var =
        std::max((stacked_y - stacked * beta_ols).squaredNorm() / data.n_obs, 1e-12);
    start.chol = std::sqrt(0.5 * ols_var) * Eigen::MatrixXd::Identity(q, q);
    start.log_sigma = 0.5 * std::log(0.5 * ols_var);
  }

  const auto objective = [&](const Eigen::VectorXd& theta) {
    return -profile_loglik(data, VarianceParams::unpack(theta, q));
  };
  const NelderMeadResult opt = nelder_mead(objective, start.pack(), options);

  const VarianceParams best = VarianceParams::unpack(opt.best, q);
  MixedModelFit fit;
  fit.loglik = profile_loglik(data, best, &fit.beta);
  fit.re_cov = best.re_cov();
  fit.resid_var = best.resid_var();
  fit.converged = opt.converged && std::isfinite(fit.loglik);
  fit.n_subjects = n_subjects;
  fit.n_obs = data.n_obs;
  fit.n_iterations = opt.iterations;
  return fit;
}

Eigen::VectorXd blup(const MixedModelFit& fit, const MarkerSeries& series, const LmmSpec& spec) {
  const int q = spec.n_random();
  if (series.empty()) return Eigen::VectorXd::Zero(q);
  const Eigen::MatrixXd x = spec.design_fixed(series.times);
  const Eigen::MatrixXd z = spec.design_random(series.times);
  Eigen::MatrixXd v = z * fit.re_cov * z.transpose();
  v.diagonal().array() += fit.resid_var;
  const Eigen::VectorXd resid = series.values - x * fit.beta;
  return fit.re_cov * z.transpose() * Eigen::LLT<Eigen::MatrixXd>(v).solve(resid);
}

}  // namespace dynforest
