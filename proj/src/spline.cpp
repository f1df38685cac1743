#include "dynforest/spline.hpp"

#include <cmath>
#include <stdexcept>

#include "dynforest/errors.hpp"

namespace dynforest {

namespace {
inline double cube_plus(double x) { return x > 0.0 ? x * x * x : 0.0; }
}

Eigen::VectorXd natural_spline_basis(double t, const std::vector<double>& all_knots) {
  const int n_knots = static_cast<int>(all_knots.size());
  if (n_knots < 2) throw std::invalid_argument("natural_spline_basis: need >= 2 knots");
  Eigen::VectorXd basis(n_knots);
  basis[0] = 1.0;
  basis[1] = t;
  const double last = all_knots[n_knots - 1];
  const double second_last = all_knots[n_knots - 2];
  const auto d = [&](double knot) {
    return (cube_plus(t - knot) - cube_plus(t - last)) / (last - knot);
  };
  const double d_ref = d(second_last);
  for (int j = 0; j + 2 < n_knots; ++j) basis[j + 2] = d(all_knots[j]) - d_ref;
  return basis;
}

int BasisSpec::n_columns() const {
  if (kind == Kind::Polynomial) return degree + 1;
  return static_cast<int>(interior_knots.size()) + 2;
}

Eigen::VectorXd BasisSpec::eval(double t) const {
  if (kind == Kind::Polynomial) {
    Eigen::VectorXd basis(degree + 1);
    double p = 1.0;
    for (int j = 0; j <= degree; ++j) {
      basis[j] = p;
      p *= t;
    }
    return basis;
  }
  std::vector<double> all_knots;
  all_knots.reserve(interior_knots.size() + 2);
  all_knots.push_back(boundary_lo);
  all_knots.insert(all_knots.end(), interior_knots.begin(), interior_knots.end());
  all_knots.push_back(boundary_hi);
  return natural_spline_basis(t, all_knots);
}

void BasisSpec::validate() const {
  if (kind == Kind::Polynomial) {
    if (degree < 0) throw ValidationError("basis: polynomial degree must be >= 0");
    return;
  }
  if (!(boundary_lo < boundary_hi))
    throw ValidationError("basis: boundary knots must satisfy lo < hi");
  double prev = boundary_lo;
  for (const double k : interior_knots) {
    if (!(k > prev)) throw ValidationError("basis: knots must be strictly increasing");
    prev = k;
  }
  if (!interior_knots.empty() && !(interior_knots.back() < boundary_hi))
    throw ValidationError("basis: interior knots must lie inside the boundary knots");
}

void LmmSpec::validate() const {
  fixed.validate();
  if (random_columns.empty())
    throw ValidationError("lmm spec: at least one random-effect column required");
  int prev = -1;
  for (const int c : random_columns) {
    if (c <= prev || c >= fixed.n_columns())
      throw ValidationError("lmm spec: random columns must be a strictly increasing subset "
                            "of the fixed-basis columns");
    prev = c;
  }
}

Eigen::MatrixXd LmmSpec::design_fixed(const Eigen::VectorXd& times) const {
  Eigen::MatrixXd design(times.size(), n_fixed());
  for (Eigen::Index j = 0; j < times.size(); ++j) design.row(j) = fixed.eval(times[j]);
  return design;
}

Eigen::MatrixXd LmmSpec::design_random(const Eigen::VectorXd& times) const {
  const Eigen::MatrixXd full = design_fixed(times);
  Eigen::MatrixXd design(times.size(), n_random());
  for (int c = 0; c < n_random(); ++c) design.col(c) = full.col(random_columns[c]);
  return design;
}

}  // namespace dynforest
