#pragma once

#include <Eigen/Core>
#include <vector>

namespace dynforest {

// Natural cubic spline basis on a fixed knot set. With k interior knots the
// basis has k+2 columns: intercept, a linear term, and k curvature terms.
// Each column is C^2 between the boundary knots and exactly linear outside
// them, so extrapolation is defined everywhere.
//
// Column j+2 is d_j(t) - d_{K-1}(t) with
//   d_j(t) = [ (t - k_j)_+^3 - (t - k_K)_+^3 ] / (k_K - k_j)
// over the full knot vector k_1 < ... < k_K (boundaries included).
Eigen::VectorXd natural_spline_basis(double t, const std::vector<double>& all_knots);

// Time basis for one marker's mean or individual trajectory.
struct BasisSpec {
  enum class Kind { Polynomial, NaturalSpline };

  Kind kind = Kind::Polynomial;
  int degree = 1;                       // Polynomial only; 0 = intercept-only
  std::vector<double> interior_knots;   // NaturalSpline only
  double boundary_lo = 0.0;             // NaturalSpline boundary knots
  double boundary_hi = 1.0;

  int n_columns() const;
  Eigen::VectorXd eval(double t) const;  // column 0 is the intercept
  void validate() const;
};

// Mixed-model design for one marker: fixed-effect basis plus the subset of
// its columns that carry random effects.
struct LmmSpec {
  BasisSpec fixed;
  std::vector<int> random_columns;  // strictly increasing indices into fixed columns

  int n_fixed() const { return fixed.n_columns(); }
  int n_random() const { return static_cast<int>(random_columns.size()); }
  void validate() const;

  // Design rows X_i (n x p) and Z_i (n x q) for one measurement-time vector.
  Eigen::MatrixXd design_fixed(const Eigen::VectorXd& times) const;
  Eigen::MatrixXd design_random(const Eigen::VectorXd& times) const;
};

}  // namespace dynforest
