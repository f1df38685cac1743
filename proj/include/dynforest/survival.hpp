#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

namespace dynforest {

// Right-continuous survival step function; S(t) = 1 before the first jump.
struct SurvCurve {
  Eigen::VectorXd jump_times;  // strictly increasing
  Eigen::VectorXd values;      // value at and after each jump

  double at(double t) const;
  double left_limit(double t) const;  // S(t-)
};

// Right-continuous per-cause cumulative incidence step functions.
// Column k-1 of values holds the cause-k curve; all start at 0.
struct CifCurve {
  Eigen::VectorXd jump_times;
  Eigen::MatrixXd values;  // n_jumps x K

  int n_causes() const { return static_cast<int>(values.cols()); }
  double at(double t, int cause) const;          // cause in 1..K
  Eigen::VectorXd at_all(double t) const;        // length K
  bool empty() const { return values.cols() == 0; }

  // Monotone per cause and total mass <= 1; throws on violation. Every
  // constructor path in this library calls this before returning a curve.
  void validate() const;
};

// Product-limit estimator. status[i] = 1 when subject i's time is an event,
// 0 when censored. Tied events at a time are processed against the risk set
// just before it.
SurvCurve kaplan_meier(const std::vector<double>& times, const std::vector<int>& status);

// Aalen-Johansen cumulative incidence for causes 1..n_causes;
// cause 0 is censoring. pi_k(t) = sum_{t_j <= t} S(t_j-) d_kj / n_j with S
// the all-cause Kaplan-Meier.
CifCurve aalen_johansen(const std::vector<double>& times, const std::vector<int>& causes,
                        int n_causes);

// Kaplan-Meier of the censoring distribution (event = censoring), with the
// convention that events at a tied time precede censorings: the censoring
// jump at t uses risk set n_t - d_t.
SurvCurve censoring_survival(const std::vector<double>& times, const std::vector<int>& causes);

// Two-sample log-rank chi-square statistic, sum_t (O-E) squared over the
// hypergeometric variance. group[i] is 0 or 1; both groups must be
// non-empty. Returns nullopt when there is no event or no variance.
std::optional<double> logrank_stat(const std::vector<int>& group,
                                   const std::vector<double>& times,
                                   const std::vector<int>& status);

// Two-sample test statistic for the cause-k cumulative incidence in the
// style of Gray (rho = 0). Subjects failing from a competing cause stay in
// the subdistribution risk set with weight G(t-)/G(Ttilde-), where G is the
// within-group censoring Kaplan-Meier. The score is
//   U = sum_t [ d_k1(t) - d_k(t) R1(t)/R(t) ]
// over weighted risk sets R, and the statistic is U^2 / V with the
// hypergeometric-form variance V = sum_t d_k (R1/R)(R2/R)(R - d_k)/(R - 1).
// With no competing events this reduces exactly to logrank_stat.
std::optional<double> gray_stat(const std::vector<int>& group, const std::vector<double>& times,
                                const std::vector<int>& causes, int cause);

// Inverse-probability-of-censoring weights at time t (optionally from a
// landmark s), given the censoring survival function of the sample:
//   w_i(t) = I(T_i <= t, d_i != 0)/G(T_i-) + I(T_i > t)/G(t)
// With a landmark, weights are zero unless T_i > s and G is conditioned on
// no censoring by s. Throws NumericalError where a required G value is 0.
Eigen::VectorXd censoring_weights(const std::vector<double>& times,
                                  const std::vector<int>& causes, const SurvCurve& censor_surv,
                                  double t, std::optional<double> landmark = std::nullopt);

}  // namespace dynforest
