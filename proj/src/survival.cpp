#include "dynforest/survival.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "dynforest/errors.hpp"

namespace dynforest {

namespace {

// Index of the last jump time <= t (strict = false) or < t (strict = true),
// -1 when none.
Eigen::Index last_jump_before(const Eigen::VectorXd& jumps, double t, bool strict) {
  Eigen::Index lo = 0, hi = jumps.size();
  while (lo < hi) {
    const Eigen::Index mid = (lo + hi) / 2;
    const bool keep = strict ? (jumps[mid] < t) : (jumps[mid] <= t);
    if (keep)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo - 1;
}

struct TimePoint {
  double time;
  std::vector<int> subject_index;  // subjects with this observed time
};

std::vector<TimePoint> group_by_time(const std::vector<double>& times) {
  std::map<double, std::vector<int>> by_time;
  for (std::size_t i = 0; i < times.size(); ++i)
    by_time[times[i]].push_back(static_cast<int>(i));
  std::vector<TimePoint> out;
  out.reserve(by_time.size());
  for (auto& [t, idx] : by_time) out.push_back({t, std::move(idx)});
  return out;
}

}  // namespace

double SurvCurve::at(double t) const {
  const auto j = last_jump_before(jump_times, t, false);
  return j < 0 ? 1.0 : values[j];
}

double SurvCurve::left_limit(double t) const {
  const auto j = last_jump_before(jump_times, t, true);
  return j < 0 ? 1.0 : values[j];
}

double CifCurve::at(double t, int cause) const {
  const auto j = last_jump_before(jump_times, t, false);
  return j < 0 ? 0.0 : values(j, cause - 1);
}

Eigen::VectorXd CifCurve::at_all(double t) const {
  const auto j = last_jump_before(jump_times, t, false);
  if (j < 0) return Eigen::VectorXd::Zero(values.cols());
  return values.row(j);
}

void CifCurve::validate() const {
  constexpr double kSlack = 1e-9;
  if (values.rows() != jump_times.size())
    throw NumericalError("cif: jump/value size mismatch");
  for (Eigen::Index j = 0; j < values.rows(); ++j) {
    double total = 0.0;
    for (Eigen::Index k = 0; k < values.cols(); ++k) {
      const double v = values(j, k);
      if (!(v >= -kSlack && v <= 1.0 + kSlack))
        throw NumericalError("cif: value outside [0,1]");
      if (j > 0 && v < values(j - 1, k) - kSlack)
        throw NumericalError("cif: cause curve not non-decreasing");
      total += v;
    }
    if (total > 1.0 + kSlack) throw NumericalError("cif: total mass exceeds 1");
    if (j > 0 && !(jump_times[j] > jump_times[j - 1]))
      throw NumericalError("cif: jump times not strictly increasing");
  }
}

SurvCurve kaplan_meier(const std::vector<double>& times, const std::vector<int>& status) {
  if (times.empty()) throw std::invalid_argument("kaplan_meier: empty input");
  if (times.size() != status.size())
    throw std::invalid_argument("kaplan_meier: times/status length mismatch");
  const auto points = group_by_time(times);
  std::vector<double> jumps, vals;
  double surv = 1.0;
  int at_risk = static_cast<int>(times.size());
  for (const auto& pt : points) {
    int events = 0;
    for (const int i : pt.subject_index) events += status[i] != 0 ? 1 : 0;
    if (events > 0) {
      surv *= 1.0 - static_cast<double>(events) / at_risk;
      jumps.push_back(pt.time);
      vals.push_back(surv);
    }
    at_risk -= static_cast<int>(pt.subject_index.size());
  }
  SurvCurve curve;
  curve.jump_times = Eigen::Map<Eigen::VectorXd>(jumps.data(), jumps.size());
  curve.values = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
  return curve;
}

CifCurve aalen_johansen(const std::vector<double>& times, const std::vector<int>& causes,
                        int n_causes) {
  if (times.empty()) throw std::invalid_argument("aalen_johansen: empty input");
  if (times.size() != causes.size())
    throw std::invalid_argument("aalen_johansen: times/causes length mismatch");
  for (const int c : causes)
    if (c < 0 || c > n_causes) throw std::invalid_argument("aalen_johansen: cause out of range");
  const auto points = group_by_time(times);
  std::vector<double> jumps;
  std::vector<Eigen::VectorXd> rows;
  Eigen::VectorXd cif = Eigen::VectorXd::Zero(n_causes);
  double surv_before = 1.0;  // all-cause Kaplan-Meier left limit S(t-)
  int at_risk = static_cast<int>(times.size());
  for (const auto& pt : points) {
    Eigen::VectorXd events = Eigen::VectorXd::Zero(n_causes);
    int total_events = 0;
    for (const int i : pt.subject_index) {
      if (causes[i] != 0) {
        events[causes[i] - 1] += 1.0;
        ++total_events;
      }
    }
    if (total_events > 0) {
      cif += surv_before / at_risk * events;
      jumps.push_back(pt.time);
      rows.push_back(cif);
      surv_before *= 1.0 - static_cast<double>(total_events) / at_risk;
    }
    at_risk -= static_cast<int>(pt.subject_index.size());
  }
  CifCurve curve;
  curve.jump_times = Eigen::Map<Eigen::VectorXd>(jumps.data(), jumps.size());
  curve.values.resize(static_cast<Eigen::Index>(rows.size()), n_causes);
  for (std::size_t j = 0; j < rows.size(); ++j) curve.values.row(j) = rows[j];
  curve.validate();
  return curve;
}

SurvCurve censoring_survival(const std::vector<double>& times, const std::vector<int>& causes) {
  if (times.empty()) throw std::invalid_argument("censoring_survival: empty input");
  const auto points = group_by_time(times);
  std::vector<double> jumps, vals;
  double surv = 1.0;
  int at_risk = static_cast<int>(times.size());
  for (const auto& pt : points) {
    int events = 0, censorings = 0;
    for (const int i : pt.subject_index) (causes[i] != 0 ? events : censorings) += 1;
    // Events precede censorings at a tied time, so the censoring jump sees
    // the risk set with the tied events already removed.
    if (censorings > 0) {
      surv *= 1.0 - static_cast<double>(censorings) / (at_risk - events);
      jumps.push_back(pt.time);
      vals.push_back(surv);
    }
    at_risk -= static_cast<int>(pt.subject_index.size());
  }
  SurvCurve curve;
  curve.jump_times = Eigen::Map<Eigen::VectorXd>(jumps.data(), jumps.size());
  curve.values = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
  return curve;
}

std::optional<double> logrank_stat(const std::vector<int>& group,
                                   const std::vector<double>& times,
                                   const std::vector<int>& status) {
  const std::size_t n = times.size();
  if (group.size() != n || status.size() != n)
    throw std::invalid_argument("logrank_stat: input length mismatch");
  int n1 = 0;
  for (const int g : group) {
    if (g != 0 && g != 1) throw std::invalid_argument("logrank_stat: group labels must be 0/1");
    n1 += g;
  }
  if (n1 == 0 || n1 == static_cast<int>(n))
    throw std::invalid_argument("logrank_stat: both groups must be non-empty");

  const auto points = group_by_time(times);
  double score = 0.0, variance = 0.0;
  int at_risk = static_cast<int>(n), at_risk_1 = n1;
  bool any_event = false;
  for (const auto& pt : points) {
    int d = 0, d1 = 0, leaving_1 = 0;
    for (const int i : pt.subject_index) {
      if (status[i] != 0) {
        ++d;
        d1 += group[i];
      }
      leaving_1 += group[i];
    }
    if (d > 0) {
      any_event = true;
      const double p1 = static_cast<double>(at_risk_1) / at_risk;
      score += d1 - d * p1;
      if (at_risk > 1)
        variance += d * p1 * (1.0 - p1) * (at_risk - d) / (at_risk - 1.0);
    }
    at_risk -= static_cast<int>(pt.subject_index.size());
    at_risk_1 -= leaving_1;
  }
  if (!any_event || variance <= 0.0) return std::nullopt;
  return score * score / variance;
}

std::optional<double> gray_stat(const std::vector<int>& group, const std::vector<double>& times,
                                const std::vector<int>& causes, int cause) {
  const std::size_t n = times.size();
  if (group.size() != n || causes.size() != n)
    throw std::invalid_argument("gray_stat: input length mismatch");
  int n1 = 0;
  for (const int g : group) {
    if (g != 0 && g != 1) throw std::invalid_argument("gray_stat: group labels must be 0/1");
    n1 += g;
  }
  if (n1 == 0 || n1 == static_cast<int>(n))
    throw std::invalid_argument("gray_stat: both groups must be non-empty");

  // Within-group censoring Kaplan-Meier for the subdistribution weights.
  std::vector<double> times_g[2];
  std::vector<int> causes_g[2];
  for (std::size_t i = 0; i < n; ++i) {
    times_g[group[i]].push_back(times[i]);
    causes_g[group[i]].push_back(causes[i]);
  }
  const SurvCurve censor_g[2] = {censoring_survival(times_g[0], causes_g[0]),
                                 censoring_survival(times_g[1], causes_g[1])};

  // Distinct times with cause-of-interest events; other times contribute 0.
  std::vector<double> event_times;
  {
    std::vector<double> tmp;
    for (std::size_t i = 0; i < n; ++i)
      if (causes[i] == cause) tmp.push_back(times[i]);
    std::sort(tmp.begin(), tmp.end());
    tmp.erase(std::unique(tmp.begin(), tmp.end()), tmp.end());
    event_times = std::move(tmp);
  }
  if (event_times.empty()) return std::nullopt;

  double score = 0.0, variance = 0.0;
  for (const double t : event_times) {
    double risk[2] = {0.0, 0.0};
    double d_total = 0.0, d_group1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int g = group[i];
      double w = 0.0;
      if (times[i] >= t) {
        w = 1.0;
      } else if (causes[i] != 0 && causes[i] != cause) {
        const double g_at_fail = censor_g[g].left_limit(times[i]);
        if (g_at_fail > 0.0) w = censor_g[g].left_limit(t) / g_at_fail;
      }
      risk[g] += w;
      if (times[i] == t && causes[i] == cause) {
        d_total += 1.0;
        d_group1 += g;
      }
    }
    const double total_risk = risk[0] + risk[1];
    if (total_risk <= 0.0) continue;
    const double p1 = risk[1] / total_risk;
    score += d_group1 - d_total * p1;
    if (total_risk > 1.0)
      variance += d_total * p1 * (1.0 - p1) * (total_risk - d_total) / (total_risk - 1.0);
  }
  if (variance <= 0.0) return std::nullopt;
  return score * score / variance;
}

Eigen::VectorXd censoring_weights(const std::vector<double>& times,
                                  const std::vector<int>& causes, const SurvCurve& censor_surv,
                                  double t, std::optional<double> landmark) {
  const std::size_t n = times.size();
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  double g_landmark = 1.0;
  if (landmark) {
    g_landmark = censor_surv.at(*landmark);
    if (g_landmark <= 0.0)
      throw NumericalError("censoring_weights: censoring survival is 0 at the landmark");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (landmark && !(times[i] > *landmark)) continue;
    if (times[i] <= t && causes[i] != 0) {
      const double g = censor_surv.left_limit(times[i]);
      if (g <= 0.0)
        throw NumericalError("censoring_weights: censoring survival is 0 before an event time; "
                             "truncate the evaluation window");
      weights[static_cast<Eigen::Index>(i)] = g_landmark / g;
    } else if (times[i] > t) {
      const double g = censor_surv.at(t);
      if (g <= 0.0)
        throw NumericalError("censoring_weights: censoring survival is 0 at t; truncate the "
                             "evaluation window");
      weights[static_cast<Eigen::Index>(i)] = g_landmark / g;
    }
  }
  return weights;
}

}  // namespace dynforest
