#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dynforest/errors.hpp"

namespace dynforest {

enum class CovariateType { Continuous, Categorical };

struct CovariateInfo {
  std::string name;
  CovariateType type = CovariateType::Continuous;
  std::vector<std::string> levels;  // categorical only; fixed by the schema,
                                    // never inferred from data
};

// Declares the P fixed covariates, the Q marker names, the number of event
// causes K, and (optionally) a predictor -> group assignment used by the
// grouped importance statistic.
struct Schema {
  std::vector<CovariateInfo> covariates;
  std::vector<std::string> markers;
  int n_causes = 1;
  std::map<std::string, std::string> groups;

  int n_covariates() const { return static_cast<int>(covariates.size()); }
  int n_markers() const { return static_cast<int>(markers.size()); }
  int n_predictors() const { return n_covariates() + n_markers(); }

  // Name of predictor p in the canonical order: covariates first, markers after.
  const std::string& predictor_name(int p) const;
  int predictor_index(const std::string& name) const;  // -1 when unknown

  void validate() const;
  std::string to_json_string() const;
  static Schema from_json_string(const std::string& text);
  static Schema from_json_file(const std::string& path);
};

// One measurement series of a single marker for a single subject.
// Times are strictly increasing and never exceed the subject's observed time.
struct MarkerSeries {
  Eigen::VectorXd times;
  Eigen::VectorXd values;

  Eigen::Index size() const { return times.size(); }
  bool empty() const { return times.size() == 0; }
  // Keeps only measurements strictly before the landmark time s.
  MarkerSeries truncated_before(double s) const;
};

struct SubjectRecord {
  std::string id;
  std::string source_id;  // provenance for bootstrap duplicates; == id otherwise
  double event_time = 0.0;
  int cause = 0;  // 0 = censored, 1..K = cause of event
  Eigen::VectorXd covariates;  // categorical values stored as level index
};

class LongitudinalDataset {
 public:
  Schema schema;
  std::vector<SubjectRecord> subjects;
  // series[i][m] is subject i's series for marker m (possibly empty).
  std::vector<std::vector<MarkerSeries>> series;

  int n_subjects() const { return static_cast<int>(subjects.size()); }
  int n_causes() const { return schema.n_causes; }

  const MarkerSeries& marker(int subject, int m) const { return series[subject][m]; }

  Eigen::VectorXd event_times() const;
  std::vector<int> causes() const;

  // Largest / smallest observed marker measurement time over the whole sample.
  double pooled_time_min() const;
  double pooled_time_max() const;
  std::vector<double> pooled_times(int marker) const;

  void validate() const;
};

// Reads the subject table (id,event_time,cause,<covariates...>) and the
// long-format marker table (id,marker,time,value) against a declared schema.
// Every violated invariant is reported with the offending subject / row.
LongitudinalDataset load_dataset(const std::string& fixed_path, const std::string& long_path,
                                 const Schema& schema);

void save_dataset(const LongitudinalDataset& ds, const std::string& fixed_path,
                  const std::string& long_path);

// Returns the dataset restricted to the requested subject indices, in order.
// Indices may repeat (bootstrap semantics): duplicates receive fresh ids
// "<id>#<k>" and keep the original id in source_id.
LongitudinalDataset subset(const LongitudinalDataset& ds, const std::vector<int>& indices);

std::vector<int> subject_indices_by_id(const LongitudinalDataset& ds,
                                       const std::vector<std::string>& ids);

}  // namespace dynforest
