#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dynforest/tree.hpp"

namespace dynforest {

enum class ForestMode { DynForest, RegressionCalibration };

struct ForestParams {
  TreeParams tree;
  int n_trees = 200;
  ForestMode mode = ForestMode::DynForest;
  std::uint64_t seed = 1;
  int n_threads = 1;

  void validate() const;
};

// Ensemble of survival trees with bootstrap membership. In
// regression-calibration mode the markers are summarized once by global
// mixed models and the trees split on those frozen features.
struct DynamicForest {
  ForestParams params;
  Schema schema;
  std::vector<LmmSpec> lmm_specs;               // per marker
  std::vector<SurvivalTree> trees;
  std::vector<std::vector<int>> inbag;          // per tree, N draws with replacement
  std::vector<std::vector<int>> oob;            // per tree, sorted complement
  std::vector<MixedModelFit> global_lmm_fits;   // RC mode only, per marker

  int n_trees() const { return static_cast<int>(trees.size()); }
  // Trees for which the training subject is out of bag.
  std::vector<int> oob_trees(int subject) const;
};

// Per-subject ensemble cumulative incidence, with the trees that produced it.
struct PredictionResult {
  std::vector<CifCurve> curves;    // empty curve when no tree contributed
  std::vector<int> n_trees_used;   // |O_star|; 0 marks an undefined prediction
};

DynamicForest fit_forest(const LongitudinalDataset& ds, const ForestParams& params,
                         const std::vector<LmmSpec>& lmm_specs);

// Leaf CIF of one tree for a subject (RC mode translates markers to global
// features internally).
const CifCurve& tree_cif(const DynamicForest& forest, int tree, const SubjectData& subject,
                         DropStats* stats = nullptr);

// Out-of-bag ensemble prediction for every training subject (full history).
PredictionResult predict_oob(const DynamicForest& forest, const LongitudinalDataset& ds);

// Ensemble curve for a new subject using all trees, history as given.
CifCurve predict_subject(const DynamicForest& forest, const SubjectData& subject);

struct DynamicPrediction {
  Eigen::VectorXd prob;  // per cause; empty when not predictable
  bool predictable = true;
};

// Conditional probability of a cause-k event in (s, s+w] for a subject
// event-free at s, using marker history strictly before s:
//   (pi_k(s+w) - pi_k(s)) / (1 - sum_l pi_l(s)),
// with the numerator floored at zero. All trees contribute.
DynamicPrediction predict_dynamic(const DynamicForest& forest, const SubjectData& subject,
                                  double landmark, double horizon);

// Same quantity for a training subject from its out-of-bag trees only.
DynamicPrediction predict_dynamic_oob(const DynamicForest& forest,
                                      const LongitudinalDataset& ds, int subject,
                                      double landmark, double horizon);

// Mean of step functions evaluated on the union of their jump times.
CifCurve average_cifs(const std::vector<const CifCurve*>& curves);

void save_model(const DynamicForest& forest, const std::string& path);
DynamicForest load_model(const std::string& path);

// Rejects prediction data whose covariate/marker schema differs from the
// one the model was trained on.
void check_schema_compatible(const DynamicForest& forest, const Schema& data_schema);

}  // namespace dynforest
