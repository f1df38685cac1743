#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "dynforest/dataset.hpp"
#include "dynforest/lmm.hpp"
#include "dynforest/rng.hpp"
#include "dynforest/survival.hpp"

namespace dynforest {

struct TreeParams {
  int mtry = 1;
  int minsplit = 5;   // minimum events at a node to attempt a split
  int nodesize = 3;   // minimum subjects in each daughter
  int cause = 1;      // cause of interest for splitting (Gray) when K > 1
  LmmOptions lmm;
  int max_depth = 62;  // guard so heap node ids fit in 64 bits

  void validate(int n_predictors) const;
};

// A splitting feature: either fixed covariate p, or component r of marker
// m's predicted random effects.
struct SplitFeature {
  bool is_marker = false;
  int covariate = -1;
  int marker = -1;
  int component = -1;
};

struct NodeRecord {
  std::uint64_t node_id = 1;  // root = 1, children 2d and 2d+1
  int depth = 1;              // root = 1
  int n_subjects = 0;
  bool is_leaf = true;
  CifCurve leaf_cif;  // leaf only

  SplitFeature feature;  // internal only
  bool categorical = false;
  double threshold = 0.0;             // continuous: w <= threshold goes left
  std::vector<int> left_levels;       // categorical: level indices routed left
  std::vector<int> right_levels;      // observed levels routed right
  bool larger_side_left = true;       // routing for modalities unseen at this node
  double split_statistic = 0.0;
  // Node-level mixed-model estimates for every drawn marker that converged;
  // needed to recompute random-effect predictions when dropping new subjects.
  std::map<int, MixedModelFit> lmm_snapshots;

  int left = -1, right = -1;  // indices into SurvivalTree::nodes
};

struct SurvivalTree {
  std::vector<NodeRecord> nodes;  // nodes[0] is the root

  const NodeRecord& root() const { return nodes.front(); }
  std::vector<int> leaf_indices() const;
};

// Covariates plus marker history of one subject to route through a tree.
struct SubjectData {
  Eigen::VectorXd covariates;
  std::vector<MarkerSeries> series;

  static SubjectData from_dataset(const LongitudinalDataset& ds, int subject);
  SubjectData truncated_before(double s) const;
};

// One feature column over the subjects of a node.
struct FeatureColumn {
  SplitFeature feature;
  bool categorical = false;
  int n_levels = 0;
  Eigen::VectorXd values;
};

struct NodeFeatures {
  std::vector<FeatureColumn> columns;
  std::map<int, MixedModelFit> marker_fits;  // converged fits, by marker index
};

struct SplitChoice {
  int column = -1;
  double threshold = 0.0;
  std::vector<int> left_levels;
  double statistic = 0.0;
};

// Every admissible candidate evaluated at a node, for auditing that the
// returned split maximizes the statistic.
struct CandidateEval {
  int column = -1;
  double threshold = 0.0;
  std::uint64_t level_mask = 0;
  double statistic = 0.0;
};

struct DropStats {
  int unknown_modalities = 0;
};

// Uniform draw of mtry of the P+Q predictors (a marker counts as one).
std::vector<int> draw_candidates(int n_predictors, int mtry, Rng& rng);

// Builds the time-fixed feature matrix of a node: drawn covariates pass
// through; each drawn marker is fitted (warm-started from the closest
// ancestor fit) and contributes its predicted random effects as columns.
// Markers whose fit fails or does not converge contribute nothing.
NodeFeatures node_features(const LongitudinalDataset& ds, const std::vector<int>& rows,
                           const std::vector<int>& candidates,
                           const std::vector<LmmSpec>& specs, const LmmOptions& options,
                           const std::map<int, MixedModelFit>& parent_fits);

// Scans each continuous column at its within-node deciles and each
// categorical column over proper modality subsets, scoring the resulting
// two-group comparison by the log-rank statistic (K = 1) or the Gray
// statistic for the cause of interest (K > 1). Splits leaving fewer than
// nodesize subjects on a side are discarded. Ties break to the lowest
// column index, then the smallest threshold / subset encoding.
std::optional<SplitChoice> best_split(const std::vector<FeatureColumn>& columns,
                                      const std::vector<double>& times,
                                      const std::vector<int>& causes, int n_causes,
                                      const TreeParams& params, Rng& rng,
                                      std::vector<CandidateEval>* ledger = nullptr);

SurvivalTree build_tree(const LongitudinalDataset& bootstrap_ds, const TreeParams& params,
                        const std::vector<LmmSpec>& specs, Rng& rng);

// Routes a subject to its leaf; returns the node index of that leaf.
// Random-effect features are recomputed from the stored node-level fits.
int drop_subject(const SurvivalTree& tree, const SubjectData& subject,
                 const std::vector<LmmSpec>& specs, DropStats* stats = nullptr);

}  // namespace dynforest
