#include "dynforest/tree.hpp"

#include <algorithm>
#include <cmath>

namespace dynforest {

void TreeParams::validate(int n_predictors) const {
  if (mtry < 1 || mtry > n_predictors)
    throw ValidationError("tree params: mtry must be in [1, P+Q]");
  if (minsplit < 1) throw ValidationError("tree params: minsplit must be >= 1");
  if (nodesize < 1) throw ValidationError("tree params: nodesize must be >= 1");
  if (cause < 1) throw ValidationError("tree params: cause of interest must be >= 1");
}

std::vector<int> SurvivalTree::leaf_indices() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (nodes[i].is_leaf) out.push_back(static_cast<int>(i));
  return out;
}

SubjectData SubjectData::from_dataset(const LongitudinalDataset& ds, int subject) {
  SubjectData s;
  s.covariates = ds.subjects[subject].covariates;
  s.series = ds.series[subject];
  return s;
}

SubjectData SubjectData::truncated_before(double s) const {
  SubjectData out;
  out.covariates = covariates;
  out.series.reserve(series.size());
  for (const auto& ms : series) out.series.push_back(ms.truncated_before(s));
  return out;
}

std::vector<int> draw_candidates(int n_predictors, int mtry, Rng& rng) {
  auto picked = rng.sample_without_replacement(n_predictors, mtry);
  std::sort(picked.begin(), picked.end());
  return picked;
}

NodeFeatures node_features(const LongitudinalDataset& ds, const std::vector<int>& rows,
                           const std::vector<int>& candidates,
                           const std::vector<LmmSpec>& specs, const LmmOptions& options,
                           const std::map<int, MixedModelFit>& parent_fits) {
  NodeFeatures out;
  const int n_cov = ds.schema.n_covariates();
  const auto n = static_cast<Eigen::Index>(rows.size());
  for (const int cand : candidates) {
    if (cand < n_cov) {
      FeatureColumn col;
      col.feature.covariate = cand;
      col.categorical = ds.schema.covariates[cand].type == CovariateType::Categorical;
      col.n_levels = static_cast<int>(ds.schema.covariates[cand].levels.size());
      col.values.resize(n);
      for (Eigen::Index r = 0; r < n; ++r)
        col.values[r] = ds.subjects[rows[r]].covariates[cand];
      out.columns.push_back(std::move(col));
      continue;
    }
    const int m = cand - n_cov;
    const auto parent = parent_fits.find(m);
    MixedModelFit fit;
    try {
      fit = fit_lmm(ds, rows, m, specs[m], options,
                    parent != parent_fits.end() ? &parent->second : nullptr);
    } catch (const ValidationError&) {
      continue;  // too little data or collinear design at this node
    }
    if (!fit.converged) continue;
    const int q = specs[m].n_random();
    Eigen::MatrixXd re(n, q);
    for (Eigen::Index r = 0; r < n; ++r)
      re.row(r) = blup(fit, ds.marker(rows[r], m), specs[m]);
    for (int c = 0; c < q; ++c) {
      FeatureColumn col;
      col.feature.is_marker = true;
      col.feature.marker = m;
      col.feature.component = c;
      col.values = re.col(c);
      out.columns.push_back(std::move(col));
    }
    out.marker_fits.emplace(m, std::move(fit));
  }
  return out;
}

namespace {

int count_split_events(const std::vector<int>& causes, int n_causes, int cause) {
  int events = 0;
  for (const int c : causes) events += (n_causes == 1 ? c != 0 : c == cause) ? 1 : 0;
  return events;
}

std::optional<double> two_group_stat(const std::vector<int>& group,
                                     const std::vector<double>& times,
                                     const std::vector<int>& causes, int n_causes, int cause) {
  if (n_causes == 1) {
    std::vector<int> status(causes.size());
    for (std::size_t i = 0; i < causes.size(); ++i) status[i] = causes[i] != 0 ? 1 : 0;
    return logrank_stat(group, times, status);
  }
  return gray_stat(group, times, causes, cause);
}

// Within-node decile thresholds (duplicates removed, degenerate cuts dropped).
std::vector<double> decile_thresholds(const Eigen::VectorXd& values) {
  std::vector<double> sorted(values.data(), values.data() + values.size());
  std::sort(sorted.begin(), sorted.end());
  const double hi = sorted.back();
  std::vector<double> out;
  for (int decile = 1; decile <= 9; ++decile) {
    const double h = 0.1 * decile * static_cast<double>(sorted.size() - 1);
    const auto lo_idx = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo_idx);
    double c = sorted[lo_idx];
    if (lo_idx + 1 < sorted.size()) c += frac * (sorted[lo_idx + 1] - sorted[lo_idx]);
    if (c >= hi) continue;  // right side would be empty
    if (out.empty() || c != out.back()) out.push_back(c);
  }
  return out;
}

struct BestTracker {
  std::optional<SplitChoice> best;

  void offer(const SplitChoice& candidate) {
    if (!best || candidate.statistic > best->statistic) best = candidate;
  }
};

std::optional<double> evaluate_group_split(const std::vector<int>& group,
                                           const std::vector<double>& times,
                                           const std::vector<int>& causes, int n_causes,
                                           const TreeParams& params) {
  int n_left = 0;
  for (const int g : group) n_left += g == 0 ? 1 : 0;
  const int n_right = static_cast<int>(group.size()) - n_left;
  if (n_left < params.nodesize || n_right < params.nodesize) return std::nullopt;
  // group label 1 = right daughter
  return two_group_stat(group, times, causes, n_causes, params.cause);
}

}  // namespace

std::optional<SplitChoice> best_split(const std::vector<FeatureColumn>& columns,
                                      const std::vector<double>& times,
                                      const std::vector<int>& causes, int n_causes,
                                      const TreeParams& params, Rng& rng,
                                      std::vector<CandidateEval>* ledger) {
  BestTracker tracker;
  const auto n = static_cast<std::size_t>(times.size());
  std::vector<int> group(n);
  for (std::size_t col_idx = 0; col_idx < columns.size(); ++col_idx) {
    const auto& col = columns[col_idx];
    if (!col.categorical) {
      for (const double c : decile_thresholds(col.values)) {
        for (std::size_t i = 0; i < n; ++i) group[i] = col.values[i] <= c ? 0 : 1;
        const auto stat = evaluate_group_split(group, times, causes, n_causes, params);
        if (!stat) continue;
        if (ledger) ledger->push_back({static_cast<int>(col_idx), c, 0, *stat});
        tracker.offer({static_cast<int>(col_idx), c, {}, *stat});
      }
      continue;
    }

    // Observed modalities at this node, in level order.
    std::vector<int> observed;
    for (std::size_t i = 0; i < n; ++i) {
      const int level = static_cast<int>(col.values[i]);
      if (std::find(observed.begin(), observed.end(), level) == observed.end())
        observed.push_back(level);
    }
    std::sort(observed.begin(), observed.end());
    const int n_obs_levels = static_cast<int>(observed.size());
    if (n_obs_levels < 2) continue;

    // Subsets containing the lowest observed level cover every left/right
    // partition exactly once. Above 10 modalities the enumeration is capped
    // by random subset sampling.
    const int free_levels = n_obs_levels - 1;
    std::vector<std::uint64_t> masks;
    if (free_levels <= 10) {
      for (std::uint64_t mask = 0; mask + 1 < (1ULL << free_levels); ++mask)
        masks.push_back(mask);
    } else {
      for (int draw = 0; draw < 1024; ++draw)
        masks.push_back(rng.uniform_int((1ULL << free_levels) - 1));
      std::sort(masks.begin(), masks.end());
      masks.erase(std::unique(masks.begin(), masks.end()), masks.end());
    }
    for (const std::uint64_t mask : masks) {
      std::vector<int> left_levels = {observed[0]};
      for (int b = 0; b < free_levels; ++b)
        if (mask & (1ULL << b)) left_levels.push_back(observed[b + 1]);
      for (std::size_t i = 0; i < n; ++i) {
        const int level = static_cast<int>(col.values[i]);
        group[i] = std::find(left_levels.begin(), left_levels.end(), level) != left_levels.end()
                       ? 0
                       : 1;
      }
      const auto stat = evaluate_group_split(group, times, causes, n_causes, params);
      if (!stat) continue;
      if (ledger) ledger->push_back({static_cast<int>(col_idx), 0.0, mask, *stat});
      tracker.offer({static_cast<int>(col_idx), 0.0, left_levels, *stat});
    }
  }
  return tracker.best;
}

namespace {

struct TreeBuilder {
  const LongitudinalDataset& ds;
  const TreeParams& params;
  const std::vector<LmmSpec>& specs;
  Rng& rng;
  SurvivalTree tree;

  int make_leaf(const std::vector<int>& rows, std::uint64_t node_id, int depth) {
    NodeRecord node;
    node.node_id = node_id;
    node.depth = depth;
    node.n_subjects = static_cast<int>(rows.size());
    node.is_leaf = true;
    std::vector<double> times;
    std::vector<int> causes;
    collect_outcomes(rows, times, causes);
    node.leaf_cif = aalen_johansen(times, causes, ds.n_causes());
    tree.nodes.push_back(std::move(node));
    return static_cast<int>(tree.nodes.size()) - 1;
  }

  void collect_outcomes(const std::vector<int>& rows, std::vector<double>& times,
                        std::vector<int>& causes) const {
    times.reserve(rows.size());
    causes.reserve(rows.size());
    for (const int i : rows) {
      times.push_back(ds.subjects[i].event_time);
      causes.push_back(ds.subjects[i].cause);
    }
  }

  int build(const std::vector<int>& rows, std::uint64_t node_id, int depth,
            const std::map<int, MixedModelFit>& parent_fits) {
    std::vector<double> times;
    std::vector<int> causes;
    collect_outcomes(rows, times, causes);
    const int events = count_split_events(causes, ds.n_causes(), params.cause);
    if (events < params.minsplit || depth >= params.max_depth)
      return make_leaf(rows, node_id, depth);

    const auto candidates = draw_candidates(ds.schema.n_predictors(), params.mtry, rng);
    auto features = node_features(ds, rows, candidates, specs, params.lmm, parent_fits);
    const auto choice =
        best_split(features.columns, times, causes, ds.n_causes(), params, rng);
    if (!choice) return make_leaf(rows, node_id, depth);

    const auto& col = features.columns[choice->column];
    std::vector<int> left_rows, right_rows;
    std::vector<int> right_levels;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      bool go_left;
      if (col.categorical) {
        const int level = static_cast<int>(col.values[i]);
        go_left = std::find(choice->left_levels.begin(), choice->left_levels.end(), level) !=
                  choice->left_levels.end();
        if (!go_left &&
            std::find(right_levels.begin(), right_levels.end(), level) == right_levels.end())
          right_levels.push_back(level);
      } else {
        go_left = col.values[i] <= choice->threshold;
      }
      (go_left ? left_rows : right_rows).push_back(rows[i]);
    }
    std::sort(right_levels.begin(), right_levels.end());

    NodeRecord node;
    node.node_id = node_id;
    node.depth = depth;
    node.n_subjects = static_cast<int>(rows.size());
    node.is_leaf = false;
    node.feature = col.feature;
    node.categorical = col.categorical;
    node.threshold = choice->threshold;
    node.left_levels = choice->left_levels;
    node.right_levels = right_levels;
    node.larger_side_left = left_rows.size() >= right_rows.size();
    node.split_statistic = choice->statistic;
    node.lmm_snapshots = std::move(features.marker_fits);
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back(std::move(node));

    // Children warm-start from this node where it refit a marker.
    std::map<int, MixedModelFit> child_fits = parent_fits;
    for (const auto& [m, fit] : tree.nodes[index].lmm_snapshots) child_fits[m] = fit;
    const int left = build(left_rows, 2 * node_id, depth + 1, child_fits);
    const int right = build(right_rows, 2 * node_id + 1, depth + 1, child_fits);
    tree.nodes[index].left = left;
    tree.nodes[index].right = right;
    return index;
  }
};

}  // namespace

SurvivalTree build_tree(const LongitudinalDataset& bootstrap_ds, const TreeParams& params,
                        const std::vector<LmmSpec>& specs, Rng& rng) {
  if (bootstrap_ds.n_subjects() == 0) throw ValidationError("build_tree: empty dataset");
  params.validate(bootstrap_ds.schema.n_predictors());
  TreeBuilder builder{bootstrap_ds, params, specs, rng, {}};
  std::vector<int> rows(bootstrap_ds.n_subjects());
  for (int i = 0; i < bootstrap_ds.n_subjects(); ++i) rows[i] = i;
  builder.build(rows, 1, 1, {});
  // The recursion appends the root first.
  return std::move(builder.tree);
}

int drop_subject(const SurvivalTree& tree, const SubjectData& subject,
                 const std::vector<LmmSpec>& specs, DropStats* stats) {
  int index = 0;
  while (!tree.nodes[index].is_leaf) {
    const auto& node = tree.nodes[index];
    bool go_left;
    if (node.categorical) {
      const int level = static_cast<int>(subject.covariates[node.feature.covariate]);
      const bool in_left = std::find(node.left_levels.begin(), node.left_levels.end(), level) !=
                           node.left_levels.end();
      const bool in_right = std::find(node.right_levels.begin(), node.right_levels.end(),
                                      level) != node.right_levels.end();
      if (in_left || in_right) {
        go_left = in_left;
      } else {
        // Modality unseen at this node during training.
        if (stats) ++stats->unknown_modalities;
        go_left = node.larger_side_left;
      }
    } else if (node.feature.is_marker) {
      const int m = node.feature.marker;
      const auto fit = node.lmm_snapshots.find(m);
      const Eigen::VectorXd re = blup(fit->second, subject.series[m], specs[m]);
      go_left = re[node.feature.component] <= node.threshold;
    } else {
      go_left = subject.covariates[node.feature.covariate] <= node.threshold;
    }
    index = go_left ? node.left : node.right;
  }
  return index;
}

}  // namespace dynforest
