#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clickrank/mf.hpp"
#include "clickrank/types.hpp"

namespace clickrank {

// One impression item of one clickout, in the feature order of the MF
// re-ranker: mf_score, session_position, user_bias, impression_position,
// item_bias. session_position is the recency of the user's last interaction
// with the item inside the session (0 = most recent pre-clickout action),
// -1 when they never interacted.
struct FeatureRow {
  std::string group_id;
  std::string item_id;
  int label = 0;
  double mf_score = 0.0;
  double session_position = -1.0;
  double user_bias = 0.0;
  double impression_position = 0.0;
  double item_bias = 0.0;

  std::vector<double> features() const {
    return {mf_score, session_position, user_bias, impression_position, item_bias};
  }
};

const std::vector<std::string>& mf_feature_names();

// One row per impression item. The session's actions strictly before its last
// clickout form the interaction context. `truth`, when known, sets labels.
std::vector<FeatureRow> extract_features(const Session& session,
                                         const std::vector<std::string>& impressions,
                                         const LatentModel& model,
                                         const LatentModel& price_model,
                                         const std::optional<std::vector<int>>& prices = std::nullopt,
                                         const std::optional<std::string>& truth = std::nullopt);

struct GbdtParams {
  int n_rounds = 100;
  int max_depth = 6;
  double shrinkage = 0.1;
  double min_child_weight = 1.0;  // minimum hessian mass per child
};

// Axis-aligned regression tree; rows with feature <= threshold go left.
struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double eval(std::span<const double> features) const;
  int n_internal_nodes() const;
};

struct TreeEnsemble {
  double base_score = 0.0;  // prior log-odds
  double shrinkage = 0.1;
  std::vector<Tree> trees;
  std::vector<std::string> feature_names;

  // base_score + shrinkage * sum of leaf values; used ordinally downstream.
  double predict(std::span<const double> features) const;
};

// Boosted trees under the binary logistic objective; exact greedy splits,
// deterministic under fixed row order.
TreeEnsemble train_trees(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels, const GbdtParams& params,
                         std::vector<std::string> feature_names = {});

TreeEnsemble train_trees(const std::vector<FeatureRow>& rows, const GbdtParams& params);

double predict(const TreeEnsemble& model, const FeatureRow& row);

// Rows of one group sorted by predicted score descending, impression order on
// ties.
RankedList rank_group(const TreeEnsemble& model, const std::vector<FeatureRow>& rows);

// Number of internal nodes splitting on each feature, across all trees.
std::map<std::string, int> feature_importance(const TreeEnsemble& model);

// Training logistic loss of an ensemble prefix; round-by-round behaviour is
// asserted in tests.
double logistic_loss(const TreeEnsemble& model, const std::vector<std::vector<double>>& features,
                     const std::vector<int>& labels, int n_trees);

void write_feature_rows(const std::string& path, const std::vector<FeatureRow>& rows,
                        char delimiter = ',');
std::vector<FeatureRow> read_feature_rows(const std::string& path, char delimiter = ',');

void save_trees(const std::string& path, const TreeEnsemble& model);
TreeEnsemble load_trees(const std::string& path);

}  // namespace clickrank
