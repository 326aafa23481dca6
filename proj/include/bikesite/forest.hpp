#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace bikesite {

enum class ClassWeighting : std::uint8_t { none, balanced, balanced_per_sample };

std::string_view name_of(ClassWeighting w) noexcept;
ClassWeighting parse_class_weighting(std::string_view name);

struct ForestParams {
  int tree_count = 100;
  int max_depth = 0;     // 0 = unlimited
  int min_leaf = 1;      // samples per leaf, bootstrap duplicates counted
  int max_features = 0;  // 0 = floor(sqrt(d))
  ClassWeighting weighting = ClassWeighting::none;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

/// Row-major dense samples.
struct TrainingData {
  std::span<const double> x;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const int> y;  // 0 / 1

  std::span<const double> row(std::size_t i) const { return x.subspan(i * cols, cols); }
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 = leaf
  double threshold = 0.0;     // go left when x[feature] <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double positive_fraction = 0.0;  // weighted, at this node

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// CART classification tree, Gini impurity.
class DecisionTree {
 public:
  bool vote(std::span<const double> row) const;
  double leaf_fraction(std::span<const double> row) const;
  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }
  std::size_t depth() const;

  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
  friend class RandomForest;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(nodes_);
  }

 private:
  std::vector<TreeNode> nodes_;
};

/// Bagged CART ensemble. Each tree sees a bootstrap sample and draws
/// max_features candidate features per split; the seed of tree t is
/// mix_seed(params.seed + t). probability = fraction of trees whose leaf
/// has weighted positive fraction > 0.5.
class RandomForest {
 public:
  /// Throws DataError when the data holds a single class.
  static RandomForest fit(const TrainingData& data, const ForestParams& params);

  double predict_proba(std::span<const double> row) const;
  std::size_t feature_dim() const noexcept { return feature_dim_; }
  const ForestParams& params() const noexcept { return params_; }
  const std::vector<DecisionTree>& trees() const noexcept { return trees_; }

  /// Mean decrease in impurity, non-negative, sums to 1 (uniform when no
  /// tree split at all).
  const std::vector<double>& feature_importance() const noexcept { return importance_; }

  friend bool operator==(const RandomForest&, const RandomForest&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(params_.tree_count, params_.max_depth, params_.min_leaf, params_.max_features,
       params_.weighting, params_.seed, feature_dim_, trees_, importance_);
  }

 private:
  ForestParams params_;
  std::size_t feature_dim_ = 0;
  std::vector<DecisionTree> trees_;
  std::vector<double> importance_;
};

}  // namespace bikesite
