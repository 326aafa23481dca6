#include "bikesite/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bikesite/errors.hpp"
#include "bikesite/random.hpp"

namespace bikesite {

std::string_view name_of(ClassWeighting w) noexcept {
  switch (w) {
    case ClassWeighting::none: return "none";
    case ClassWeighting::balanced: return "balanced";
    case ClassWeighting::balanced_per_sample: return "balanced_per_sample";
  }
  return "?";
}

ClassWeighting parse_class_weighting(std::string_view name) {
  for (auto w : {ClassWeighting::none, ClassWeighting::balanced, ClassWeighting::balanced_per_sample}) {
    if (name == name_of(w)) return w;
  }
  throw ConfigError("unknown class weighting '" + std::string(name) +
                    "' (expected none, balanced or balanced_per_sample)");
}

void ForestParams::validate() const {
  if (tree_count < 1) throw ConfigError("tree_count must be >= 1");
  if (max_depth < 0) throw ConfigError("max_depth must be >= 0 (0 = unlimited)");
  if (min_leaf < 1) throw ConfigError("min_leaf must be >= 1");
  if (max_features < 0) throw ConfigError("max_features must be >= 0 (0 = sqrt of the dimension)");
}

namespace {

double gini(double w, double wpos) {
  if (w <= 0.0) return 0.0;
  const double f = wpos / w;
  return 2.0 * f * (1.0 - f);
}

struct Pending {
  std::int32_t node;
  std::size_t begin;
  std::size_t end;
  int depth;
};

class TreeBuilder {
 public:
  TreeBuilder(const TrainingData& data, const ForestParams& params, std::uint64_t seed,
              std::vector<TreeNode>& nodes, std::vector<double>& importance)
      : data_(data), params_(params), rng_(seed), nodes_(nodes), importance_(importance) {
    const std::size_t d = data.cols;
    mtry_ = params.max_features > 0
                ? std::min<std::size_t>(static_cast<std::size_t>(params.max_features), d)
                : std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(d)))));
  }

  void build() {
    const std::size_t n = data_.rows;
    idx_.resize(n);
    for (auto& i : idx_) i = static_cast<std::size_t>(rng_.below(n));

    weight_.assign(n, 1.0);
    if (params_.weighting != ClassWeighting::none) {
      double count[2] = {0.0, 0.0};
      if (params_.weighting == ClassWeighting::balanced) {
        for (std::size_t i = 0; i < n; ++i) count[data_.y[i]] += 1.0;
      } else {
        for (auto i : idx_) count[data_.y[i]] += 1.0;
      }
      const double total = count[0] + count[1];
      for (std::size_t i = 0; i < n; ++i) {
        const double c = count[data_.y[i]];
        weight_[i] = c > 0.0 ? total / (2.0 * c) : 1.0;
      }
    }

    nodes_.clear();
    nodes_.emplace_back();
    std::vector<Pending> stack{{0, 0, n, 0}};
    while (!stack.empty()) {
      const Pending p = stack.back();
      stack.pop_back();
      split(p, stack);
    }
  }

 private:
  void split(const Pending& p, std::vector<Pending>& stack) {
    double w = 0.0, wpos = 0.0;
    for (std::size_t i = p.begin; i < p.end; ++i) {
      const auto s = idx_[i];
      w += weight_[s];
      if (data_.y[s] == 1) wpos += weight_[s];
    }
    nodes_[p.node].positive_fraction = w > 0.0 ? wpos / w : 0.0;
    const std::size_t m = p.end - p.begin;
    const double node_gini = gini(w, wpos);
    if (node_gini <= 0.0) return;
    if (params_.max_depth > 0 && p.depth >= params_.max_depth) return;
    if (m < 2 * static_cast<std::size_t>(params_.min_leaf)) return;

    std::vector<std::size_t> features(data_.cols);
    std::iota(features.begin(), features.end(), 0);
    int best_feature = -1;
    double best_threshold = 0.0;
    double best_gain = -1.0;
    std::size_t informative = 0;
    for (std::size_t k = 0; k < features.size() && informative < mtry_; ++k) {
      const auto j = k + static_cast<std::size_t>(rng_.below(features.size() - k));
      std::swap(features[k], features[j]);
      const std::size_t f = features[k];

      column_.clear();
      for (std::size_t i = p.begin; i < p.end; ++i) {
        const auto s = idx_[i];
        column_.push_back({data_.x[s * data_.cols + f], s});
      }
      std::sort(column_.begin(), column_.end());
      if (column_.front().first == column_.back().first) continue;  // constant here
      ++informative;

      double lw = 0.0, lpos = 0.0;
      for (std::size_t i = 0; i + 1 < m; ++i) {
        const auto s = column_[i].second;
        lw += weight_[s];
        if (data_.y[s] == 1) lpos += weight_[s];
        if (column_[i].first == column_[i + 1].first) continue;
        const std::size_t nl = i + 1;
        if (nl < static_cast<std::size_t>(params_.min_leaf) ||
            m - nl < static_cast<std::size_t>(params_.min_leaf)) {
          continue;
        }
        const double gain = w * node_gini - lw * gini(lw, lpos) - (w - lw) * gini(w - lw, wpos - lpos);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          const double a = column_[i].first, b = column_[i + 1].first;
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best_threshold = mid;
        }
      }
    }
    if (best_feature < 0) return;

    auto first = idx_.begin() + static_cast<std::ptrdiff_t>(p.begin);
    auto last = idx_.begin() + static_cast<std::ptrdiff_t>(p.end);
    const std::size_t f = static_cast<std::size_t>(best_feature);
    auto mid = std::stable_partition(first, last, [&](std::size_t s) {
      return data_.x[s * data_.cols + f] <= best_threshold;
    });
    const auto cut = p.begin + static_cast<std::size_t>(mid - first);

    importance_[f] += std::max(best_gain, 0.0);
    const auto left = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    auto& node = nodes_[p.node];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, cut, p.end, p.depth + 1});
    stack.push_back({left, p.begin, cut, p.depth + 1});
  }

  const TrainingData& data_;
  const ForestParams& params_;
  Rng rng_;
  std::vector<TreeNode>& nodes_;
  std::vector<double>& importance_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> idx_;
  std::vector<double> weight_;
  std::vector<std::pair<double, std::size_t>> column_;
};

const TreeNode& leaf_for(const std::vector<TreeNode>& nodes, std::span<const double> row) {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i];
}

}  // namespace

bool DecisionTree::vote(std::span<const double> row) const {
  return leaf_for(nodes_, row).positive_fraction > 0.5;
}

double DecisionTree::leaf_fraction(std::span<const double> row) const {
  return leaf_for(nodes_, row).positive_fraction;
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> d(nodes_.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, d[i]);
    if (nodes_[i].feature >= 0) {
      d[static_cast<std::size_t>(nodes_[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes_[i].right)] = d[i] + 1;
    }
  }
  return best;
}

RandomForest RandomForest::fit(const TrainingData& data, const ForestParams& params) {
  params.validate();
  if (data.rows == 0 || data.cols == 0) throw DataError("cannot train on an empty data set");
  if (data.x.size() != data.rows * data.cols || data.y.size() != data.rows) {
    throw DataError("training data shape mismatch");
  }
  std::size_t pos = 0;
  for (int label : data.y) {
    if (label != 0 && label != 1) throw DataError("labels must be 0 or 1");
    pos += label == 1;
  }
  if (pos == 0 || pos == data.rows) {
    throw DataError("training set holds a single class (" + std::to_string(pos) + " positives of " +
                    std::to_string(data.rows) + ")");
  }

  RandomForest forest;
  forest.params_ = params;
  forest.feature_dim_ = data.cols;
  forest.trees_.resize(static_cast<std::size_t>(params.tree_count));
  forest.importance_.assign(data.cols, 0.0);
  std::vector<double> tree_importance(data.cols);
  for (std::size_t t = 0; t < forest.trees_.size(); ++t) {
    std::fill(tree_importance.begin(), tree_importance.end(), 0.0);
    TreeBuilder builder(data, params, mix_seed(params.seed + t), forest.trees_[t].nodes_,
                        tree_importance);
    builder.build();
    const double sum = std::accumulate(tree_importance.begin(), tree_importance.end(), 0.0);
    if (sum > 0.0) {
      for (std::size_t j = 0; j < data.cols; ++j) forest.importance_[j] += tree_importance[j] / sum;
    }
  }
  const double total = std::accumulate(forest.importance_.begin(), forest.importance_.end(), 0.0);
  for (auto& v : forest.importance_) {
    v = total > 0.0 ? v / total : 1.0 / static_cast<double>(data.cols);
  }
  return forest;
}

double RandomForest::predict_proba(std::span<const double> row) const {
  if (row.size() != feature_dim_) {
    throw DataError("feature vector has dimension " + std::to_string(row.size()) + ", model expects " +
                    std::to_string(feature_dim_));
  }
  std::size_t votes = 0;
  for (const auto& t : trees_) votes += t.vote(row);
  return static_cast<double>(votes) / static_cast<double>(trees_.size());
}

}  // namespace bikesite
