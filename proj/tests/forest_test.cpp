#include <gtest/gtest.h>

#include <numeric>

#include "bikesite/errors.hpp"
#include "bikesite/forest.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

struct Flat {
  std::vector<double> x;
  std::vector<int> y;
  std::size_t rows = 0, cols = 0;

  TrainingData view() const { return {x, rows, cols, y}; }
};

Flat flatten(const std::vector<LabeledRegion>& rs) {
  Flat f;
  f.rows = rs.size();
  f.cols = rs.front().features.size();
  for (const auto& r : rs) {
    f.x.insert(f.x.end(), r.features.begin(), r.features.end());
    f.y.push_back(r.label);
  }
  return f;
}

}  // namespace

TEST(Forest, SeparableTrainingAccuracy) {
  const auto data = flatten(oracle::two_gaussians(100, 200, 5, 8.0, 1));
  ForestParams p;
  p.tree_count = 50;
  const auto f = RandomForest::fit(data.view(), p);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.rows; ++i) {
    correct += (f.predict_proba(data.view().row(i)) >= 0.5) == (data.y[i] == 1);
  }
  EXPECT_GE(static_cast<double>(correct) / data.rows, 0.99);
  EXPECT_EQ(f.trees().size(), 50u);
  EXPECT_EQ(f.feature_dim(), 5u);
}

TEST(Forest, SingleFeatureThreshold) {
  Flat d;
  d.cols = 1;
  for (int i = 0; i < 40; ++i) {
    d.x.push_back(i);
    d.y.push_back(i >= 20);
  }
  d.rows = 40;
  ForestParams p;
  p.tree_count = 20;
  const auto f = RandomForest::fit(d.view(), p);
  const std::vector<double> lo{2.0}, hi{37.0};
  EXPECT_EQ(f.predict_proba(lo), 0.0);
  EXPECT_EQ(f.predict_proba(hi), 1.0);
  EXPECT_EQ(f.feature_importance(), std::vector<double>{1.0});
}

TEST(Forest, OneClassThrows) {
  Flat d;
  d.cols = 2;
  d.rows = 3;
  d.x = {1, 2, 3, 4, 5, 6};
  d.y = {1, 1, 1};
  EXPECT_THROW(RandomForest::fit(d.view(), {}), DataError);
}

TEST(Forest, ParamsValidated) {
  ForestParams p;
  p.tree_count = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  p = {};
  p.min_leaf = 0;
  EXPECT_THROW(p.validate(), ConfigError);
  EXPECT_EQ(parse_class_weighting("balanced_per_sample"), ClassWeighting::balanced_per_sample);
  EXPECT_THROW(parse_class_weighting("weird"), ConfigError);
}

TEST(Forest, Deterministic) {
  const auto data = flatten(oracle::two_gaussians(30, 60, 6, 2.0, 4));
  ForestParams p;
  p.tree_count = 25;
  p.seed = 11;
  EXPECT_EQ(RandomForest::fit(data.view(), p), RandomForest::fit(data.view(), p));
  auto q = p;
  q.seed = 12;
  EXPECT_NE(RandomForest::fit(data.view(), p), RandomForest::fit(data.view(), q));
}

TEST(Forest, ImportanceIsDistribution) {
  for (auto w : {ClassWeighting::none, ClassWeighting::balanced, ClassWeighting::balanced_per_sample}) {
    const auto data = flatten(oracle::two_gaussians(20, 70, 8, 1.5, 2));
    ForestParams p;
    p.tree_count = 15;
    p.weighting = w;
    p.max_depth = 4;
    const auto f = RandomForest::fit(data.view(), p);
    const auto& imp = f.feature_importance();
    ASSERT_EQ(imp.size(), 8u);
    for (double v : imp) EXPECT_GE(v, 0.0);
    EXPECT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), 1.0, 1e-9);
    for (const auto& t : f.trees()) EXPECT_LE(t.depth(), 4u);
  }
}

TEST(Forest, DimensionMismatch) {
  const auto data = flatten(oracle::two_gaussians(10, 10, 3, 4.0, 2));
  ForestParams p;
  p.tree_count = 3;
  const auto f = RandomForest::fit(data.view(), p);
  const std::vector<double> wrong{1.0, 2.0};
  EXPECT_THROW(f.predict_proba(wrong), DataError);
}
