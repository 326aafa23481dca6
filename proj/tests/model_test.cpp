#include <gtest/gtest.h>

#include "bikesite/errors.hpp"
#include "bikesite/model.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

ForestParams small_forest() {
  ForestParams p;
  p.tree_count = 15;
  return p;
}

PreparedCity city_from(const std::string& name, const std::vector<LabeledRegion>& rs) {
  std::vector<std::string> cols;
  for (std::size_t i = 0; i < rs.front().features.size(); ++i) cols.push_back("f" + std::to_string(i));
  PreparedCity c{name, EmbeddingMatrix(name, EmbeddingConfig{}, cols), {}};
  auto sorted = rs;
  std::sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.cell < b.cell; });
  for (const auto& r : sorted) {
    c.matrix.append(r.cell, r.features);
    if (r.label) c.stations.push_back({r.cell.to_string(), r.cell.center(), name, StationOrigin::file});
  }
  return c;
}

PredictionMap map_of(const std::vector<LabeledRegion>& rs, const std::vector<double>& probs) {
  PredictionMap m;
  for (std::size_t i = 0; i < rs.size(); ++i) m.cells[rs[i].cell] = probs[i];
  return m;
}

}  // namespace

TEST(Metrics, WorkedExample) {
  const auto m = compute_metrics(3, 1, 1, 5);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.75);
  EXPECT_DOUBLE_EQ(m.f1, 0.75);
  EXPECT_EQ(m.flags, MetricFlags{});
}

TEST(Metrics, DegenerateFlags) {
  const auto none_predicted = compute_metrics(0, 0, 4, 6);
  EXPECT_TRUE(none_predicted.flags.precision_undefined);
  EXPECT_FALSE(none_predicted.flags.recall_undefined);
  EXPECT_TRUE(none_predicted.flags.f1_undefined);
  EXPECT_EQ(none_predicted.precision, 0.0);
  EXPECT_EQ(none_predicted.f1, 0.0);
  const auto no_positives = compute_metrics(0, 2, 0, 8);
  EXPECT_TRUE(no_positives.flags.recall_undefined);
  EXPECT_EQ(no_positives.accuracy, 0.8);
  const auto empty = compute_metrics(0, 0, 0, 0);
  EXPECT_TRUE(empty.flags.accuracy_undefined);
}

TEST(Metrics, EvaluateAgainstBruteForce) {
  const auto rs = oracle::two_gaussians(15, 25, 1, 0, 3);
  Rng rng(8);
  std::vector<double> probs;
  std::vector<int> labels;
  for (const auto& r : rs) {
    probs.push_back(std::floor(rng.uniform() * 10) / 10);
    labels.push_back(r.label);
  }
  const auto pred = map_of(rs, probs);
  for (double thr : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    const auto got = evaluate(pred, rs, thr);
    const auto want = oracle::brute_confusion(probs, labels, thr);
    EXPECT_EQ(got.tp, want.tp);
    EXPECT_EQ(got.fp, want.fp);
    EXPECT_EQ(got.fn, want.fn);
    EXPECT_EQ(got.tn, want.tn);
    EXPECT_NEAR(got.f1, want.f1, 1e-12);
  }
  EXPECT_THROW(evaluate(pred, rs, 0.0), ConfigError);
  EXPECT_THROW(evaluate(pred, rs, 1.0), ConfigError);
  auto missing = pred;
  missing.cells.erase(rs[3].cell);
  EXPECT_THROW(evaluate(missing, rs, 0.5), LookupError);
}

TEST(Metrics, SummaryAveragesDefinedRecall) {
  const auto s = summarize({compute_metrics(1, 0, 1, 2), compute_metrics(0, 1, 0, 3)});
  EXPECT_EQ(s.iterations, 2u);
  EXPECT_DOUBLE_EQ(s.recall, 0.5);
  EXPECT_TRUE(s.recall_applicable);
  EXPECT_DOUBLE_EQ(s.precision, 0.5);
  EXPECT_FALSE(summarize({compute_metrics(0, 1, 0, 3)}).recall_applicable);
}

TEST(Metrics, PrPoints) {
  const auto rs = oracle::two_gaussians(2, 2, 1, 0, 1);
  const auto pts = pr_points(map_of(rs, {0.9, 0.4, 0.6, 0.4}), rs);
  ASSERT_EQ(pts.size(), 3u);
  EXPECT_EQ(pts[0].threshold, 0.9);
  EXPECT_EQ(pts[0].precision, 1.0);
  EXPECT_EQ(pts[0].recall, 0.5);
  EXPECT_EQ(pts[1].precision, 0.5);
  EXPECT_EQ(pts[2].threshold, 0.4);
  EXPECT_EQ(pts[2].recall, 1.0);
}

TEST(Model, TrainPredictSaveLoad) {
  oracle::TempDir dir("model");
  const auto rs = oracle::two_gaussians(30, 60, 4, 6.0, 2);
  const auto m = ClassifierModel::train(rs, small_forest(), {"x"}, "fp-a");
  EXPECT_EQ(m.kind(), "random_forest");
  EXPECT_EQ(m.feature_dim(), 4u);
  EXPECT_GT(m.predict(rs[0].features), 0.5);
  save_model(m, dir / "m.bin");
  EXPECT_EQ(load_model(dir / "m.bin"), m);
  EXPECT_EQ(load_model(dir / "m.bin", std::string("fp-a")), m);
  EXPECT_THROW(load_model(dir / "m.bin", std::string("fp-b")), ConfigError);
  EXPECT_EQ(load_model(dir / "m.bin", std::string("fp-b"), true), m);
  EXPECT_THROW(ClassifierModel::train({}, small_forest(), {}, ""), DataError);
}

TEST(Model, PredictMatrix) {
  const auto rs = oracle::two_gaussians(10, 20, 3, 6.0, 2);
  const auto city = city_from("c", rs);
  const auto m = ClassifierModel::train(rs, small_forest(), {"c"}, city.matrix.config().fingerprint());
  const auto pred = predict_proba(m, city.matrix);
  EXPECT_EQ(pred.size(), 30u);
  EXPECT_EQ(pred.fingerprint, city.matrix.config().fingerprint());
  for (const auto& [cell, p] : pred.cells) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_TRUE(predict_proba(m, EmbeddingMatrix("e", EmbeddingConfig{}, city.matrix.columns())).empty());
  EmbeddingConfig other;
  other.neighborhood.k = 1;
  EmbeddingMatrix foreign("e", other, city.matrix.columns());
  foreign.append(rs[0].cell, rs[0].features);
  EXPECT_THROW(predict_proba(m, foreign), ConfigError);
}

TEST(Experiment, SingleIterationAndDeterminism) {
  const auto rs = oracle::two_gaussians(30, 120, 4, 3.0, 2);
  const SplitFactory factory = [&](std::uint64_t seed) { return build_same_city_split(rs, "c", {2.5, seed}); };
  ExperimentOptions opt;
  opt.iterations = 1;
  opt.forest = small_forest();
  const auto one = repeated_experiment(factory, opt);
  EXPECT_EQ(one.per_iteration.size(), 1u);
  EXPECT_EQ(one.mean.f1, one.per_iteration[0].f1);

  opt.iterations = 5;
  const auto a = repeated_experiment(factory, opt);
  const auto b = repeated_experiment(factory, opt);
  EXPECT_EQ(a.per_iteration, b.per_iteration);
  EXPECT_EQ(a.averaged.cells, b.averaged.cells);
  opt.threads = 3;
  const auto c = repeated_experiment(factory, opt);
  EXPECT_EQ(a.per_iteration, c.per_iteration);
  EXPECT_EQ(a.averaged.cells, c.averaged.cells);
  opt.iterations = 0;
  EXPECT_THROW(repeated_experiment(factory, opt), ConfigError);
}

TEST(Experiment, FailureCarriesSeed) {
  const auto rs = oracle::two_gaussians(30, 120, 4, 3.0, 2);
  const SplitFactory factory = [&](std::uint64_t seed) {
    if (seed == 13) throw DataError("boom");
    return build_same_city_split(rs, "c", {2.5, seed});
  };
  ExperimentOptions opt;
  opt.iterations = 5;
  opt.base_seed = 10;
  opt.forest = small_forest();
  try {
    repeated_experiment(factory, opt);
    FAIL();
  } catch (const ExperimentError& e) {
    EXPECT_EQ(e.seed(), 13u);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
}

TEST(Experiment, HeatmapCoversRequestedRegions) {
  const auto rs = oracle::two_gaussians(30, 120, 4, 3.0, 2);
  const SplitFactory factory = [&](std::uint64_t seed) { return build_same_city_split(rs, "c", {2.5, seed}); };
  ExperimentOptions opt;
  opt.iterations = 3;
  opt.forest = small_forest();
  opt.heatmap = &rs;
  const auto r = repeated_experiment(factory, opt);
  EXPECT_EQ(r.averaged.size(), rs.size());
  EXPECT_EQ(r.averaged.iterations_averaged, 3);
}

TEST(Transfer, MatrixOrderingAndNa) {
  auto big = city_from("big", oracle::two_gaussians(20, 80, 4, 10.0, 1));
  auto small = city_from("small", oracle::two_gaussians(10, 40, 4, 10.0, 2));
  auto empty = city_from("empty", oracle::two_gaussians(1, 40, 4, 10.0, 3));
  empty.stations.clear();
  ExperimentOptions opt;
  opt.iterations = 3;
  opt.forest = small_forest();
  const auto tm = transfer_matrix({small, empty, big}, {2.5, 0}, opt);
  EXPECT_EQ(tm.cities, (std::vector<std::string>{"big", "small", "empty"}));
  EXPECT_EQ(tm.station_counts, (std::vector<std::size_t>{20, 10, 0}));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_FALSE(tm.recall[i][2]);
    EXPECT_FALSE(tm.recall[2][i]);
  }
  ASSERT_TRUE(tm.recall[0][0]);
  EXPECT_GE(*tm.recall[0][0], 0.9);
  EXPECT_GE(*tm.recall[1][1], 0.9);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_GE(*tm.recall[i][j], 0.0);
      EXPECT_LE(*tm.recall[i][j], 1.0);
    }
  }
  const auto csv = tm.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "train_city,big,small,empty");
  EXPECT_NE(csv.find("empty,NA,NA,NA"), std::string::npos);
  EXPECT_EQ(tm.digest().size(), 64u);
  EXPECT_EQ(transfer_matrix({small, empty, big}, {2.5, 0}, opt).digest(), tm.digest());
}
