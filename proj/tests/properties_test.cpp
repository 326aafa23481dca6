// Randomized invariants. Each property runs a fixed number of cases from a
// seeded generator so failures reproduce; the failing case index is printed.
#include <gtest/gtest.h>

#include <numeric>

#include "bikesite/dataset.hpp"
#include "bikesite/embedding.hpp"
#include "bikesite/errors.hpp"
#include "bikesite/model.hpp"
#include "bikesite/random.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

struct Gen {
  Rng rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  int integer(int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }
  double real(double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }
  std::vector<double> vec(std::size_t n, double lo = -50, double hi = 50) {
    std::vector<double> v(n);
    for (auto& x : v) x = real(lo, hi);
    return v;
  }
  CombineMethod method() { return static_cast<CombineMethod>(integer(0, 3)); }
  CombineMethod weighted_method() { return static_cast<CombineMethod>(integer(1, 3)); }
  LatLng near(LatLng c, double radius_m) { return oracle::offset_m(c, real(0, 360), radius_m * std::sqrt(rng.uniform())); }
};

constexpr int kCases = 200;

Polygon box_around(LatLng c, double half_m) {
  return polygon_from_bbox({oracle::offset_m(c, 180, half_m).lat, oracle::offset_m(c, 270, half_m).lon,
                            oracle::offset_m(c, 0, half_m).lat, oracle::offset_m(c, 90, half_m).lon});
}

}  // namespace

// ---- combination ----------------------------------------------------------

TEST(Property, CombinationIsLinear) {
  Gen g(1);
  for (int i = 0; i < kCases; ++i) {
    const auto n = static_cast<std::size_t>(g.integer(1, 12));
    const int k = g.integer(0, 6);
    const NeighborhoodConfig cfg{k, g.method()};
    const auto a = g.vec(n), b = g.vec(n);
    std::vector<std::vector<double>> ra(k), rb(k), rsum(k);
    for (int j = 0; j < k; ++j) {
      ra[j] = g.vec(n);
      rb[j] = g.vec(n);
      rsum[j].resize(n);
      for (std::size_t x = 0; x < n; ++x) rsum[j][x] = 2 * ra[j][x] - 3 * rb[j][x];
    }
    std::vector<double> csum(n);
    for (std::size_t x = 0; x < n; ++x) csum[x] = 2 * a[x] - 3 * b[x];
    const auto fa = combine_neighborhood(a, ra, cfg), fb = combine_neighborhood(b, rb, cfg);
    const auto fs = combine_neighborhood(csum, rsum, cfg);
    for (std::size_t x = 0; x < fs.size(); ++x) ASSERT_NEAR(fs[x], 2 * fa[x] - 3 * fb[x], 1e-9) << "case " << i;
  }
}

TEST(Property, WeightedCombinationStaysInHull) {
  Gen g(2);
  for (int i = 0; i < kCases; ++i) {
    const auto n = static_cast<std::size_t>(g.integer(1, 8));
    const int k = g.integer(0, 8);
    const auto c = g.vec(n);
    std::vector<std::vector<double>> rings(k);
    for (auto& r : rings) r = g.vec(n);
    const auto out = combine_neighborhood(c, rings, {k, g.weighted_method()});
    ASSERT_EQ(out.size(), n);
    for (std::size_t x = 0; x < n; ++x) {
      double lo = c[x], hi = c[x];
      for (const auto& r : rings) {
        lo = std::min(lo, r[x]);
        hi = std::max(hi, r[x]);
      }
      ASSERT_GE(out[x], lo - 1e-9) << "case " << i;
      ASSERT_LE(out[x], hi + 1e-9) << "case " << i;
    }
  }
}

TEST(Property, ConcatenationDimension) {
  for (int k = 0; k <= 25; ++k) {
    for (std::size_t base : {kCountDimension, kShapeDimension}) {
      const std::vector<double> c(base, 1.0);
      const std::vector<std::vector<double>> rings(k, std::vector<double>(base, 0.5));
      const NeighborhoodConfig cfg{k, CombineMethod::concatenate};
      const auto out = combine_neighborhood(c, rings, cfg);
      ASSERT_EQ(out.size(), base * static_cast<std::size_t>(k + 1));
      ASSERT_EQ(out.size(), combined_dimension(base, cfg));
    }
  }
}

// ---- embedding and labels -------------------------------------------------

TEST(Property, CountEmbeddingIgnoresAssignmentOrder) {
  Gen g(3);
  const auto cell = cell_at({46.05, 14.5}, 11);
  for (int i = 0; i < 100; ++i) {
    CityGrid grid("g", 11, {cell});
    auto& a = grid.assignments_at(0);
    const int n = g.integer(0, 30);
    for (int j = 0; j < n; ++j) {
      const auto cat = static_cast<CategoryId>(g.integer(0, static_cast<int>(kCategoryCount) - 1));
      a.push_back({static_cast<std::uint32_t>(j), cat, ShapeClass::point, 0.0});
    }
    const auto before = embed_count(grid, cell).values;
    const auto shape_before = embed_shape(grid, cell).values;
    g.rng.shuffle(a);
    ASSERT_EQ(embed_count(grid, cell).values, before) << "case " << i;
    ASSERT_EQ(embed_shape(grid, cell).values, shape_before) << "case " << i;
    ASSERT_EQ(std::accumulate(before.begin(), before.end(), 0.0), static_cast<double>(n));
  }
}

TEST(Property, LabelCountMatchesPointInCell) {
  Gen g(4);
  const LatLng c{46.05, 14.5};
  const auto cells = tessellate(box_around(c, 400), 11);
  std::vector<std::string> cols{"x"};
  EmbeddingMatrix m("m", EmbeddingConfig{}, cols);
  for (const auto& cell : cells) m.append(cell, std::vector<double>{0.0});
  for (int i = 0; i < 30; ++i) {
    std::vector<StationRecord> st;
    const int n = g.integer(0, 40);
    for (int j = 0; j < n; ++j) st.push_back({std::to_string(j), g.near(c, 500), "", StationOrigin::file});
    const auto labeled = label_regions(m, st);
    // brute force: a cell is positive when its hexagon contains a station
    std::size_t want = 0;
    for (const auto& cell : cells) {
      const auto hex = cell.boundary();
      want += std::any_of(st.begin(), st.end(), [&](const auto& s) { return point_in_polygon(hex, s.location); });
    }
    ASSERT_EQ(count_positives(labeled), want) << "case " << i;
  }
}

// ---- sampling -------------------------------------------------------------

TEST(Property, SamplingInvariants) {
  Gen g(5);
  const auto cells = oracle::distinct_cells(600);
  for (int i = 0; i < 100; ++i) {
    const auto pos = static_cast<std::size_t>(g.integer(1, 80));
    const double ratio = g.real(1.0, 5.0);
    const auto need = negative_count(pos, ratio);
    const auto neg = need + static_cast<std::size_t>(g.integer(0, 100));
    if (pos + neg > cells.size()) continue;
    std::vector<LabeledRegion> data;
    for (std::size_t j = 0; j < pos + neg; ++j) data.push_back({cells[j], {0.0}, 0});
    // scatter the positives
    for (std::size_t j = 0; j < pos; ++j) data[j].label = 1;
    g.rng.shuffle(data);
    const SamplingSpec spec{ratio, g.rng.next()};
    const auto s = sample_training(data, spec);
    ASSERT_EQ(count_positives(s), pos) << "case " << i;
    ASSERT_EQ(s.size() - pos, need) << "case " << i;
    ASSERT_EQ(need, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(pos) + 0.5)));
    std::set<CellId> uniq;
    for (const auto& r : s) uniq.insert(r.cell);
    ASSERT_EQ(uniq.size(), s.size()) << "case " << i;
    ASSERT_EQ(sample_training(data, spec), s);

    const auto split = build_same_city_split(data, "c", spec);
    std::set<CellId> tr;
    for (const auto& r : split.train) tr.insert(r.cell);
    for (const auto& r : split.eval) ASSERT_FALSE(tr.count(r.cell)) << "case " << i;
  }
}

// ---- metrics and model ----------------------------------------------------

TEST(Property, MetricsMonotoneInThreshold) {
  Gen g(6);
  for (int i = 0; i < kCases; ++i) {
    const auto n = static_cast<std::size_t>(g.integer(1, 60));
    const auto cells = oracle::distinct_cells(n);
    PredictionMap pred;
    std::vector<LabeledRegion> truth;
    for (std::size_t j = 0; j < n; ++j) {
      pred.cells[cells[j]] = std::round(g.rng.uniform() * 20) / 20;
      truth.push_back({cells[j], {}, g.integer(0, 1)});
    }
    std::uint64_t last_pp = ~0ull, last_tp = ~0ull;
    for (double thr = 0.05; thr < 1.0; thr += 0.05) {
      const auto m = evaluate(pred, truth, thr);
      ASSERT_EQ(m.total(), n);
      ASSERT_LE(m.tp + m.fp, last_pp) << "case " << i;
      ASSERT_LE(m.tp, last_tp) << "case " << i;
      ASSERT_EQ(m.tp + m.fn, count_positives(truth));
      last_pp = m.tp + m.fp;
      last_tp = m.tp;
      for (double v : {m.accuracy, m.precision, m.recall, m.f1}) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
  }
}

TEST(Property, AveragedProbabilityWithinIterationRange) {
  const auto rs = oracle::two_gaussians(25, 100, 4, 2.0, 6);
  ForestParams fp;
  fp.tree_count = 10;
  const int iters = 6;
  std::vector<PredictionMap> singles;
  for (int i = 0; i < iters; ++i) {
    const auto split = build_same_city_split(rs, "c", {2.5, static_cast<std::uint64_t>(i)});
    auto p = fp;
    p.seed = static_cast<std::uint64_t>(i);
    singles.push_back(predict_proba(train(split, p, ""), rs));
  }
  ExperimentOptions opt;
  opt.iterations = iters;
  opt.forest = fp;
  opt.heatmap = &rs;
  const auto res = repeated_experiment([&](std::uint64_t s) { return build_same_city_split(rs, "c", {2.5, s}); }, opt);
  for (const auto& r : rs) {
    double lo = 1, hi = 0, sum = 0;
    for (const auto& s : singles) {
      const double v = *s.at(r.cell);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      sum += v;
    }
    const double avg = *res.averaged.at(r.cell);
    ASSERT_GE(avg, lo - 1e-12);
    ASSERT_LE(avg, hi + 1e-12);
    ASSERT_NEAR(avg, sum / iters, 1e-12);
  }
}

TEST(Property, ImportanceSumsToOne) {
  Gen g(7);
  for (int i = 0; i < 20; ++i) {
    const auto dim = static_cast<std::size_t>(g.integer(1, 10));
    const auto rs = oracle::two_gaussians(static_cast<std::size_t>(g.integer(5, 30)),
                                          static_cast<std::size_t>(g.integer(5, 60)), dim, g.real(0, 5), g.rng.next());
    ForestParams p;
    p.tree_count = g.integer(1, 12);
    p.seed = g.rng.next();
    p.max_depth = g.integer(0, 5);
    p.min_leaf = g.integer(1, 4);
    const auto m = ClassifierModel::train(rs, p, {}, "");
    const auto& imp = m.feature_importance();
    ASSERT_EQ(imp.size(), dim);
    for (double v : imp) ASSERT_GE(v, 0.0);
    ASSERT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), 1.0, 1e-9) << "case " << i;
  }
}

// ---- grid -----------------------------------------------------------------

TEST(Property, TessellationPartitionsPoints) {
  Gen g(8);
  const LatLng c{46.05, 14.5};
  for (int res : {9, 10, 11}) {
    const auto b = box_around(c, 1500);
    const auto cells = tessellate(b, res);
    const std::set<CellId> set(cells.begin(), cells.end());
    for (int i = 0; i < 300; ++i) {
      const auto p = g.near(c, 1000);
      // the point lies in its owner or, within rounding at an edge, a neighbour
      const auto owner = cell_at(p, res);
      std::size_t containing = point_in_polygon(owner.boundary(), p);
      for (const auto& n : neighbors(owner)) containing += point_in_polygon(n.boundary(), p);
      ASSERT_GE(containing, 1u) << res << " case " << i;
      ASSERT_LE(containing, 3u) << res << " case " << i;
      ASSERT_EQ(set.count(owner) == 1, point_in_polygon(b, owner.center())) << res << " case " << i;
    }
  }
}

TEST(Property, FinerResolutionHasMoreCells) {
  Gen g(9);
  for (int i = 0; i < 5; ++i) {
    const LatLng c{g.real(-60, 60), g.real(-170, 170)};
    const auto b = box_around(c, g.real(1500, 3000));
    const auto n9 = tessellate(b, 9).size(), n10 = tessellate(b, 10).size(), n11 = tessellate(b, 11).size();
    ASSERT_LT(n9, n10) << "case " << i;
    ASSERT_LT(n10, n11) << "case " << i;
  }
}

TEST(Property, RingsDisjointAndSized) {
  Gen g(10);
  for (int i = 0; i < 60; ++i) {
    const int res = g.integer(9, 11);
    const auto c = oracle::random_cell(g.rng, res);
    const int k = g.integer(1, 6);
    const auto rings = k_rings(c, k).rings;
    ASSERT_EQ(rings.size(), static_cast<std::size_t>(k));
    std::set<CellId> seen{c};
    for (int j = 0; j < k; ++j) {
      if (!c.is_pentagon()) ASSERT_EQ(rings[j].size(), static_cast<std::size_t>(6 * (j + 1))) << "case " << i;
      for (const auto& cell : rings[j]) ASSERT_TRUE(seen.insert(cell).second) << "case " << i;
    }
  }
}
