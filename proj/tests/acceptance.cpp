// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include <spdlog/spdlog.h>

#include "bikesite/dataset.hpp"
#include "bikesite/embedding.hpp"
#include "bikesite/hexgrid.hpp"
#include "bikesite/model.hpp"
#include "bikesite/pipeline.hpp"
#include "bikesite/random.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = limit_s <= 0 || s < limit_s;
  const bool ok = o.pass && in_time;
  if (!ok) ++failures;
  char timing[64];
  if (limit_s > 0) std::snprintf(timing, sizeof timing, "%.2f s, limit %.0f s", s, limit_s);
  else std::snprintf(timing, sizeof timing, "%.2f s", s);
  std::printf("%s  %-28s %s [%s]%s\n", ok ? "PASS" : "FAIL", name, o.detail.c_str(), timing,
              in_time ? "" : " over time limit");
  std::fflush(stdout);
}

Polygon box_around(LatLng c, double half_m) {
  return polygon_from_bbox({oracle::offset_m(c, 180, half_m).lat, oracle::offset_m(c, 270, half_m).lon,
                            oracle::offset_m(c, 0, half_m).lat, oracle::offset_m(c, 90, half_m).lon});
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.4g", v);
  return b;
}

PipelineConfig twin_config(const oracle::TempDir& dir, const std::string& out) {
  auto cfg = load_pipeline_config(oracle::fixture("twin/pipeline.json"));
  cfg.cache_dir = dir / "cache";
  cfg.output.dir = dir / out;
  return cfg;
}

// ---- criteria ---------------------------------------------------------------

Outcome combination_oracle() {
  Rng rng(101);
  double worst = 0;
  std::size_t dim_errors = 0;
  const CombineMethod methods[] = {CombineMethod::concatenate, CombineMethod::average, CombineMethod::diminishing,
                                   CombineMethod::squared_diminishing};
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = rng.below(2) ? 36 : 20;
    const int k = static_cast<int>(rng.below(11));
    std::vector<double> c(n);
    for (auto& x : c) x = rng.uniform() * 100;
    std::vector<std::vector<double>> rings(k, std::vector<double>(n));
    for (auto& r : rings) {
      for (auto& x : r) x = rng.uniform() * 100;
    }
    for (auto m : methods) {
      const auto got = combine_neighborhood(c, rings, {k, m});
      const auto want = oracle::naive_combine(c, rings, m);
      if (got.size() != want.size()) return {false, "dimension mismatch against the naive route"};
      for (std::size_t j = 0; j < got.size(); ++j) worst = std::max(worst, std::abs(got[j] - want[j]));
      if (m == CombineMethod::concatenate && got.size() != n * static_cast<std::size_t>(k + 1)) ++dim_errors;
    }
  }
  return {worst <= 1e-9 && dim_errors == 0,
          "4000 combinations, max |diff| " + fmt(worst) + ", concat dimension errors " + std::to_string(dim_errors)};
}

Outcome ring_bfs() {
  Rng rng(202);
  std::size_t mismatches = 0, checked = 0;
  for (int res : {9, 10, 11}) {
    for (int i = 0; i < 200; ++i) {
      const auto c = oracle::random_cell(rng, res);
      const auto got = k_rings(c, 10);
      const auto want = oracle::bfs_rings(c, 10);
      for (int k = 0; k < 10; ++k) {
        ++checked;
        if (std::set<CellId>(got.rings[k].begin(), got.rings[k].end()) != want[k]) ++mismatches;
      }
    }
  }
  return {mismatches == 0, std::to_string(checked) + " rings (600 cells, K=1..10), mismatches " +
                               std::to_string(mismatches)};
}

Outcome clipping_conservation() {
  Rng rng(303);
  double worst = 0;
  int lines = 0, areas = 0;
  for (int i = 0; i < 40; ++i) {
    const LatLng c{-50 + 100 * rng.uniform(), -170 + 340 * rng.uniform()};
    const int res = 9 + static_cast<int>(rng.below(3));
    CityExtract ex;
    ex.city_name = "clip";
    ex.boundary = box_around(c, 1500);
    // a bent road and a rotated quadrilateral, both well inside the boundary
    Polyline road;
    for (int v = 0; v < 4; ++v) road.push_back(oracle::offset_m(c, 360 * rng.uniform(), 900 * rng.uniform()));
    Ring quad;
    const double rot = 90 * rng.uniform();
    for (int v = 0; v < 4; ++v) quad.push_back(oracle::offset_m(c, rot + 90 * v, 300 + 400 * rng.uniform()));
    quad.push_back(quad.front());
    ex.features.push_back({1, ElementKind::way, CategoryId::roads_drive, ShapeClass::line, road});
    ex.features.push_back({2, ElementKind::way, CategoryId::buildings, ShapeClass::area,
                           normalized(Polygon{quad, {}})});
    const auto grid = assign_features(ex, tessellate(box_around(c, 1500), res));
    double len = 0, area = 0;
    std::size_t line_cells = 0, area_cells = 0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
      for (const auto& a : grid.assignments_at(j)) {
        if (a.feature == 0) len += a.measure, ++line_cells;
        if (a.feature == 1) area += a.measure, ++area_cells;
      }
    }
    const double want_len = oracle::polyline_m(road);
    const double want_area = oracle::ellipsoid_area_m2(Polygon{quad, {}});
    worst = std::max({worst, std::abs(len - want_len) / want_len, std::abs(area - want_area) / want_area});
    lines += line_cells > 1;
    areas += area_cells > 1;
  }
  return {worst <= 1e-3 && lines == 40 && areas == 40,
          "80 features split over " + std::to_string(lines + areas) + "/80 multi-cell cases, max rel error " +
              fmt(worst)};
}

Outcome normalization() {
  Rng rng(404);
  std::size_t bad = 0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t rows = 2 + rng.below(40), cols = 1 + rng.below(10);
    const auto cells = oracle::distinct_cells(rows);
    std::vector<std::string> names;
    for (std::size_t j = 0; j < cols; ++j) names.push_back("c" + std::to_string(j));
    EmbeddingMatrix m("n", EmbeddingConfig{}, names);
    std::vector<bool> constant(cols);
    std::vector<double> level(cols);
    for (std::size_t j = 0; j < cols; ++j) {
      constant[j] = rng.below(3) == 0;
      level[j] = std::floor(rng.uniform() * 50);
    }
    for (std::size_t i = 0; i < rows; ++i) {
      std::vector<double> row(cols);
      for (std::size_t j = 0; j < cols; ++j) row[j] = constant[j] ? level[j] : std::floor(rng.uniform() * 20) * 0.5;
      m.append(cells[i], row);
    }
    // a column may come out constant by chance; recompute from the data
    for (std::size_t j = 0; j < cols; ++j) {
      bool same = true;
      for (std::size_t i = 1; i < rows; ++i) same = same && m.row(i)[j] == m.row(0)[j];
      constant[j] = same;
    }
    const auto n = normalize_city(m);
    for (std::size_t j = 0; j < cols; ++j) {
      double lo = 1, hi = 0;
      for (std::size_t i = 0; i < rows; ++i) {
        const double v = n.row(i)[j];
        if (!(v >= 0.0 && v <= 1.0)) ++bad;
        if (constant[j] && v != 0.0) ++bad;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (!constant[j] && (lo != 0.0 || hi != 1.0)) ++bad;
    }
  }
  return {bad == 0, "50 random matrices, violations " + std::to_string(bad)};
}

Outcome sampling() {
  const auto cells = oracle::distinct_cells(800);
  std::size_t bad = 0, runs = 0;
  Rng rng(505);
  for (double ratio : {1.0, 2.0, 2.5, 3.0, 4.0, 5.0}) {
    for (int t = 0; t < 10; ++t) {
      const std::size_t pos = 1 + rng.below(120);
      std::vector<LabeledRegion> data;
      for (std::size_t i = 0; i < cells.size(); ++i) data.push_back({cells[i], {static_cast<double>(i)}, 0});
      for (std::size_t i = 0; i < pos; ++i) data[rng.below(data.size())].label = 1;
      const std::size_t p = count_positives(data);
      const SamplingSpec spec{ratio, rng.next()};
      const auto a = sample_training(data, spec);
      const auto b = sample_training(data, spec);
      const auto want = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(p)));
      std::set<CellId> uniq;
      for (const auto& r : a) uniq.insert(r.cell);
      bad += a.size() - count_positives(a) != want;
      bad += count_positives(a) != p;
      bad += uniq.size() != a.size();
      bad += !(a == b);
      ++runs;
    }
  }
  return {bad == 0, std::to_string(runs) + " draws over 6 ratios, violations " + std::to_string(bad)};
}

Outcome metrics() {
  Rng rng(606);
  std::size_t bad = 0;
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + rng.below(80);
    const auto cells = oracle::distinct_cells(n);
    PredictionMap pred;
    std::vector<LabeledRegion> truth;
    std::vector<double> probs;
    std::vector<int> labels;
    const double pos_rate = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::floor(rng.uniform() * 21) / 20;
      const int y = rng.uniform() < pos_rate;
      pred.cells[cells[i]] = p;
      truth.push_back({cells[i], {}, y});
      probs.push_back(p);
      labels.push_back(y);
    }
    const double thr = 0.05 + 0.9 * rng.uniform();
    const auto got = evaluate(pred, truth, thr);
    const auto want = oracle::brute_confusion(probs, labels, thr);
    bad += got.tp != want.tp || got.fp != want.fp || got.fn != want.fn || got.tn != want.tn;
    bad += got.accuracy != want.accuracy || got.precision != want.precision || got.recall != want.recall ||
           got.f1 != want.f1;
    bad += got.flags.precision_undefined != want.precision_zero_div;
    bad += got.flags.recall_undefined != want.recall_zero_div;
    bad += got.flags.f1_undefined != want.f1_zero_div;
  }
  // degenerate cases
  const auto none = compute_metrics(0, 0, 5, 5);
  bad += !(none.precision == 0 && none.f1 == 0 && none.flags.precision_undefined && none.flags.f1_undefined);
  const auto nopos = compute_metrics(0, 3, 0, 7);
  bad += !(nopos.recall == 0 && nopos.flags.recall_undefined && nopos.flags.f1_undefined);
  const auto empty = compute_metrics(0, 0, 0, 0);
  bad += !(empty.accuracy == 0 && empty.flags.accuracy_undefined);
  return {bad == 0, "500 configurations + 3 degenerate cases, mismatches " + std::to_string(bad)};
}

Outcome separability() {
  double sum = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto data = oracle::two_gaussians(80, 400, 20, 10.0, 1000 + seed);
    const auto split = build_same_city_split(data, "synthetic", {2.5, seed});
    ForestParams p;
    p.seed = seed;
    const auto model = train(split, p, "synthetic");
    sum += evaluate(predict_proba(model, split.eval), split.eval).f1;
  }
  const double mean = sum / 10;
  return {mean >= 0.95, "mean F1 " + fmt(mean) + " over 10 seeds (need >= 0.95)"};
}

Outcome fixture_e2e() {
  oracle::TempDir dir("acc-e2e");
  const auto cfg = twin_config(dir, "out");
  if (cfg.resolution != 11 || cfg.neighborhood.k != 5 || cfg.iterations != 100 || cfg.sampling.ratio != 2.5 ||
      cfg.neighborhood.method != CombineMethod::squared_diminishing ||
      cfg.embedding != EmbeddingMethod::category_counting) {
    return {false, "fixture config is not the default setting"};
  }
  const auto art = run_pipeline(cfg);
  if (art.experiments.size() != 2) return {false, "expected two same-city experiments"};
  double sum = 0;
  std::string per;
  for (const auto& r : art.experiments) {
    sum += r.result.mean.f1;
    per += " " + r.eval_city + "=" + fmt(r.result.mean.f1);
  }
  const double mean = sum / 2;
  return {mean >= 0.6, "same-city mean F1 " + fmt(mean) + " (" + per.substr(1) + "; need >= 0.6)"};
}

Outcome transfer_shape() {
  oracle::TempDir dir("acc-transfer");
  const auto cfg = twin_config(dir, "out");
  const auto a = run_transfer(cfg);
  const auto b = run_transfer(cfg);
  bool ok = a.cities.size() == 2 && a.recall.size() == 2;
  for (const auto& row : a.recall) {
    ok = ok && row.size() == 2;
    for (const auto& v : row) ok = ok && v && *v >= 0.0 && *v <= 1.0;
  }
  ok = ok && a.digest() == b.digest();
  std::string cells;
  for (const auto& row : a.recall) {
    for (const auto& v : row) cells += (cells.empty() ? "" : " ") + (v ? fmt(*v) : std::string("NA"));
  }
  return {ok, "2x2 recall [" + cells + "], digest " + a.digest().substr(0, 12) +
                  (a.digest() == b.digest() ? " stable" : " differs")};
}

Outcome determinism() {
  oracle::TempDir dir("acc-det");
  auto c1 = twin_config(dir, "run1");
  auto c2 = twin_config(dir, "run2");
  c1.iterations = c2.iterations = 10;
  c1.output.formats = c2.output.formats = {HeatmapFormat::geojson, HeatmapFormat::html};
  const auto a1 = run_pipeline(c1);
  const auto a2 = run_pipeline(c2);
  if (a1.files != a2.files) return {false, "artifact lists differ"};
  std::size_t compared = 0, differ = 0;
  for (const auto& f : a1.files) {
    const auto ext = f.extension().string();
    if (ext != ".csv" && ext != ".geojson" && ext != ".json" && ext != ".html") continue;
    ++compared;
    differ += oracle::read_text(a1.dir / f) != oracle::read_text(a2.dir / f);
  }
  return {differ == 0 && compared > 0,
          std::to_string(compared) + " text artifacts compared, " + std::to_string(differ) + " differ"};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  criterion("combination-oracle", 10, combination_oracle);
  criterion("ring-bfs", 30, ring_bfs);
  criterion("clipping-conservation", 10, clipping_conservation);
  criterion("normalization", 0, normalization);
  criterion("sampling-contract", 0, sampling);
  criterion("metrics-arithmetic", 0, metrics);
  criterion("synthetic-separability", 60, separability);
  criterion("fixture-end-to-end", 300, fixture_e2e);
  criterion("transfer-harness", 0, transfer_shape);
  criterion("pipeline-determinism", 0, determinism);
  std::printf("%s: %d failing\n", failures ? "FAILED" : "OK", failures);
  return failures ? 1 : 0;
}
