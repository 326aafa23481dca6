#include <gtest/gtest.h>

#include "bikesite/dataset.hpp"
#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

EmbeddingMatrix town_matrix(const std::filesystem::path& cache) {
  BoundarySource b;
  b.kind = BoundaryKind::polygon_file;
  b.path = oracle::fixture("town/boundary.geojson");
  FetchOptions opt;
  opt.cache_root = cache;
  import_overpass_response("town", b, oracle::read_text(oracle::fixture("town/overpass.json")), opt);
  opt.offline = true;
  const auto ex = fetch_city_extract("town", b, opt);
  return build_embedding(assign_features(ex, tessellate(ex.boundary, 11)), EmbeddingMethod::category_counting,
                         {0, CombineMethod::concatenate});
}

std::vector<LabeledRegion> synthetic(std::size_t pos, std::size_t neg) {
  const auto cells = oracle::distinct_cells(pos + neg);
  std::vector<LabeledRegion> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    out.push_back({cells[i], {static_cast<double>(i)}, i < pos ? 1 : 0});
  }
  return out;
}

std::set<CellId> cells_of(const std::vector<LabeledRegion>& rs) {
  std::set<CellId> s;
  for (const auto& r : rs) s.insert(r.cell);
  return s;
}

}  // namespace

TEST(Label, FixtureStations) {
  oracle::TempDir dir("ds");
  const auto m = town_matrix(dir.path());
  const auto stations = parse_station_csv(oracle::read_text(oracle::fixture("town/stations.csv"))).records;
  const auto labeled = label_regions(m, stations);
  ASSERT_EQ(labeled.size(), m.rows());
  EXPECT_EQ(count_positives(labeled), 7u);
  // independent recount: distinct station cells inside the grid
  std::set<CellId> want;
  for (const auto& s : stations) {
    const auto c = cell_at(s.location, 11);
    if (m.index_of(c)) want.insert(c);
  }
  std::set<CellId> got;
  for (const auto& r : labeled) {
    if (r.label) got.insert(r.cell);
  }
  EXPECT_EQ(got, want);
}

TEST(Label, ZeroAndOneStation) {
  oracle::TempDir dir("ds");
  const auto m = town_matrix(dir.path());
  EXPECT_EQ(count_positives(label_regions(m, {})), 0u);
  const auto c = m.cells()[m.rows() / 2];
  const auto one = label_regions(m, {{"x", c.center(), "", StationOrigin::file}});
  EXPECT_EQ(count_positives(one), 1u);
  EXPECT_EQ(one[m.rows() / 2].label, 1);
  std::vector<std::string> warnings;
  label_regions(m, {{"far", {10, 10}, "", StationOrigin::file}}, &warnings);
  EXPECT_EQ(warnings.size(), 1u);
}

TEST(Sample, NegativeCounts) {
  EXPECT_EQ(negative_count(100, 2.5), 250u);
  EXPECT_EQ(negative_count(50, 1.0), 50u);
  EXPECT_EQ(negative_count(3, 2.5), 8u);  // 7.5 rounds up
  EXPECT_EQ(negative_count(1, 2.5), 3u);
  const auto s = sample_training(synthetic(100, 400), {2.5, 1});
  EXPECT_EQ(s.size(), 350u);
  EXPECT_EQ(count_positives(s), 100u);
  EXPECT_EQ(sample_training(synthetic(50, 400), {1.0, 1}).size(), 100u);
}

TEST(Sample, OrderAndNoDuplicates) {
  const auto data = synthetic(20, 200);
  const auto s = sample_training(data, {3.0, 9});
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(s[i], data[i]);
  for (std::size_t i = 20; i < s.size(); ++i) EXPECT_EQ(s[i].label, 0);
  EXPECT_EQ(cells_of(s).size(), s.size());
}

TEST(Sample, SeedDeterminism) {
  const auto data = synthetic(20, 200);
  EXPECT_EQ(sample_training(data, {2.5, 3}), sample_training(data, {2.5, 3}));
  EXPECT_NE(sample_training(data, {2.5, 3}), sample_training(data, {2.5, 4}));
}

TEST(Sample, Errors) {
  try {
    sample_training(synthetic(10, 20), {2.5, 0});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("ratio 2.5 requires 25, available 20"), std::string::npos) << e.what();
  }
  EXPECT_THROW((SamplingSpec{0.5, 0}.validate()), ConfigError);
  EXPECT_THROW((SamplingSpec{5.5, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((SamplingSpec{5.0, 0}.validate()));
  EXPECT_THROW(sample_training(synthetic(10, 100), {6.0, 0}), ConfigError);
}

TEST(Split, SameCityDisjointStratified) {
  const auto data = synthetic(40, 300);
  const auto split = build_same_city_split(data, "c", {2.5, 7});
  EXPECT_EQ(split.train.size() + split.eval.size(), 140u);
  const auto tr = cells_of(split.train), ev = cells_of(split.eval);
  for (const auto& c : ev) EXPECT_FALSE(tr.count(c));
  EXPECT_EQ(count_positives(split.eval), 12u);  // round(0.3 * 40)
  EXPECT_EQ(split.eval.size(), 42u);            // 12 + round(0.3 * 100)
  EXPECT_EQ(split.mode, SplitMode::same_city);
  EXPECT_THROW(build_same_city_split(data, "c", {2.5, 7}, 1.0), ConfigError);
}

TEST(Split, TransferCoversEvalCity) {
  const auto a = synthetic(30, 200);
  const auto split = build_transfer_split(a, "A", a, "A", {2.5, 1});
  EXPECT_EQ(split.eval, a);
  EXPECT_EQ(split.train.size(), 105u);
  EXPECT_EQ(split.mode, SplitMode::transfer);
  const auto csv = split_to_csv(split);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "h3,label,role");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 105 + 230);
  EXPECT_NE(csv.find("," + std::to_string(a[0].label) + ",train"), std::string::npos);
}

TEST(Split, FeatureSpaceMismatch) {
  EmbeddingConfig k5, k2;
  k2.neighborhood.k = 2;
  const auto cells = oracle::distinct_cells(2);
  EmbeddingMatrix a("a", k5, {"x"}), b("b", k2, {"x"});
  a.append(cells[0], std::vector<double>{1.0});
  b.append(cells[1], std::vector<double>{1.0});
  EXPECT_THROW(build_transfer_split(a, {}, b, {}, {1.0, 0}), ConfigError);
  EXPECT_THROW(require_same_feature_space(a, EmbeddingMatrix("c", k5, {"y"})), ConfigError);
  EXPECT_NO_THROW(require_same_feature_space(a, EmbeddingMatrix("c", k5, {"x"})));
}
