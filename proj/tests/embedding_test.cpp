#include <gtest/gtest.h>

#include <numeric>

#include <json.hpp>

#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "bikesite/embedding.hpp"
#include "bikesite/random.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

CityGrid town_grid(const std::filesystem::path& cache, int res) {
  BoundarySource b;
  b.kind = BoundaryKind::polygon_file;
  b.path = oracle::fixture("town/boundary.geojson");
  FetchOptions opt;
  opt.cache_root = cache;
  import_overpass_response("town", b, oracle::read_text(oracle::fixture("town/overpass.json")), opt);
  opt.offline = true;
  const auto ex = fetch_city_extract("town", b, opt);
  return assign_features(ex, tessellate(ex.boundary, res));
}

std::size_t column(EmbeddingMethod m, const std::string& name) {
  const auto cols = base_columns(m);
  const auto it = std::find(cols.begin(), cols.end(), name);
  EXPECT_NE(it, cols.end()) << name;
  return static_cast<std::size_t>(it - cols.begin());
}

Polygon box_around(LatLng c, double half_m) {
  return polygon_from_bbox({oracle::offset_m(c, 180, half_m).lat, oracle::offset_m(c, 270, half_m).lon,
                            oracle::offset_m(c, 0, half_m).lat, oracle::offset_m(c, 90, half_m).lon});
}

EmbeddingMatrix matrix_of(const std::vector<std::vector<double>>& rows) {
  const auto cells = oracle::distinct_cells(rows.size());
  std::vector<std::string> cols;
  for (std::size_t i = 0; i < rows.front().size(); ++i) cols.push_back("c" + std::to_string(i));
  EmbeddingMatrix m("m", EmbeddingConfig{}, cols);
  for (std::size_t i = 0; i < rows.size(); ++i) m.append(cells[i], rows[i]);
  return m;
}

}  // namespace

TEST(Embedding, Columns) {
  EXPECT_EQ(base_columns(EmbeddingMethod::category_counting).size(), kCountDimension);
  const auto shape = base_columns(EmbeddingMethod::shape_analysis);
  ASSERT_EQ(shape.size(), kShapeDimension);
  EXPECT_EQ(shape[0], "water_area");
  EXPECT_EQ(shape[1], "roads_bike_length");
  EXPECT_EQ(shape[3], "roads_walk_length");
  EXPECT_EQ(std::set<std::string>(shape.begin(), shape.end()).size(), kShapeDimension);
  EXPECT_EQ(parse_combine_method("squared_diminishing"), CombineMethod::squared_diminishing);
  EXPECT_THROW(parse_embedding_method("word2vec"), ConfigError);
}

TEST(Embedding, FixtureChosenCellCounts) {
  oracle::TempDir dir("emb");
  const auto manifest = nlohmann::json::parse(oracle::read_text(oracle::fixture("town/manifest.json")));
  const auto& chosen = manifest["chosen_cell"];
  const auto grid = town_grid(dir.path(), chosen["resolution"].get<int>());
  const auto cell = CellId::from_string(chosen["h3"].get<std::string>());
  ASSERT_TRUE(grid.contains(cell));
  const auto v = embed_count(grid, cell);
  ASSERT_EQ(v.dimension(), kCountDimension);
  const auto want = chosen["counts"].get<std::vector<double>>();
  EXPECT_EQ(v.values, want);
}

TEST(Embedding, EmptyCellIsZero) {
  const auto cell = cell_at({46.05, 14.5}, 11);
  CityGrid g("g", 11, {cell});
  EXPECT_EQ(embed_count(g, cell).values, std::vector<double>(20, 0.0));
  EXPECT_EQ(embed_shape(g, cell).values, std::vector<double>(36, 0.0));
}

TEST(Embedding, ShapeBuildingAndShops) {
  const auto cell = cell_at({46.05, 14.5}, 11);
  CityGrid g("g", 11, {cell});
  auto& a = g.assignments_at(0);
  a.push_back({0, CategoryId::buildings, ShapeClass::area, 500.0});
  a.push_back({1, CategoryId::shops, ShapeClass::point, 0.0});
  a.push_back({2, CategoryId::shops, ShapeClass::point, 0.0});
  const auto v = embed_shape(g, cell).values;
  const auto m = EmbeddingMethod::shape_analysis;
  EXPECT_DOUBLE_EQ(v[column(m, "buildings_area")], 500.0);
  EXPECT_DOUBLE_EQ(v[column(m, "shops_points")], 2.0);
  EXPECT_DOUBLE_EQ(std::accumulate(v.begin(), v.end(), 0.0), 502.0);
  const auto c = embed_count(g, cell).values;
  EXPECT_EQ(c[index_of(CategoryId::shops)], 2.0);
  EXPECT_EQ(c[index_of(CategoryId::buildings)], 1.0);
}

TEST(Embedding, LakeCoveringCellGivesCellArea) {
  const auto cell = cell_at({46.05, 14.5}, 11);
  CityExtract ex;
  ex.city_name = "lake";
  ex.boundary = box_around(cell.center(), 500);
  ex.features.push_back({1, ElementKind::way, CategoryId::water, ShapeClass::area, box_around(cell.center(), 200)});
  const auto g = assign_features(ex, {cell});
  const auto v = embed_shape(g, cell).values;
  const double want = oracle::ellipsoid_area_m2(cell.boundary());
  EXPECT_NEAR(v[column(EmbeddingMethod::shape_analysis, "water_area")], want, want * 1e-3);
}

TEST(Combine, Examples) {
  const std::vector<double> c{1, 2, 3};
  EXPECT_EQ(combine_neighborhood(c, {}, {0, CombineMethod::average}), c);
  EXPECT_EQ(combine_neighborhood(c, {}, {0, CombineMethod::concatenate}), c);
  for (auto m : {CombineMethod::average, CombineMethod::diminishing, CombineMethod::squared_diminishing}) {
    const auto out = combine_neighborhood(c, {c, c, c}, {3, m});
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], c[i], 1e-12);
  }
  // K=1 squared diminishing: (c + r/4) / 1.25
  const std::vector<double> r{5, 6, 7};
  const auto out = combine_neighborhood(c, {r}, {1, CombineMethod::squared_diminishing});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(out[i], (c[i] + 0.25 * r[i]) / 1.25, 1e-12);
  EXPECT_EQ(combination_weights({2, CombineMethod::diminishing}), (std::vector<double>{1.0, 0.5, 1.0 / 3}));

  const std::vector<double> c20(20, 1.0);
  const auto cat = combine_neighborhood(c20, std::vector<std::vector<double>>(5, std::vector<double>(20, 2.0)),
                                        {5, CombineMethod::concatenate});
  EXPECT_EQ(cat.size(), 120u);
  EXPECT_EQ(combined_dimension(20, {5, CombineMethod::concatenate}), 120u);
  EXPECT_EQ(combined_dimension(20, {5, CombineMethod::average}), 20u);
  EXPECT_THROW(combine_neighborhood(c, {r}, {2, CombineMethod::average}), DataError);
  EXPECT_THROW(combine_neighborhood(c, {}, {-1, CombineMethod::average}), ConfigError);
}

TEST(Combine, MatchesNaiveOracle) {
  Rng rng(5);
  for (auto m : {CombineMethod::concatenate, CombineMethod::average, CombineMethod::diminishing,
                 CombineMethod::squared_diminishing}) {
    for (int k = 0; k <= 6; ++k) {
      std::vector<double> c(7);
      for (auto& x : c) x = rng.uniform() * 10;
      std::vector<std::vector<double>> rings(k, std::vector<double>(7));
      for (auto& ring : rings) {
        for (auto& x : ring) x = rng.uniform() * 10;
      }
      const auto got = combine_neighborhood(c, rings, {k, m});
      const auto want = oracle::naive_combine(c, rings, m);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
    }
  }
}

TEST(Embedding, BuildUsesInteriorRings) {
  const auto center = cell_at({46.05, 14.5}, 11);
  auto cells = neighbors(center);
  cells.push_back(center);
  std::sort(cells.begin(), cells.end());
  CityGrid g("g", 11, cells);
  // one shop in the center, one in a single neighbour
  g.assignments_at(*g.index_of(center)).push_back({0, CategoryId::shops, ShapeClass::point, 0});
  g.assignments_at(*g.index_of(neighbors(center)[0])).push_back({1, CategoryId::shops, ShapeClass::point, 0});
  const auto m = build_embedding(g, EmbeddingMethod::category_counting, {2, CombineMethod::concatenate});
  ASSERT_EQ(m.dimension(), 60u);
  ASSERT_EQ(m.rows(), 7u);
  const auto row = m.row(*m.index_of(center));
  const auto shop = index_of(CategoryId::shops);
  EXPECT_EQ(row[shop], 1.0);
  EXPECT_NEAR(row[20 + shop], 1.0 / 6, 1e-12);
  // ring 2 lies entirely outside the grid
  EXPECT_EQ(row[40 + shop], 0.0);
}

TEST(Normalize, Examples) {
  auto m = normalize_city(matrix_of({{0, 3}, {5, 3}, {10, 3}}));
  EXPECT_TRUE(m.normalized());
  EXPECT_EQ(m.row(0)[0], 0.0);
  EXPECT_EQ(m.row(1)[0], 0.5);
  EXPECT_EQ(m.row(2)[0], 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(m.row(i)[1], 0.0);
  EXPECT_EQ(m.normalization()->min, (std::vector<double>{0, 3}));
  EXPECT_EQ(m.normalization()->max, (std::vector<double>{10, 3}));
  EXPECT_THROW(normalize_city(m), DataError);
  EXPECT_THROW(normalize_city(EmbeddingMatrix("e", {}, {"a"})), DataError);

  const auto other = apply_normalization(matrix_of({{20, 3}, {5, 4}}), *m.normalization());
  EXPECT_EQ(other.row(0)[0], 2.0);
  EXPECT_EQ(other.row(1)[0], 0.5);
}

TEST(Embedding, TextArtifactsAndSnapshot) {
  oracle::TempDir dir("emb");
  auto m = matrix_of({{0, 0.1}, {2, 0.25}});
  const auto csv = embedding_to_csv(m);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "h3,c0,c1");
  EXPECT_NE(csv.find(m.cells()[1].to_string() + ",2,0.25"), std::string::npos);
  EXPECT_THROW(normalization_to_json(m), DataError);
  const auto n = normalize_city(m);
  const auto side = normalization_to_json(n);
  EXPECT_EQ(normalization_from_json(side), *n.normalization());
  EXPECT_EQ(nlohmann::json::parse(side)["fingerprint"], n.config().fingerprint());
  save_embedding(n, dir / "m.bin");
  EXPECT_EQ(load_embedding(dir / "m.bin"), n);
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(Embedding, Fingerprint) {
  EmbeddingConfig c;
  EXPECT_EQ(c.fingerprint(), "res=11;embedding=category_counting;neighborhood=squared_diminishing;k=5");
  c.neighborhood.k = 2;
  c.method = EmbeddingMethod::shape_analysis;
  EXPECT_EQ(c.fingerprint(), "res=11;embedding=shape_analysis;neighborhood=squared_diminishing;k=2");
}
