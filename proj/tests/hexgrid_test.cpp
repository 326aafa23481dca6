#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "bikesite/hexgrid.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

CategorizedFeature feature(std::int64_t id, CategoryId c, ShapeClass s, Geometry g) {
  return {id, ElementKind::way, c, s, std::move(g)};
}

CityExtract extract_with(std::vector<CategorizedFeature> features, const Polygon& boundary) {
  CityExtract ex;
  ex.city_name = "test";
  ex.boundary = boundary;
  ex.features = std::move(features);
  return ex;
}

Polygon box_around(LatLng c, double half_m) {
  return polygon_from_bbox({oracle::offset_m(c, 180, half_m).lat, oracle::offset_m(c, 270, half_m).lon,
                            oracle::offset_m(c, 0, half_m).lat, oracle::offset_m(c, 90, half_m).lon});
}

double total_measure(const CityGrid& g, std::uint32_t feature) {
  double s = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto& a : g.assignments_at(i)) {
      if (a.feature == feature) s += a.measure;
    }
  }
  return s;
}

std::size_t touched_cells(const CityGrid& g, std::uint32_t feature) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (const auto& a : g.assignments_at(i)) n += a.feature == feature;
  }
  return n;
}

}  // namespace

TEST(CellId, ValidationAndText) {
  const auto c = cell_at({46.05, 14.5}, 11);
  EXPECT_EQ(c.resolution(), 11);
  EXPECT_EQ(CellId::from_string(c.to_string()), c);
  EXPECT_THROW(CellId(0x1234), GeometryError);
  EXPECT_THROW(CellId::from_string("zz"), Error);
  EXPECT_TRUE(CellId::from_string("8b0800000000fff").is_pentagon());
  EXPECT_FALSE(c.is_pentagon());
}

TEST(CellId, AreaMatchesEllipsoidOracle) {
  for (int res : {9, 10, 11}) {
    const auto c = cell_at({46.05, 14.5}, res);
    const double want = oracle::ellipsoid_area_m2(c.boundary());
    EXPECT_NEAR(cell_area_m2(c), want, want * 1e-4) << res;
  }
}

TEST(Tessellate, FixtureGoldenCounts) {
  const auto manifest = nlohmann::json::parse(oracle::read_text(oracle::fixture("town/manifest.json")));
  const auto boundary = read_boundary_geojson(oracle::fixture("town/boundary.geojson"));
  for (int res : {9, 10, 11}) {
    EXPECT_EQ(tessellate(boundary, res).size(), manifest["cell_counts"][std::to_string(res)].get<std::size_t>())
        << res;
  }
}

TEST(Tessellate, EmptyDeterministicAndChecked) {
  EXPECT_TRUE(tessellate(Polygon{}, 9).empty());
  const auto b = box_around({46.05, 14.5}, 500);
  EXPECT_EQ(tessellate(b, 10), tessellate(b, 10));
  EXPECT_THROW(tessellate(b, 12), ConfigError);
  EXPECT_THROW(tessellate(b, 8), ConfigError);
  Polygon bow{{{46.0, 14.0}, {46.01, 14.01}, {46.0, 14.01}, {46.01, 14.0}, {46.0, 14.0}}, {}};
  EXPECT_THROW(tessellate(bow, 9), GeometryError);
}

TEST(Tessellate, CentersInsideNoDuplicates) {
  const auto b = box_around({46.05, 14.5}, 400);
  const auto cells = tessellate(b, 11);
  std::set<CellId> uniq(cells.begin(), cells.end());
  EXPECT_EQ(uniq.size(), cells.size());
  EXPECT_TRUE(std::is_sorted(cells.begin(), cells.end()));
  for (const auto& c : cells) EXPECT_TRUE(point_in_polygon(b, c.center()));
}

TEST(Tessellate, HolesRespected) {
  const LatLng c{46.05, 14.5};
  const auto outer = box_around(c, 500), hole = box_around(c, 200);
  const auto with_hole = normalized(Polygon{outer.outer, {hole.outer}});
  const auto cells = tessellate(with_hole, 11);
  for (const auto& cell : cells) EXPECT_FALSE(point_in_polygon(hole, cell.center()));
  EXPECT_LT(cells.size(), tessellate(outer, 11).size());
}

TEST(Rings, SmallCases) {
  const auto c = cell_at({46.05, 14.5}, 11);
  EXPECT_TRUE(k_rings(c, 0).rings.empty());
  const auto r1 = k_rings(c, 1);
  ASSERT_EQ(r1.rings.size(), 1u);
  EXPECT_EQ(r1.rings[0].size(), 6u);
  const auto r2 = k_rings(c, 2);
  EXPECT_EQ(r2.rings[0].size(), 6u);
  EXPECT_EQ(r2.rings[1].size(), 12u);
  const auto bfs = oracle::bfs_rings(c, 2);
  EXPECT_EQ(std::set<CellId>(r2.rings[0].begin(), r2.rings[0].end()), bfs[0]);
  EXPECT_EQ(std::set<CellId>(r2.rings[1].begin(), r2.rings[1].end()), bfs[1]);
  EXPECT_EQ(neighbors(c), r1.rings[0]);
}

TEST(Rings, PentagonHasFiveNeighbors) {
  for (const char* p : {"89080000003ffff", "8a0800000007fff", "8b0800000000fff"}) {
    const auto c = CellId::from_string(p);
    const auto r = k_rings(c, 3);
    EXPECT_EQ(r.rings[0].size(), 5u);
    const auto bfs = oracle::bfs_rings(c, 3);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(std::set<CellId>(r.rings[k].begin(), r.rings[k].end()), bfs[k]) << p;
  }
}

TEST(Assign, PointGoesToOneCell) {
  const LatLng c{46.05, 14.5};
  const auto b = box_around(c, 300);
  const auto cell = cell_at(c, 11);
  auto ex = extract_with({feature(1, CategoryId::shops, ShapeClass::point, cell.center())}, b);
  AssignDiagnostics d;
  const auto g = assign_features(ex, tessellate(b, 11), &d);
  EXPECT_EQ(touched_cells(g, 0), 1u);
  ASSERT_EQ(g.assignments(cell).size(), 1u);
  EXPECT_EQ(g.assignments(cell)[0].shape, ShapeClass::point);
  EXPECT_EQ(d.assigned_features, 1u);
}

TEST(Assign, RoadAcrossTwoCellsKeepsLength) {
  // coarse cells so that a 300 m segment spans exactly two of them
  const auto a = cell_at({46.05, 14.5}, 9);
  const auto n = neighbors(a).front();
  const LatLng pa = a.center(), pb = n.center();
  const double gap = oracle::vincenty_m(pa, pb);
  const double f0 = (gap - 300.0) / 2 / gap, f1 = 1 - f0;
  const Polyline road{{pa.lat + f0 * (pb.lat - pa.lat), pa.lon + f0 * (pb.lon - pa.lon)},
                      {pa.lat + f1 * (pb.lat - pa.lat), pa.lon + f1 * (pb.lon - pa.lon)}};
  const double want = oracle::polyline_m(road);
  ASSERT_NEAR(want, 300.0, 1.0);
  auto ex = extract_with({feature(1, CategoryId::roads_drive, ShapeClass::line, road)}, box_around(pa, 2000));
  const auto g = assign_features(ex, {a, n});
  EXPECT_EQ(touched_cells(g, 0), 2u);
  EXPECT_NEAR(g.assignments(a)[0].measure + g.assignments(n)[0].measure, want, 0.1);

  // the same road over the fine grid
  const auto fine = assign_features(ex, tessellate(box_around(pa, 600), 11));
  EXPECT_GT(touched_cells(fine, 0), 5u);
  EXPECT_NEAR(total_measure(fine, 0), want, 0.1);
}

TEST(Assign, LakeInsideOneCell) {
  const auto cell = cell_at({46.05, 14.5}, 9);
  const auto lake = box_around(cell.center(), 40);
  auto ex = extract_with({feature(1, CategoryId::water, ShapeClass::area, lake)}, box_around(cell.center(), 1000));
  const auto g = assign_features(ex, tessellate(box_around(cell.center(), 1000), 9));
  ASSERT_EQ(touched_cells(g, 0), 1u);
  const double want = oracle::ellipsoid_area_m2(lake);
  EXPECT_NEAR(g.assignments(cell)[0].measure, want, want * 1e-3);
}

TEST(Assign, OutsideDroppedInvalidReported) {
  const LatLng c{46.05, 14.5};
  const auto b = box_around(c, 200);
  Polygon bow{{{46.05, 14.5}, {46.0502, 14.5002}, {46.05, 14.5002}, {46.0502, 14.5}, {46.05, 14.5}}, {}};
  auto ex = extract_with({feature(1, CategoryId::shops, ShapeClass::point, oracle::offset_m(c, 0, 5000)),
                          feature(2, CategoryId::buildings, ShapeClass::area, bow),
                          feature(3, CategoryId::shops, ShapeClass::point, c)},
                         b);
  AssignDiagnostics d;
  const auto g = assign_features(ex, tessellate(b, 11), &d);
  EXPECT_EQ(d.outside_features, 1u);
  EXPECT_EQ(d.skipped_invalid, 1u);
  EXPECT_EQ(d.assigned_features, 1u);
  EXPECT_FALSE(d.messages.empty());
  EXPECT_EQ(touched_cells(g, 0) + touched_cells(g, 1), 0u);
}

TEST(Assign, LookupOutsideGrid) {
  const auto b = box_around({46.05, 14.5}, 100);
  const auto g = assign_features(extract_with({}, b), tessellate(b, 11));
  EXPECT_THROW(g.assignments(cell_at({10, 10}, 11)), LookupError);
}

TEST(Grid, SnapshotAndGeoJson) {
  oracle::TempDir dir("grid");
  const LatLng c{46.05, 14.5};
  const auto b = box_around(c, 150);
  auto ex = extract_with({feature(1, CategoryId::shops, ShapeClass::point, c),
                          feature(2, CategoryId::roads_walk, ShapeClass::line,
                                  Polyline{oracle::offset_m(c, 270, 100), oracle::offset_m(c, 90, 100)})},
                         b);
  const auto g = assign_features(ex, tessellate(b, 11));
  save_grid(g, dir / "g.bin");
  EXPECT_EQ(load_grid(dir / "g.bin"), g);
  const auto gj = nlohmann::json::parse(grid_to_geojson(g));
  EXPECT_EQ(gj["type"], "FeatureCollection");
  ASSERT_EQ(gj["features"].size(), g.size());
  const auto& f0 = gj["features"][0];
  EXPECT_EQ(f0["geometry"]["type"], "Polygon");
  EXPECT_EQ(f0["properties"]["h3"], g.cells()[0].to_string());
  // corrupt snapshot is refused
  std::ofstream(dir / "bad.bin") << "garbage";
  EXPECT_THROW(load_grid(dir / "bad.bin"), Error);
}
