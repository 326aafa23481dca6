#include <gtest/gtest.h>

#include "bikesite/geo.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

Polygon square_around(LatLng c, double half_m) {
  const auto s = oracle::offset_m(c, 180, half_m).lat, n = oracle::offset_m(c, 0, half_m).lat;
  const auto w = oracle::offset_m(c, 270, half_m).lon, e = oracle::offset_m(c, 90, half_m).lon;
  return polygon_from_bbox({s, w, n, e});
}

}  // namespace

TEST(Geo, DistanceMatchesVincenty) {
  const LatLng pairs[][2] = {{{46.05, 14.5}, {46.0527, 14.5}},
                             {{60.17, 24.94}, {59.91, 10.75}},
                             {{36.72, -4.42}, {36.73, -4.40}},
                             {{-33.9, 18.4}, {-33.95, 18.5}}};
  for (const auto& p : pairs) {
    const double want = oracle::vincenty_m(p[0], p[1]);
    EXPECT_NEAR(geodesic_distance(p[0], p[1]), want, 1e-6 * want + 1e-6);
  }
}

TEST(Geo, LengthSumsSegments) {
  const Polyline line{{46.05, 14.5}, {46.051, 14.5}, {46.051, 14.502}};
  EXPECT_NEAR(geodesic_length(line), oracle::polyline_m(line), 1e-6);
  EXPECT_EQ(geodesic_length(Polyline{{1, 1}}), 0.0);
}

TEST(Geo, AreaMatchesEllipsoidOracle) {
  for (double lat : {0.0, 36.0, 46.05, 60.0}) {
    const auto sq = square_around({lat, 10.0}, 250);
    const double want = oracle::ellipsoid_area_m2(sq);
    EXPECT_NEAR(geodesic_area(sq), want, want * 1e-4) << lat;
  }
}

TEST(Geo, AreaSubtractsHoles) {
  auto outer = square_around({46.05, 14.5}, 100);
  auto hole = square_around({46.05, 14.5}, 20);
  Polygon with_hole = normalized(Polygon{outer.outer, {hole.outer}});
  EXPECT_NEAR(geodesic_area(with_hole), geodesic_area(outer) - geodesic_area(hole), 1e-6 * geodesic_area(outer));
  EXPECT_FALSE(point_in_polygon(with_hole, {46.05, 14.5}));
  EXPECT_TRUE(point_in_polygon(with_hole, oracle::offset_m({46.05, 14.5}, 0, 60)));
}

TEST(Geo, NormalizedIsClosedAndCounterClockwise) {
  Polygon p{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {}};  // clockwise in lon/lat, open
  const auto n = normalized(p);
  ASSERT_TRUE(is_closed(n.outer));
  double twice = 0;
  for (std::size_t i = 0; i + 1 < n.outer.size(); ++i) {
    twice += n.outer[i].lon * n.outer[i + 1].lat - n.outer[i + 1].lon * n.outer[i].lat;
  }
  EXPECT_GT(twice, 0);
}

TEST(Geo, BowTieIsInvalid) {
  Polygon bow{{{0, 0}, {1, 1}, {1, 0}, {0, 1}, {0, 0}}, {}};
  EXPECT_FALSE(is_valid_polygon(bow));
  EXPECT_TRUE(is_valid_polygon(square_around({10, 10}, 50)));
  EXPECT_FALSE(is_valid_polygon(Polygon{{{0, 0}, {1, 1}, {0, 0}}, {}}));
}

TEST(Geo, CoordinateRange) {
  EXPECT_TRUE(valid_coordinate({90, 180}));
  EXPECT_FALSE(valid_coordinate({91, 0}));
  EXPECT_FALSE(valid_coordinate({0, -180.5}));
}

TEST(Geo, ClipPolylineKeepsInsidePart) {
  const LatLng c{46.05, 14.5};
  const auto box = square_around(c, 100);
  const Polyline line{oracle::offset_m(c, 270, 300), oracle::offset_m(c, 90, 300)};
  const auto pieces = clip_polyline(line, box);
  ASSERT_EQ(pieces.size(), 1u);
  // the box edges sit 100 m east and west along the spherical offset
  const double want = oracle::vincenty_m(oracle::offset_m(c, 270, 100), oracle::offset_m(c, 90, 100));
  EXPECT_NEAR(geodesic_length(pieces[0]), want, 0.01);
  EXPECT_TRUE(clip_polyline(Polyline{oracle::offset_m(c, 0, 500), oracle::offset_m(c, 0, 600)}, box).empty());
}

TEST(Geo, ClipPolygonIntersection) {
  const LatLng c{46.05, 14.5};
  const auto box = square_around(c, 100);
  const auto shifted = square_around(oracle::offset_m(c, 90, 100), 100);  // half overlap
  const auto parts = clip_polygon(shifted, box);
  double a = 0;
  for (const auto& p : parts) a += geodesic_area(p);
  EXPECT_NEAR(a, geodesic_area(box) / 2, geodesic_area(box) * 1e-3);
}

TEST(Geo, DistanceToPolygon) {
  const LatLng c{46.05, 14.5};
  const auto box = square_around(c, 100);
  EXPECT_EQ(distance_to_polygon_m(box, c), 0.0);
  EXPECT_NEAR(distance_to_polygon_m(box, oracle::offset_m(c, 0, 600)), 500.0, 5.0);
}

TEST(Geo, BBoxOps) {
  BBox b;
  EXPECT_TRUE(b.empty());
  b.extend({1, 2});
  b.extend({3, 4});
  EXPECT_TRUE(b.contains({2, 3}));
  EXPECT_FALSE(b.contains({0, 3}));
  EXPECT_TRUE(b.intersects({2.5, 3.5, 5, 5}));
  EXPECT_FALSE(b.intersects({4, 5, 6, 6}));
  const auto poly = polygon_from_bbox(b);
  EXPECT_TRUE(is_closed(poly.outer));
  EXPECT_EQ(poly.outer.size(), 5u);
}
