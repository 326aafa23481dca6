#include <gtest/gtest.h>

#include "bikesite/errors.hpp"
#include "bikesite/osm.hpp"

using namespace bikesite;

namespace {

const char* kSample = R"({
  "version": 0.6,
  "osm3s": {"timestamp_osm_base": "2021-05-01T00:00:00Z"},
  "elements": [
    {"type": "node", "id": 1, "lat": 46.05, "lon": 14.5, "tags": {"amenity": "cafe"}},
    {"type": "way", "id": 2, "tags": {"highway": "residential"},
     "geometry": [{"lat": 46.05, "lon": 14.50}, {"lat": 46.051, "lon": 14.501}]},
    {"type": "way", "id": 3, "tags": {"building": "yes"},
     "geometry": [{"lat": 46.0, "lon": 14.0}, {"lat": 46.0, "lon": 14.001}, {"lat": 46.001, "lon": 14.001},
                  {"lat": 46.001, "lon": 14.0}, {"lat": 46.0, "lon": 14.0}]},
    {"type": "way", "id": 4, "tags": {"highway": "pedestrian"},
     "geometry": [{"lat": 46.0, "lon": 14.0}, {"lat": 46.0, "lon": 14.001}, {"lat": 46.001, "lon": 14.001},
                  {"lat": 46.0, "lon": 14.0}]},
    {"type": "relation", "id": 5, "tags": {"type": "multipolygon", "natural": "water"},
     "members": [
       {"type": "way", "role": "outer", "geometry": [{"lat": 46.0, "lon": 14.0}, {"lat": 46.0, "lon": 14.01}]},
       {"type": "way", "role": "outer", "geometry": [{"lat": 46.0, "lon": 14.01}, {"lat": 46.01, "lon": 14.01},
                                                     {"lat": 46.01, "lon": 14.0}, {"lat": 46.0, "lon": 14.0}]},
       {"type": "way", "role": "inner", "geometry": [{"lat": 46.004, "lon": 14.004}, {"lat": 46.006, "lon": 14.004},
                                                     {"lat": 46.006, "lon": 14.006}, {"lat": 46.004, "lon": 14.004}]}]},
    {"type": "relation", "id": 6, "tags": {"type": "multipolygon", "natural": "water"},
     "members": [{"type": "way", "role": "outer", "geometry": [{"lat": 46.0, "lon": 14.0}, {"lat": 46.0, "lon": 14.01}]}]},
    {"type": "way", "id": 7, "tags": {"historic": "city_wall"},
     "geometry": [{"lat": 46.0, "lon": 14.0}, {"lat": 46.0, "lon": 14.001}, {"lat": 46.0, "lon": 14.002}]},
    {"type": "way", "id": 8, "tags": {"highway": "service"}, "geometry": [{"lat": 46.0, "lon": 14.0}]}
  ]})";

}  // namespace

TEST(Overpass, ParsesKindsAndGeometry) {
  const auto r = parse_overpass_json(kSample);
  EXPECT_EQ(r.osm_base_timestamp, "2021-05-01T00:00:00Z");
  ASSERT_EQ(r.elements.size(), 6u);
  EXPECT_EQ(r.elements[0].kind, ElementKind::node);
  EXPECT_TRUE(std::holds_alternative<LatLng>(r.elements[0].geometry));
  EXPECT_EQ(r.elements[0].fetched_at, "2021-05-01T00:00:00Z");
  EXPECT_TRUE(std::holds_alternative<Polyline>(r.elements[1].geometry));
  const auto* bld = std::get_if<Polygon>(&r.elements[2].geometry);
  ASSERT_TRUE(bld);
  EXPECT_TRUE(is_closed(bld->outer));
  // closed highway stays linear
  EXPECT_TRUE(std::holds_alternative<Polyline>(r.elements[3].geometry));
  const auto* lake = std::get_if<Polygon>(&r.elements[4].geometry);
  ASSERT_TRUE(lake);
  EXPECT_EQ(r.elements[4].kind, ElementKind::relation);
  EXPECT_EQ(lake->holes.size(), 1u);
  // broken relation and 1-point way are dropped and reported
  EXPECT_EQ(r.dropped.size(), 2u);
}

TEST(Overpass, MalformedPayloadReportsOffset) {
  try {
    parse_overpass_json(R"({"elements": [ {"type": "node", "id": 1,, }]})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_GT(e.byte_offset(), 20u);
    EXPECT_LT(e.byte_offset(), 45u);
  }
  EXPECT_THROW(parse_overpass_json("[]"), ParseError);
  EXPECT_THROW(parse_overpass_json(R"({"elements":[{"type":"node","id":9,"lat":91,"lon":0}]})"), ParseError);
  EXPECT_THROW(parse_overpass_json(R"({"elements":[{"type":"way","id":9}]})"), ParseError);
}

TEST(Overpass, ServerRemarkIsNetworkError) {
  EXPECT_THROW(parse_overpass_json(R"({"elements":[],"remark":"runtime error: Query timed out"})"), NetworkError);
}

TEST(Overpass, AssembleRings) {
  auto rings = assemble_rings({{{0, 0}, {0, 1}}, {{1, 1}, {0, 1}}, {{1, 1}, {0, 0}}});
  ASSERT_TRUE(rings);
  ASSERT_EQ(rings->size(), 1u);
  EXPECT_TRUE(is_closed(rings->front()));
  EXPECT_EQ(rings->front().size(), 4u);
  EXPECT_FALSE(assemble_rings({{{0, 0}, {0, 1}}, {{2, 2}, {3, 3}}}));
}

TEST(Overpass, CategorizeElementShapes) {
  const auto r = parse_overpass_json(kSample);
  const auto& rules = default_category_rules();
  auto cafe = categorize_element(r.elements[0], rules);
  ASSERT_TRUE(cafe);
  EXPECT_EQ(cafe->category, CategoryId::sustenance);
  EXPECT_EQ(cafe->shape_class, ShapeClass::point);
  auto road = categorize_element(r.elements[1], rules);
  EXPECT_EQ(road->shape_class, ShapeClass::line);
  auto bld = categorize_element(r.elements[2], rules);
  EXPECT_EQ(bld->shape_class, ShapeClass::area);
  auto ring_road = categorize_element(r.elements[3], rules);
  EXPECT_EQ(ring_road->category, CategoryId::roads_walk);
  EXPECT_EQ(ring_road->shape_class, ShapeClass::line);
  auto lake = categorize_element(r.elements[4], rules);
  EXPECT_EQ(lake->category, CategoryId::water);
  EXPECT_EQ(lake->shape_class, ShapeClass::area);
  // open non-road way collapses to its middle vertex
  auto wall = categorize_element(r.elements[5], rules);
  ASSERT_TRUE(wall);
  EXPECT_EQ(wall->shape_class, ShapeClass::point);
  EXPECT_EQ(std::get<LatLng>(wall->geometry), (LatLng{46.0, 14.001}));
}

TEST(Overpass, LineOnlyForRoadsAndWater) {
  const auto r = parse_overpass_json(kSample);
  for (const auto& el : r.elements) {
    if (auto f = categorize_element(el, default_category_rules())) {
      if (f->shape_class == ShapeClass::line) {
        EXPECT_TRUE(is_road(f->category) || f->category == CategoryId::water);
      }
    }
  }
}
