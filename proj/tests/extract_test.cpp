#include <gtest/gtest.h>

#include <json.hpp>

#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

BoundarySource town_boundary() {
  BoundarySource b;
  b.kind = BoundaryKind::polygon_file;
  b.path = oracle::fixture("town/boundary.geojson");
  return b;
}

CityExtract town_extract(const std::filesystem::path& cache) {
  FetchOptions opt;
  opt.cache_root = cache;
  import_overpass_response("town", town_boundary(), oracle::read_text(oracle::fixture("town/overpass.json")), opt);
  opt.offline = true;
  return fetch_city_extract("town", town_boundary(), opt);
}

}  // namespace

TEST(Extract, FixtureTownMatchesManifest) {
  oracle::TempDir dir("town");
  const auto ex = town_extract(dir.path());
  const auto manifest = nlohmann::json::parse(oracle::read_text(oracle::fixture("town/manifest.json")));
  EXPECT_EQ(ex.features.size(), manifest["categorized"].get<std::size_t>());
  const auto counts = ex.category_counts();
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    EXPECT_EQ(counts[i], manifest["category_counts"][std::string(kCategoryNames[i])].get<std::size_t>())
        << kCategoryNames[i];
  }
  EXPECT_TRUE(ex.stations.empty());
  EXPECT_FALSE(ex.snapshot_id.empty());
}

TEST(Extract, CountsEqualRecategorizedRawElements) {
  oracle::TempDir dir("town");
  const auto ex = town_extract(dir.path());
  const auto raw = parse_overpass_json(oracle::read_text(oracle::fixture("town/overpass.json")));
  std::array<std::size_t, kCategoryCount> again{};
  for (const auto& el : raw.elements) {
    if (auto c = categorize(el.tags, default_category_rules())) again[index_of(*c)]++;
  }
  EXPECT_EQ(again, ex.category_counts());
}

TEST(Extract, NoStationTagLeaks) {
  oracle::TempDir dir("town");
  const auto ex = town_extract(dir.path());
  const auto raw = parse_overpass_json(oracle::read_text(oracle::fixture("town/overpass.json")));
  std::set<std::int64_t> excluded;
  for (const auto& el : raw.elements) {
    if (is_excluded(el.tags, default_category_rules())) excluded.insert(el.element_id);
  }
  EXPECT_EQ(excluded.size(), 4u);
  for (const auto& f : ex.features) EXPECT_FALSE(excluded.count(f.element_id)) << f.element_id;
}

TEST(Extract, CacheLayoutAndSnapshot) {
  oracle::TempDir dir("town");
  const auto ex = town_extract(dir.path());
  const ResponseCache cache(dir.path());
  EXPECT_TRUE(std::filesystem::exists(cache.extract_path("town")));
  EXPECT_EQ(cache.extract_path("town"), dir.path() / "town" / "extract.bin");
  const auto q = build_feature_query(default_category_rules(), town_boundary(), ex.boundary);
  EXPECT_EQ(cache.response_path("town", q).parent_path(), dir.path() / "town");
  EXPECT_EQ(cache.response_path("town", q).extension(), ".json");
  EXPECT_EQ(load_extract(cache.extract_path("town")).snapshot_id, ex.snapshot_id);
  const auto again = town_extract(dir.path());
  EXPECT_EQ(again.snapshot_id, ex.snapshot_id);
}

TEST(Extract, SaveLoadRoundTrip) {
  oracle::TempDir dir("town");
  auto ex = town_extract(dir.path());
  std::vector<std::string> warnings;
  attach_stations(ex, {{"s", {46.05, 14.5}, "x", StationOrigin::file}}, warnings);
  save_extract(ex, dir / "copy.bin");
  const auto back = load_extract(dir / "copy.bin");
  EXPECT_EQ(back.city_name, ex.city_name);
  EXPECT_EQ(back.boundary, ex.boundary);
  EXPECT_EQ(back.features, ex.features);
  EXPECT_EQ(back.stations, ex.stations);
  EXPECT_EQ(back.snapshot_id, ex.snapshot_id);
}

TEST(Extract, StationsChangeSnapshot) {
  oracle::TempDir dir("town");
  auto ex = town_extract(dir.path());
  const auto before = ex.snapshot_id;
  std::vector<std::string> warnings;
  attach_stations(ex, {{"s", {46.05, 14.5}, "", StationOrigin::file}, {"far", {47.0, 14.5}, "", StationOrigin::file}},
                  warnings);
  EXPECT_NE(ex.snapshot_id, before);
  EXPECT_EQ(ex.stations.size(), 1u);
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_EQ(ex.osm_snapshot_id.empty(), false);
}

TEST(Extract, QueryUsesRuleKeys) {
  const auto poly = polygon_from_bbox({46.0, 14.0, 46.01, 14.01});
  BoundarySource b;
  b.bbox = {46.0, 14.0, 46.01, 14.01};
  const auto q = build_feature_query(default_category_rules(), b, poly);
  EXPECT_NE(q.find("[out:json]"), std::string::npos);
  EXPECT_NE(q.find("out geom;"), std::string::npos);
  for (const auto& r : default_category_rules().rules) {
    if (r.category) EXPECT_NE(q.find("nwr[\"" + r.key + "\""), std::string::npos) << r.key;
  }
  EXPECT_EQ(ResponseCache::query_hash(q), ResponseCache::query_hash(q));
  EXPECT_NE(ResponseCache::query_hash(q), ResponseCache::query_hash(q + " "));
}

TEST(Extract, BoundaryNotFoundNamesCity) {
  oracle::TempDir dir("nb");
  FetchOptions opt;
  opt.cache_root = dir.path();
  BoundarySource b;
  b.kind = BoundaryKind::polygon_file;
  b.path = dir / "nope.geojson";
  try {
    fetch_city_extract("Atlantis", b, opt);
    FAIL();
  } catch (const BoundaryNotFound& e) {
    EXPECT_EQ(e.city(), "Atlantis");
  }
  // relation lookup that returns no areal relation
  opt.transport = [](const HttpRequest&) {
    return HttpResponse{200, R"({"elements":[]})", ""};
  };
  b.kind = BoundaryKind::osm_relation_id;
  b.relation_id = 42;
  EXPECT_THROW(fetch_city_extract("Atlantis", b, opt), BoundaryNotFound);
}

TEST(Extract, RelationBoundaryResolved) {
  oracle::TempDir dir("rel");
  const std::string boundary_payload = R"({"elements":[{"type":"relation","id":42,
    "tags":{"type":"boundary","boundary":"administrative"},
    "members":[{"type":"way","role":"outer","geometry":[{"lat":46.0,"lon":14.0},{"lat":46.0,"lon":14.01},
      {"lat":46.01,"lon":14.01},{"lat":46.01,"lon":14.0},{"lat":46.0,"lon":14.0}]}]}]})";
  const std::string features = R"({"elements":[{"type":"node","id":1,"lat":46.005,"lon":14.005,"tags":{"shop":"bakery"}}]})";
  int calls = 0;
  FetchOptions opt;
  opt.cache_root = dir.path();
  opt.transport = [&](const HttpRequest& r) {
    ++calls;
    const bool boundary_query = r.body.find("rel") != std::string::npos && r.body.find("42") != std::string::npos &&
                                r.body.find("shop") == std::string::npos;
    return HttpResponse{200, boundary_query ? boundary_payload : features, ""};
  };
  BoundarySource b;
  b.kind = BoundaryKind::osm_relation_id;
  b.relation_id = 42;
  const auto ex = fetch_city_extract("Square", b, opt);
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(ex.features.size(), 1u);
  EXPECT_TRUE(point_in_polygon(ex.boundary, {46.005, 14.005}));
  opt.offline = true;
  EXPECT_EQ(fetch_city_extract("Square", b, opt).snapshot_id, ex.snapshot_id);
  EXPECT_EQ(calls, 2);
}

TEST(Extract, BoundaryGeoJsonLargestPart) {
  const auto poly = parse_boundary_geojson(R"({"type":"MultiPolygon","coordinates":[
    [[[14.0,46.0],[14.001,46.0],[14.001,46.001],[14.0,46.001],[14.0,46.0]]],
    [[[15.0,46.0],[15.01,46.0],[15.01,46.01],[15.0,46.01],[15.0,46.0]]]]})");
  EXPECT_TRUE(point_in_polygon(poly, {46.005, 15.005}));
  EXPECT_THROW(parse_boundary_geojson(R"({"type":"Point","coordinates":[0,0]})"), Error);
}
