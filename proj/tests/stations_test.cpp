#include <gtest/gtest.h>

#include <fstream>

#include <json.hpp>

#include "bikesite/errors.hpp"
#include "bikesite/stations.hpp"
#include "oracles.hpp"

using namespace bikesite;

TEST(Stations, FixtureCsvDeduplicates) {
  const auto manifest = nlohmann::json::parse(oracle::read_text(oracle::fixture("town/manifest.json")));
  const auto load = parse_station_csv(oracle::read_text(oracle::fixture("town/stations.csv")), "TownBike");
  EXPECT_EQ(manifest["stations"]["rows"].get<int>(), 10);
  EXPECT_EQ(load.records.size(), manifest["stations"]["unique"].get<std::size_t>());
  EXPECT_EQ(load.records.size(), 8u);
  EXPECT_EQ(load.warnings.size(), 2u);
  // first occurrence wins for a repeated id
  EXPECT_EQ(load.records[1].station_id, "TB02");
  EXPECT_NEAR(load.records[1].location.lat, 46.0492518, 1e-9);
  EXPECT_EQ(load.records[0].system_name, "TownBike");
}

TEST(Stations, OutOfRangeRejected) {
  const auto load = parse_station_csv("station_id,lat,lon\na,91.0,0.0\nb,45,7\n");
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0].station_id, "b");
  ASSERT_EQ(load.warnings.size(), 1u);
  EXPECT_NE(load.warnings[0].find("out of range"), std::string::npos);
}

TEST(Stations, CsvNeedsHeader) {
  EXPECT_THROW(parse_station_csv("id,x,y\n1,2,3\n"), DataError);
  const auto load = parse_station_csv("station_id,lat,lon\r\nq,1.5,2.5\r\nbroken,abc,1\r\n");
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0].location, (LatLng{1.5, 2.5}));
  EXPECT_EQ(load.warnings.size(), 1u);
}

TEST(Stations, GeoJsonIds) {
  const auto load = parse_station_geojson(R"({"type":"FeatureCollection","features":[
    {"type":"Feature","properties":{"station_id":"s1"},"geometry":{"type":"Point","coordinates":[14.5,46.0]}},
    {"type":"Feature","id":77,"properties":{},"geometry":{"type":"Point","coordinates":[14.6,46.1]}},
    {"type":"Feature","properties":{},"geometry":{"type":"Point","coordinates":[14.7,46.2]}},
    {"type":"Feature","properties":{},"geometry":{"type":"LineString","coordinates":[[0,0],[1,1]]}},
    {"type":"Feature","properties":{"station_id":"s1"},"geometry":{"type":"Point","coordinates":[0,0]}}]})");
  ASSERT_EQ(load.records.size(), 3u);
  EXPECT_EQ(load.records[0].station_id, "s1");
  EXPECT_EQ(load.records[0].location, (LatLng{46.0, 14.5}));
  EXPECT_EQ(load.records[1].station_id, "77");
  EXPECT_EQ(load.records[2].station_id, "3");
  EXPECT_EQ(load.warnings.size(), 2u);
  EXPECT_THROW(parse_station_geojson(R"({"type":"Feature"})"), DataError);
}

TEST(Stations, GeoJsonRoundTrip) {
  const std::vector<StationRecord> st{{"a", {46.0, 14.5}, "sys", StationOrigin::file},
                                      {"b", {46.1, 14.6}, "sys", StationOrigin::file}};
  const auto back = parse_station_geojson(stations_to_geojson(st));
  EXPECT_EQ(back.records, st);
}

TEST(Stations, EmptySourceNeedsFlag) {
  oracle::TempDir dir("st");
  const auto path = dir / "empty.csv";
  std::ofstream(path) << "station_id,lat,lon\n";
  StationSource src{StationSourceKind::csv_file, path.string(), 0, false};
  EXPECT_THROW(load_stations(src, "Florence"), DataError);
  src.allow_empty = true;
  EXPECT_TRUE(load_stations(src, "Florence").records.empty());
  src.location = (dir / "missing.csv").string();
  EXPECT_THROW(load_stations(src, "Florence"), DataError);
}

TEST(Stations, NextbikeFeedThroughTransport) {
  const std::string feed = R"({"countries":[{"name":"nextbike Poland","cities":[
    {"uid":10,"name":"Opole","places":[
      {"uid":1,"lat":50.67,"lng":17.92,"bike":false,"spot":true},
      {"uid":2,"lat":50.68,"lng":17.93,"bike":true,"spot":false},
      {"uid":1,"lat":50.69,"lng":17.94,"bike":false,"spot":true}]},
    {"uid":11,"name":"Other","places":[{"uid":5,"lat":1,"lng":1,"spot":true}]}]}]})";
  std::string seen_url;
  HttpTransport fake = [&](const HttpRequest& r) {
    seen_url = r.url;
    return HttpResponse{200, feed, {}};
  };
  StationSource src{StationSourceKind::nextbike_api, "http://feed.local/live.json", 10, false};
  const auto load = load_stations(src, "Opole", fake);
  EXPECT_EQ(seen_url, "http://feed.local/live.json?city=10");
  ASSERT_EQ(load.records.size(), 1u);
  EXPECT_EQ(load.records[0].source, StationOrigin::api);
  EXPECT_EQ(load.records[0].system_name, "nextbike Poland");
  EXPECT_EQ(parse_nextbike_feed(feed, "opole", 0).records.size(), 1u);
}

TEST(Stations, BoundaryFilterKeepsOneKilometerBand) {
  const Polygon box = polygon_from_bbox({46.0, 14.0, 46.01, 14.01});
  const std::vector<StationRecord> st{
      {"in", {46.005, 14.005}, "", StationOrigin::file},
      {"near", oracle::offset_m({46.01, 14.005}, 0, 800), "", StationOrigin::file},
      {"far", oracle::offset_m({46.01, 14.005}, 0, 1300), "", StationOrigin::file}};
  std::vector<std::string> warnings;
  const auto kept = filter_to_boundary(st, box, warnings);
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[1].station_id, "near");
  EXPECT_EQ(warnings.size(), 1u);
}
