#include "bikesite/stations.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bikesite/errors.hpp"

namespace bikesite {
namespace {

using nlohmann::json;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

// Appends a record unless its id was already seen or its coordinates are
// out of range.
void accept(StationLoad& load, std::set<std::string>& seen, StationRecord rec) {
  if (!valid_coordinate(rec.location)) {
    load.warnings.push_back("station " + rec.station_id + ": coordinate out of range (" +
                            std::to_string(rec.location.lat) + ", " +
                            std::to_string(rec.location.lon) + ")");
    return;
  }
  if (!seen.insert(rec.station_id).second) {
    load.warnings.push_back("station " + rec.station_id + ": duplicate id dropped");
    return;
  }
  load.records.push_back(std::move(rec));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read station source " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

StationLoad parse_station_csv(std::string_view text, const std::string& system_name) {
  StationLoad load;
  std::set<std::string> seen;
  std::size_t pos = 0;
  bool header_seen = false;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (!header_seen) {
      if (fields.size() < 3 || lower(fields[0]) != "station_id" || lower(fields[1]) != "lat" ||
          lower(fields[2]) != "lon") {
        throw DataError("station CSV must start with header 'station_id,lat,lon'");
      }
      header_seen = true;
      continue;
    }
    StationRecord rec;
    rec.system_name = system_name;
    rec.source = StationOrigin::file;
    if (fields.size() < 3 || fields[0].empty() || !parse_double(fields[1], rec.location.lat) ||
        !parse_double(fields[2], rec.location.lon)) {
      load.warnings.push_back("line " + std::to_string(line_no) + ": malformed station row");
      continue;
    }
    rec.station_id = fields[0];
    accept(load, seen, std::move(rec));
  }
  return load;
}

StationLoad parse_station_geojson(std::string_view text, const std::string& system_name) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("station GeoJSON: ") + e.what(), e.byte);
  }
  if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
    throw DataError("station GeoJSON must be a FeatureCollection");
  }
  StationLoad load;
  std::set<std::string> seen;
  std::size_t index = 0;
  for (const auto& f : doc["features"]) {
    ++index;
    const auto& geom = f.value("geometry", json::object());
    if (geom.value("type", "") != "Point" || !geom.contains("coordinates") ||
        geom["coordinates"].size() < 2) {
      load.warnings.push_back("feature " + std::to_string(index) + ": not a Point, skipped");
      continue;
    }
    const auto props = f.value("properties", json::object());
    StationRecord rec;
    rec.location = {geom["coordinates"][1].get<double>(), geom["coordinates"][0].get<double>()};
    if (props.contains("station_id")) {
      const auto& id = props["station_id"];
      rec.station_id = id.is_string() ? id.get<std::string>() : id.dump();
    } else if (f.contains("id")) {
      rec.station_id = f["id"].is_string() ? f["id"].get<std::string>() : f["id"].dump();
    } else {
      rec.station_id = std::to_string(index);
    }
    rec.system_name = props.value("system", system_name);
    rec.source = StationOrigin::file;
    accept(load, seen, std::move(rec));
  }
  return load;
}

StationLoad parse_nextbike_feed(std::string_view text, std::string_view city_name, int city_uid) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("Nextbike feed: ") + e.what(), e.byte);
  }
  StationLoad load;
  std::set<std::string> seen;
  const auto wanted = lower(std::string(city_name));
  for (const auto& country : doc.value("countries", json::array())) {
    const auto system = country.value("name", std::string("nextbike"));
    for (const auto& city : country.value("cities", json::array())) {
      const bool match = city_uid != 0 ? city.value("uid", 0) == city_uid
                                       : lower(city.value("name", "")) == wanted;
      if (!match) continue;
      for (const auto& place : city.value("places", json::array())) {
        if (place.value("bike", false) || !place.value("spot", true)) continue;
        StationRecord rec;
        rec.station_id = std::to_string(place.value("uid", 0LL));
        rec.location = {place.value("lat", 0.0), place.value("lng", 0.0)};
        rec.system_name = system;
        rec.source = StationOrigin::api;
        accept(load, seen, std::move(rec));
      }
    }
  }
  return load;
}

StationLoad load_stations(const StationSource& source, const std::string& city_name,
                          const HttpTransport& transport) {
  StationLoad load;
  switch (source.kind) {
    case StationSourceKind::csv_file:
      load = parse_station_csv(read_file(source.location), city_name);
      break;
    case StationSourceKind::geojson_file:
      load = parse_station_geojson(read_file(source.location), city_name);
      break;
    case StationSourceKind::nextbike_api: {
      std::string url = source.location.empty()
                            ? std::string("https://api.nextbike.net/maps/nextbike-live.json")
                            : source.location;
      if (source.nextbike_city_uid != 0) url += "?city=" + std::to_string(source.nextbike_city_uid);
      const auto& http = transport ? transport : default_http_transport();
      RetryPolicy policy;
      policy.max_attempts = 3;
      const auto res = request_with_retry(http, {url, "GET", {}, {}}, policy);
      load = parse_nextbike_feed(res.body, city_name, source.nextbike_city_uid);
      break;
    }
  }
  if (load.records.empty() && !source.allow_empty) {
    throw DataError("no stations parsed for '" + city_name + "' from " +
                    (source.location.empty() ? std::string("the Nextbike feed") : source.location) +
                    " (pass allow_empty if the city has no system)");
  }
  return load;
}

std::vector<StationRecord> filter_to_boundary(const std::vector<StationRecord>& stations,
                                              const Polygon& boundary,
                                              std::vector<std::string>& warnings,
                                              double tolerance_m) {
  std::vector<StationRecord> kept;
  kept.reserve(stations.size());
  for (const auto& s : stations) {
    if (boundary.empty() || distance_to_polygon_m(boundary, s.location) <= tolerance_m) {
      kept.push_back(s);
    } else {
      warnings.push_back("station " + s.station_id + ": more than " +
                         std::to_string(static_cast<int>(tolerance_m)) +
                         " m outside the city boundary, rejected");
    }
  }
  return kept;
}

std::string stations_to_geojson(const std::vector<StationRecord>& stations) {
  json features = json::array();
  for (const auto& s : stations) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {s.location.lon, s.location.lat}}}},
                        {"properties", {{"station_id", s.station_id}, {"system", s.system_name}}}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

}  // namespace bikesite
