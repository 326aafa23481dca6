#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "bikesite/geo.hpp"
#include "bikesite/http.hpp"

namespace bikesite {

enum class StationOrigin : std::uint8_t { api, file };

struct StationRecord {
  std::string station_id;
  LatLng location;
  std::string system_name;
  StationOrigin source = StationOrigin::file;

  friend bool operator==(const StationRecord&, const StationRecord&) = default;
};

enum class StationSourceKind { nextbike_api, geojson_file, csv_file };

struct StationSource {
  StationSourceKind kind = StationSourceKind::csv_file;
  /// File path for file sources; feed URL override for the API source.
  std::string location;
  /// Nextbike city uid; when 0 the feed is filtered by city name.
  int nextbike_city_uid = 0;
  /// Accept a source that yields zero stations.
  bool allow_empty = false;
};

struct StationLoad {
  std::vector<StationRecord> records;
  /// Rejected rows and dropped duplicates, one line each.
  std::vector<std::string> warnings;
};

/// Parses `station_id,lat,lon[,...]` CSV. Rows are deduplicated by
/// station_id (first wins); rows with out-of-range coordinates are rejected
/// with a warning.
StationLoad parse_station_csv(std::string_view text, const std::string& system_name = {});
/// Parses a GeoJSON FeatureCollection of Points. The id is taken from
/// properties.station_id, then the feature id, then the feature position.
StationLoad parse_station_geojson(std::string_view text, const std::string& system_name = {});
/// Parses the Nextbike live feed (countries → cities → places).
StationLoad parse_nextbike_feed(std::string_view text, std::string_view city_name, int city_uid);

/// Loads stations from a file or the Nextbike API. Throws DataError when
/// zero stations were parsed and the source was not declared empty.
StationLoad load_stations(const StationSource& source, const std::string& city_name,
                          const HttpTransport& transport = {});

/// Keeps stations inside or within `tolerance_m` of the boundary; the rest
/// are rejected with a warning appended to `warnings`.
std::vector<StationRecord> filter_to_boundary(const std::vector<StationRecord>& stations,
                                              const Polygon& boundary,
                                              std::vector<std::string>& warnings,
                                              double tolerance_m = 1000.0);

std::string stations_to_geojson(const std::vector<StationRecord>& stations);

}  // namespace bikesite
