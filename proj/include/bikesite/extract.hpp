#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bikesite/categories.hpp"
#include "bikesite/geo.hpp"
#include "bikesite/http.hpp"
#include "bikesite/osm.hpp"
#include "bikesite/stations.hpp"

namespace bikesite {

/// Everything known about one city before tessellation.
struct CityExtract {
  std::string city_name;
  Polygon boundary;
  std::vector<CategorizedFeature> features;
  std::vector<StationRecord> stations;
  /// SHA-256 over the raw inputs (boundary payload, OSM payload, rules, stations).
  std::string snapshot_id;
  /// Hash of the OSM side only; stations are folded in by attach_stations.
  std::string osm_snapshot_id;

  std::array<std::size_t, kCategoryCount> category_counts() const;
};

enum class BoundaryKind { osm_relation_id, bbox, polygon_file };

struct BoundarySource {
  BoundaryKind kind = BoundaryKind::bbox;
  std::int64_t relation_id = 0;
  BBox bbox;
  std::filesystem::path path;
};

/// Reads the first Polygon or MultiPolygon (largest part) from a GeoJSON
/// file or FeatureCollection.
Polygon read_boundary_geojson(const std::filesystem::path& path);
Polygon parse_boundary_geojson(std::string_view text);

/// Renders the checked-in Overpass QL template for the rule keys and boundary.
std::string build_feature_query(const CategoryRules& rules, const BoundarySource& boundary,
                                 const Polygon& boundary_polygon, int timeout_s = 600);
std::string build_boundary_query(std::int64_t relation_id);

/// Overpass endpoint: $BIKESITE_OVERPASS_URL or the public instance.
std::string overpass_endpoint();
/// Cache root: $BIKESITE_CACHE_DIR or ./cache.
std::filesystem::path default_cache_root();

/// Content-addressed response cache:
///   <root>/<city>/<query-hash>.json   raw responses
///   <root>/<city>/extract.bin         parsed CityExtract snapshot
/// One writer, many readers; files are written to a temp name and renamed.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path root);

  static std::string query_hash(std::string_view query);

  std::filesystem::path response_path(const std::string& city, std::string_view query) const;
  std::filesystem::path extract_path(const std::string& city) const;

  std::optional<std::string> load(const std::string& city, std::string_view query) const;
  void store(const std::string& city, std::string_view query, std::string_view payload) const;

  const std::filesystem::path& root() const noexcept { return root_; }

 private:
  std::filesystem::path root_;
};

struct FetchOptions {
  std::filesystem::path cache_root = default_cache_root();
  const CategoryRules* rules = nullptr;  // defaults to default_category_rules()
  std::string endpoint = overpass_endpoint();
  RetryPolicy retry;
  HttpTransport transport;  // defaults to default_http_transport()
  /// Fail instead of touching the network on a cache miss.
  bool offline = false;
};

struct FetchReport {
  bool cache_hit = false;
  std::vector<std::string> dropped;
};

/// Builds a CityExtract from an Overpass response and boundary; pure.
CityExtract build_city_extract(const std::string& city_name, const Polygon& boundary,
                               const OverpassResponse& response, const CategoryRules& rules,
                               std::string_view snapshot_seed);

/// Resolves the boundary, queries Overpass through the cache and categorizes
/// every element. Raw responses are cached before parsing. Stations are empty.
CityExtract fetch_city_extract(const std::string& city_name, const BoundarySource& boundary,
                               const FetchOptions& options = {}, FetchReport* report = nullptr);

/// Seeds the cache with a locally stored Overpass response so that
/// fetch_city_extract can run offline for this city and boundary.
void import_overpass_response(const std::string& city_name, const BoundarySource& boundary,
                              std::string_view payload, const FetchOptions& options = {});

/// Attaches stations (boundary-filtered) and refreshes the snapshot id.
void attach_stations(CityExtract& extract, std::vector<StationRecord> stations,
                     std::vector<std::string>& warnings);

void save_extract(const CityExtract& extract, const std::filesystem::path& path);
CityExtract load_extract(const std::filesystem::path& path);

}  // namespace bikesite
