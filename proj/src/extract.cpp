#include "bikesite/extract.hpp"

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "bikesite/errors.hpp"
#include "bikesite/hashing.hpp"
#include "serialization.hpp"

namespace bikesite {

namespace detail {
extern const std::string_view kOverpassQueryTemplate;
}

namespace {

constexpr std::string_view kExtractMagic = "BSEXTR01";
constexpr std::uint32_t kExtractVersion = 1;

using nlohmann::json;

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

std::string fmt_coord(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::string city_dir(const std::string& city) {
  std::string out;
  for (unsigned char c : city) {
    if (std::isalnum(c) || c == '-') {
      out += static_cast<char>(std::tolower(c));
    } else {
      out += '_';
    }
  }
  return out.empty() ? std::string("_") : out;
}

std::string canonical_rules(const CategoryRules& rules) {
  std::string out = rules.version + "\n";
  for (const auto& r : rules.rules) {
    out += r.key + "=" + r.value + "->" +
           (r.category ? std::string(name_of(*r.category)) : std::string("!exclude")) + "\n";
  }
  return out;
}

Polygon polygon_from_geojson_geometry(const json& geom) {
  const auto type = geom.value("type", "");
  const auto read_ring = [](const json& coords) {
    Ring ring;
    for (const auto& c : coords) ring.push_back({c.at(1).get<double>(), c.at(0).get<double>()});
    return ring;
  };
  const auto read_polygon = [&](const json& rings) {
    Polygon p;
    if (rings.empty()) return p;
    p.outer = read_ring(rings[0]);
    for (std::size_t i = 1; i < rings.size(); ++i) p.holes.push_back(read_ring(rings[i]));
    return normalized(std::move(p));
  };
  if (type == "Polygon") return read_polygon(geom.at("coordinates"));
  if (type == "MultiPolygon") {
    Polygon best;
    double best_area = -1.0;
    for (const auto& rings : geom.at("coordinates")) {
      auto p = read_polygon(rings);
      const double a = geodesic_area(p);
      if (a > best_area) {
        best_area = a;
        best = std::move(p);
      }
    }
    return best;
  }
  throw GeometryError("boundary geometry must be Polygon or MultiPolygon, got '" + type + "'");
}

std::string boundary_payload_key(const BoundarySource& b) {
  switch (b.kind) {
    case BoundaryKind::bbox:
      return "bbox:" + fmt_coord(b.bbox.south) + "," + fmt_coord(b.bbox.west) + "," +
             fmt_coord(b.bbox.north) + "," + fmt_coord(b.bbox.east);
    case BoundaryKind::polygon_file: return "file";
    case BoundaryKind::osm_relation_id: return "relation:" + std::to_string(b.relation_id);
  }
  return {};
}

struct ResolvedBoundary {
  Polygon polygon;
  std::string payload;  // bytes that determined the polygon
  bool cache_hit = true;
};

ResolvedBoundary resolve_boundary(const std::string& city, const BoundarySource& source,
                                  const FetchOptions& opt, const ResponseCache& cache) {
  ResolvedBoundary out;
  switch (source.kind) {
    case BoundaryKind::bbox:
      if (source.bbox.empty()) throw BoundaryNotFound(city);
      out.polygon = polygon_from_bbox(source.bbox);
      out.payload = boundary_payload_key(source);
      return out;
    case BoundaryKind::polygon_file:
      if (!std::filesystem::exists(source.path)) throw BoundaryNotFound(city);
      out.payload = detail::read_file_bytes(source.path);
      out.polygon = parse_boundary_geojson(out.payload);
      return out;
    case BoundaryKind::osm_relation_id: {
      const auto query = build_boundary_query(source.relation_id);
      auto cached = cache.load(city, query);
      if (!cached) {
        if (opt.offline) throw NetworkError("offline and no cached boundary for '" + city + "'");
        const auto& transport = opt.transport ? opt.transport : default_http_transport();
        const auto res = request_with_retry(
            transport,
            {opt.endpoint, "POST", "data=" + form_encode(query), "application/x-www-form-urlencoded"},
            opt.retry);
        cache.store(city, query, res.body);
        cached = res.body;
        out.cache_hit = false;
      }
      const auto parsed = parse_overpass_json(*cached);
      double best_area = -1.0;
      for (const auto& el : parsed.elements) {
        if (el.kind != ElementKind::relation) continue;
        if (const auto* poly = std::get_if<Polygon>(&el.geometry)) {
          const double a = geodesic_area(*poly);
          if (a > best_area) {
            best_area = a;
            out.polygon = *poly;
          }
        }
      }
      if (out.polygon.empty()) throw BoundaryNotFound(city);
      out.payload = std::move(*cached);
      return out;
    }
  }
  throw BoundaryNotFound(city);
}

std::string snapshot_with_stations(const std::string& osm_id, const std::vector<StationRecord>& st) {
  Sha256 h;
  h.add(osm_id);
  for (const auto& s : st) {
    h.add(s.station_id).add(fmt_coord(s.location.lat)).add(fmt_coord(s.location.lon));
  }
  return h.hex();
}

}  // namespace

std::array<std::size_t, kCategoryCount> CityExtract::category_counts() const {
  std::array<std::size_t, kCategoryCount> counts{};
  for (const auto& f : features) ++counts[index_of(f.category)];
  return counts;
}

Polygon parse_boundary_geojson(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("boundary GeoJSON: ") + e.what(), e.byte);
  }
  const auto type = doc.value("type", "");
  if (type == "FeatureCollection") {
    for (const auto& f : doc.value("features", json::array())) {
      const auto gt = f.value("geometry", json::object()).value("type", "");
      if (gt == "Polygon" || gt == "MultiPolygon") return polygon_from_geojson_geometry(f["geometry"]);
    }
    throw GeometryError("boundary FeatureCollection has no polygon");
  }
  if (type == "Feature") return polygon_from_geojson_geometry(doc.at("geometry"));
  return polygon_from_geojson_geometry(doc);
}

Polygon read_boundary_geojson(const std::filesystem::path& path) {
  return parse_boundary_geojson(detail::read_file_bytes(path));
}

std::string build_boundary_query(std::int64_t relation_id) {
  return "[out:json][timeout:180];\nrel(" + std::to_string(relation_id) + ");\nout geom;\n";
}

std::string build_feature_query(const CategoryRules& rules, const BoundarySource& boundary,
                                 const Polygon& boundary_polygon, int timeout_s) {
  std::string area;
  std::string filter;
  switch (boundary.kind) {
    case BoundaryKind::osm_relation_id:
      area = "area(id:" + std::to_string(3600000000LL + boundary.relation_id) + ")->.city;";
      filter = "(area.city)";
      break;
    case BoundaryKind::bbox:
      filter = "(" + fmt_coord(boundary.bbox.south) + "," + fmt_coord(boundary.bbox.west) + "," +
               fmt_coord(boundary.bbox.north) + "," + fmt_coord(boundary.bbox.east) + ")";
      break;
    case BoundaryKind::polygon_file: {
      filter = "(poly:\"";
      for (std::size_t i = 0; i + 1 < boundary_polygon.outer.size(); ++i) {
        if (i) filter += ' ';
        filter += fmt_coord(boundary_polygon.outer[i].lat) + " " + fmt_coord(boundary_polygon.outer[i].lon);
      }
      filter += "\")";
      break;
    }
  }

  // Per key: either any value, or the union of exact values.
  std::vector<std::pair<std::string, std::set<std::string>>> keys;
  std::set<std::string> wildcard;
  for (const auto& r : rules.rules) {
    if (!r.category) continue;
    auto it = std::find_if(keys.begin(), keys.end(), [&](const auto& k) { return k.first == r.key; });
    if (it == keys.end()) {
      keys.emplace_back(r.key, std::set<std::string>{});
      it = std::prev(keys.end());
    }
    if (r.value == "*") wildcard.insert(r.key);
    it->second.insert(r.value);
  }
  std::string selectors;
  for (const auto& [key, values] : keys) {
    selectors += "  nwr[\"" + key + "\"";
    if (!wildcard.count(key)) {
      selectors += "~\"^(";
      bool first = true;
      for (const auto& v : values) {
        if (!first) selectors += '|';
        selectors += v;
        first = false;
      }
      selectors += ")$\"";
    }
    selectors += "]" + filter + ";\n";
  }
  if (!selectors.empty()) selectors.pop_back();

  std::string q(detail::kOverpassQueryTemplate);
  q = replace_all(std::move(q), "{{timeout}}", std::to_string(timeout_s));
  q = replace_all(std::move(q), "{{area}}", area);
  q = replace_all(std::move(q), "{{selectors}}", selectors);
  return q;
}

std::string overpass_endpoint() {
  if (const char* env = std::getenv("BIKESITE_OVERPASS_URL"); env && *env) return env;
  return "https://overpass-api.de/api/interpreter";
}

std::filesystem::path default_cache_root() {
  if (const char* env = std::getenv("BIKESITE_CACHE_DIR"); env && *env) return env;
  return "cache";
}

ResponseCache::ResponseCache(std::filesystem::path root) : root_(std::move(root)) {}

std::string ResponseCache::query_hash(std::string_view query) {
  return sha256_hex(query).substr(0, 16);
}

std::filesystem::path ResponseCache::response_path(const std::string& city,
                                                   std::string_view query) const {
  return root_ / city_dir(city) / (query_hash(query) + ".json");
}

std::filesystem::path ResponseCache::extract_path(const std::string& city) const {
  return root_ / city_dir(city) / "extract.bin";
}

std::optional<std::string> ResponseCache::load(const std::string& city,
                                               std::string_view query) const {
  const auto path = response_path(city, query);
  if (!std::filesystem::exists(path)) return std::nullopt;
  return detail::read_file_bytes(path);
}

void ResponseCache::store(const std::string& city, std::string_view query,
                          std::string_view payload) const {
  detail::write_file_atomic(response_path(city, query), payload);
}

CityExtract build_city_extract(const std::string& city_name, const Polygon& boundary,
                               const OverpassResponse& response, const CategoryRules& rules,
                               std::string_view snapshot_seed) {
  CityExtract out;
  out.city_name = city_name;
  out.boundary = boundary;
  out.features.reserve(response.elements.size());
  for (const auto& el : response.elements) {
    if (auto f = categorize_element(el, rules)) out.features.push_back(std::move(*f));
  }
  out.osm_snapshot_id = Sha256().add(snapshot_seed).add(canonical_rules(rules)).hex();
  out.snapshot_id = snapshot_with_stations(out.osm_snapshot_id, out.stations);
  return out;
}

CityExtract fetch_city_extract(const std::string& city_name, const BoundarySource& boundary,
                               const FetchOptions& options, FetchReport* report) {
  const CategoryRules& rules = options.rules ? *options.rules : default_category_rules();
  const ResponseCache cache(options.cache_root);
  const auto resolved = resolve_boundary(city_name, boundary, options, cache);
  const auto query = build_feature_query(rules, boundary, resolved.polygon);

  auto payload = cache.load(city_name, query);
  const bool hit = payload.has_value();
  if (!payload) {
    if (options.offline) {
      throw NetworkError("offline and no cached response for '" + city_name + "' (" +
                         cache.response_path(city_name, query).string() + ")");
    }
    spdlog::info("querying Overpass for {} ({})", city_name, options.endpoint);
    const auto& transport = options.transport ? options.transport : default_http_transport();
    const auto res = request_with_retry(
        transport,
        {options.endpoint, "POST", "data=" + form_encode(query), "application/x-www-form-urlencoded"},
        options.retry);
    cache.store(city_name, query, res.body);
    payload = res.body;
  }

  const auto parsed = parse_overpass_json(*payload);
  for (const auto& d : parsed.dropped) spdlog::debug("{}: dropped {}", city_name, d);

  const auto seed = Sha256().add(resolved.payload).add(*payload).hex();
  auto extract = build_city_extract(city_name, resolved.polygon, parsed, rules, seed);
  save_extract(extract, cache.extract_path(city_name));
  if (report) {
    report->cache_hit = hit && resolved.cache_hit;
    report->dropped = parsed.dropped;
  }
  return extract;
}

void import_overpass_response(const std::string& city_name, const BoundarySource& boundary,
                              std::string_view payload, const FetchOptions& options) {
  parse_overpass_json(payload);  // refuse to cache garbage
  const CategoryRules& rules = options.rules ? *options.rules : default_category_rules();
  const ResponseCache cache(options.cache_root);
  auto opt = options;
  opt.offline = true;
  const auto resolved = resolve_boundary(city_name, boundary, opt, cache);
  cache.store(city_name, build_feature_query(rules, boundary, resolved.polygon), payload);
}

void attach_stations(CityExtract& extract, std::vector<StationRecord> stations,
                     std::vector<std::string>& warnings) {
  extract.stations = filter_to_boundary(stations, extract.boundary, warnings);
  extract.snapshot_id = snapshot_with_stations(extract.osm_snapshot_id, extract.stations);
}

void save_extract(const CityExtract& extract, const std::filesystem::path& path) {
  write_snapshot(path, kExtractMagic, kExtractVersion, extract);
}

CityExtract load_extract(const std::filesystem::path& path) {
  return read_snapshot<CityExtract>(path, kExtractMagic, kExtractVersion);
}

}  // namespace bikesite
