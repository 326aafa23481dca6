#include "bikesite/osm.hpp"

#include <algorithm>
#include <utility>

#include <json.hpp>

#include "bikesite/errors.hpp"

namespace bikesite {

std::string_view name_of(ElementKind kind) noexcept {
  switch (kind) {
    case ElementKind::node: return "node";
    case ElementKind::way: return "way";
    case ElementKind::relation: return "relation";
  }
  return "?";
}

std::string_view name_of(ShapeClass shape) noexcept {
  switch (shape) {
    case ShapeClass::point: return "point";
    case ShapeClass::line: return "line";
    case ShapeClass::area: return "area";
  }
  return "?";
}

namespace {

using nlohmann::json;

bool has_tag(const Tags& tags, const char* key, const char* value = nullptr) {
  const auto it = tags.find(key);
  return it != tags.end() && (value == nullptr || it->second == value);
}

// Closed ways with these tags describe lines, not areas.
bool closed_way_is_linear(const Tags& tags) {
  if (has_tag(tags, "area", "yes")) return false;
  if (has_tag(tags, "area", "no")) return true;
  if (has_tag(tags, "highway") || has_tag(tags, "barrier") || has_tag(tags, "aerialway") ||
      has_tag(tags, "route")) {
    return true;
  }
  if (has_tag(tags, "railway") && !has_tag(tags, "railway", "platform")) return true;
  if (const auto it = tags.find("waterway"); it != tags.end()) {
    return it->second != "riverbank" && it->second != "dock" && it->second != "boatyard";
  }
  return has_tag(tags, "natural", "coastline") || has_tag(tags, "natural", "tree_row") ||
         has_tag(tags, "natural", "cliff");
}

std::size_t locate(std::string_view payload, std::int64_t id) {
  const auto pos = payload.find("\"id\": " + std::to_string(id));
  if (pos != std::string_view::npos) return pos;
  const auto compact = payload.find("\"id\":" + std::to_string(id));
  return compact == std::string_view::npos ? 0 : compact;
}

LatLng read_point(const json& j) { return {j.at("lat").get<double>(), j.at("lon").get<double>()}; }

std::vector<LatLng> read_geometry(const json& arr) {
  std::vector<LatLng> pts;
  pts.reserve(arr.size());
  for (const auto& p : arr) {
    if (p.is_null()) continue;  // Overpass emits null for nodes outside the query region
    pts.push_back(read_point(p));
  }
  return pts;
}

Tags read_tags(const json& el) {
  Tags tags;
  if (const auto it = el.find("tags"); it != el.end()) {
    for (const auto& [k, v] : it->items()) tags.emplace(k, v.is_string() ? v.get<std::string>() : v.dump());
  }
  return tags;
}

bool all_valid(std::span<const LatLng> pts) {
  return std::all_of(pts.begin(), pts.end(), [](LatLng p) { return valid_coordinate(p); });
}

}  // namespace

std::optional<std::vector<Ring>> assemble_rings(std::vector<std::vector<LatLng>> segments) {
  std::vector<Ring> rings;
  std::erase_if(segments, [](const auto& s) { return s.size() < 2; });
  while (!segments.empty()) {
    Ring ring = std::move(segments.back());
    segments.pop_back();
    while (ring.front() != ring.back()) {
      const auto tail = ring.back();
      auto it = std::find_if(segments.begin(), segments.end(), [&](const auto& s) {
        return s.front() == tail || s.back() == tail;
      });
      if (it == segments.end()) return std::nullopt;
      if (it->front() != tail) std::reverse(it->begin(), it->end());
      ring.insert(ring.end(), it->begin() + 1, it->end());
      segments.erase(it);
    }
    if (ring.size() < 4) return std::nullopt;
    rings.push_back(std::move(ring));
  }
  return rings;
}

std::vector<Polygon> build_multipolygon(const std::vector<Ring>& outers,
                                        const std::vector<Ring>& inners) {
  std::vector<Polygon> polys;
  polys.reserve(outers.size());
  for (const auto& o : outers) polys.push_back(Polygon{o, {}});
  for (const auto& inner : inners) {
    for (auto& poly : polys) {
      if (point_in_polygon(poly, inner.front())) {
        poly.holes.push_back(inner);
        break;
      }
    }
  }
  for (auto& p : polys) p = normalized(std::move(p));
  return polys;
}

OverpassResponse parse_overpass_json(std::string_view payload) {
  json doc;
  try {
    doc = json::parse(payload);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed Overpass response: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ParseError("Overpass response is not a JSON object", 0);
  if (const auto it = doc.find("remark"); it != doc.end() && it->is_string()) {
    const auto remark = it->get<std::string>();
    if (remark.find("error") != std::string::npos) {
      throw NetworkError("Overpass runtime error: " + remark);
    }
  }
  const auto elements = doc.find("elements");
  if (elements == doc.end() || !elements->is_array()) {
    throw ParseError("Overpass response has no 'elements' array", payload.find('{'));
  }

  OverpassResponse out;
  if (const auto it = doc.find("osm3s"); it != doc.end()) {
    out.osm_base_timestamp = it->value("timestamp_osm_base", "");
  }

  for (const auto& el : *elements) {
    const auto type = el.value("type", "");
    const std::int64_t id = el.value("id", std::int64_t{0});
    try {
      RawOsmElement raw;
      raw.element_id = id;
      raw.tags = read_tags(el);
      raw.fetched_at = out.osm_base_timestamp;
      if (type == "node") {
        raw.kind = ElementKind::node;
        raw.geometry = read_point(el);
        if (!valid_coordinate(std::get<LatLng>(raw.geometry))) {
          throw ParseError("node " + std::to_string(id) + " has out-of-range coordinates",
                           locate(payload, id));
        }
        out.elements.push_back(std::move(raw));
      } else if (type == "way") {
        raw.kind = ElementKind::way;
        auto pts = read_geometry(el.at("geometry"));
        if (!all_valid(pts)) {
          throw ParseError("way " + std::to_string(id) + " has out-of-range coordinates",
                           locate(payload, id));
        }
        if (pts.size() < 2) {
          out.dropped.push_back("way " + std::to_string(id) + ": fewer than 2 points");
          continue;
        }
        if (pts.size() >= 4 && is_closed(pts) && !closed_way_is_linear(raw.tags)) {
          raw.geometry = normalized(Polygon{std::move(pts), {}});
        } else {
          raw.geometry = std::move(pts);
        }
        out.elements.push_back(std::move(raw));
      } else if (type == "relation") {
        raw.kind = ElementKind::relation;
        const auto rel_type = raw.tags.count("type") ? raw.tags.at("type") : std::string();
        if (rel_type != "multipolygon" && rel_type != "boundary") {
          out.dropped.push_back("relation " + std::to_string(id) + ": type '" + rel_type +
                                "' is not areal");
          continue;
        }
        std::vector<std::vector<LatLng>> outer_parts;
        std::vector<std::vector<LatLng>> inner_parts;
        bool incomplete = false;
        for (const auto& m : el.value("members", json::array())) {
          if (m.value("type", "") != "way") continue;
          if (!m.contains("geometry")) {
            incomplete = true;
            break;
          }
          auto pts = read_geometry(m["geometry"]);
          if (!all_valid(pts)) {
            throw ParseError("relation " + std::to_string(id) + " has out-of-range coordinates",
                             locate(payload, id));
          }
          (m.value("role", "") == "inner" ? inner_parts : outer_parts).push_back(std::move(pts));
        }
        std::optional<std::vector<Ring>> outers;
        std::optional<std::vector<Ring>> inners;
        if (!incomplete) {
          outers = assemble_rings(std::move(outer_parts));
          inners = assemble_rings(std::move(inner_parts));
        }
        if (incomplete || !outers || !inners || outers->empty()) {
          out.dropped.push_back("relation " + std::to_string(id) +
                                ": multipolygon could not be assembled");
          continue;
        }
        for (auto& poly : build_multipolygon(*outers, *inners)) {
          RawOsmElement part = raw;
          part.geometry = std::move(poly);
          out.elements.push_back(std::move(part));
        }
      } else {
        out.dropped.push_back("element " + std::to_string(id) + ": unknown type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError("malformed " + type + " " + std::to_string(id) + ": " + e.what(),
                       locate(payload, id));
    }
  }
  return out;
}

std::optional<CategorizedFeature> categorize_element(const RawOsmElement& element,
                                                     const CategoryRules& rules) {
  const auto category = categorize(element.tags, rules);
  if (!category) return std::nullopt;

  CategorizedFeature f;
  f.element_id = element.element_id;
  f.kind = element.kind;
  f.category = *category;

  std::visit(
      [&](const auto& geom) {
        using T = std::decay_t<decltype(geom)>;
        if constexpr (std::is_same_v<T, LatLng>) {
          f.shape_class = ShapeClass::point;
          f.geometry = geom;
        } else if constexpr (std::is_same_v<T, Polyline>) {
          if (is_road(f.category) || f.category == CategoryId::water) {
            f.shape_class = ShapeClass::line;
            f.geometry = geom;
          } else {
            f.shape_class = ShapeClass::point;
            f.geometry = geom[geom.size() / 2];
          }
        } else {
          if (is_road(f.category)) {
            f.shape_class = ShapeClass::line;
            f.geometry = geom.outer;
          } else {
            f.shape_class = ShapeClass::area;
            f.geometry = geom;
          }
        }
      },
      element.geometry);
  return f;
}

}  // namespace bikesite
