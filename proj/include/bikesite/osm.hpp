#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bikesite/categories.hpp"
#include "bikesite/geo.hpp"

namespace bikesite {

enum class ElementKind : std::uint8_t { node, way, relation };
enum class ShapeClass : std::uint8_t { point, line, area };

std::string_view name_of(ElementKind kind) noexcept;
std::string_view name_of(ShapeClass shape) noexcept;

struct RawOsmElement {
  std::int64_t element_id = 0;
  ElementKind kind = ElementKind::node;
  Tags tags;
  Geometry geometry;
  /// Data timestamp reported by the server ("timestamp_osm_base"); empty for
  /// sources that do not report one.
  std::string fetched_at;
};

struct OverpassResponse {
  std::vector<RawOsmElement> elements;
  /// Elements that could not be materialized (unassembled multipolygons,
  /// degenerate ways), one line each.
  std::vector<std::string> dropped;
  std::string osm_base_timestamp;
};

/// Parses an Overpass JSON response produced with `out geom;`.
/// Multipolygon relations are assembled from member geometries; a relation
/// with several outer rings yields one element per outer ring, all carrying
/// the relation id. Throws ParseError (with byte offset) on malformed input
/// and NetworkError when the server embedded a runtime error remark.
OverpassResponse parse_overpass_json(std::string_view payload);

/// Joins open way segments into closed rings by matching endpoints.
/// Returns nullopt if any segment cannot be closed.
std::optional<std::vector<Ring>> assemble_rings(std::vector<std::vector<LatLng>> segments);

/// Builds polygons from outer and inner rings; each inner ring goes to the
/// first outer ring that contains it.
std::vector<Polygon> build_multipolygon(const std::vector<Ring>& outers,
                                        const std::vector<Ring>& inners);

/// An element mapped into one category with a shape class.
struct CategorizedFeature {
  std::int64_t element_id = 0;
  ElementKind kind = ElementKind::node;
  CategoryId category = CategoryId::other;
  ShapeClass shape_class = ShapeClass::point;
  Geometry geometry;

  friend bool operator==(const CategorizedFeature&, const CategorizedFeature&) = default;
};

/// Categorizes one element and fixes its shape class:
///  - roads are always lines (closed road ways become ring polylines);
///  - water ways stay lines, water areas are areas;
///  - in every other category, polygons are areas and nodes are points; an
///    open way is represented by the point at its middle vertex.
/// Returns nullopt for unmatched or excluded elements.
std::optional<CategorizedFeature> categorize_element(const RawOsmElement& element,
                                                     const CategoryRules& rules);

}  // namespace bikesite
