#pragma once

// WGS84 geometry primitives. Coordinates are degrees; lengths are meters and
// areas square meters, measured geodesically on the WGS84 spheroid.

#include <compare>
#include <span>
#include <variant>
#include <vector>

namespace bikesite {

struct LatLng {
  double lat = 0.0;
  double lon = 0.0;

  friend auto operator<=>(const LatLng&, const LatLng&) = default;
};

/// Closed ring: first point equals last point.
using Ring = std::vector<LatLng>;
using Polyline = std::vector<LatLng>;

struct Polygon {
  Ring outer;
  std::vector<Ring> holes;

  bool empty() const noexcept { return outer.empty(); }
  friend bool operator==(const Polygon&, const Polygon&) = default;
};

using Geometry = std::variant<LatLng, Polyline, Polygon>;

struct BBox {
  double south = 90.0;
  double west = 180.0;
  double north = -90.0;
  double east = -180.0;

  bool empty() const noexcept { return south > north || west > east; }
  void extend(LatLng p) noexcept;
  bool intersects(const BBox& o) const noexcept;
  bool contains(LatLng p) const noexcept;
};

bool valid_coordinate(LatLng p) noexcept;
bool is_closed(std::span<const LatLng> ring) noexcept;

BBox bbox_of(std::span<const LatLng> pts) noexcept;
BBox bbox_of(const Geometry& g) noexcept;

/// Rectangle polygon (closed, counter-clockwise).
Polygon polygon_from_bbox(const BBox& box);

double geodesic_distance(LatLng a, LatLng b);
double geodesic_length(std::span<const LatLng> line);
double geodesic_area(const Polygon& poly);

/// Ray-casting test in lon/lat space; holes are excluded.
bool point_in_polygon(const Polygon& poly, LatLng p) noexcept;

/// Approximate distance in meters from p to the polygon (0 when inside),
/// using a local equirectangular frame. Intended for km-scale tolerances.
double distance_to_polygon_m(const Polygon& poly, LatLng p);

/// Closes open rings and orients the outer ring counter-clockwise and holes
/// clockwise (RFC 7946 winding).
Polygon normalized(Polygon poly);

/// True for a non-self-intersecting polygon with ≥ 4 ring vertices.
bool is_valid_polygon(const Polygon& poly);

/// Pieces of a line inside a clip polygon.
std::vector<Polyline> clip_polyline(std::span<const LatLng> line, const Polygon& clip);
/// Pieces of a polygon inside a clip polygon.
std::vector<Polygon> clip_polygon(const Polygon& subject, const Polygon& clip);

}  // namespace bikesite
