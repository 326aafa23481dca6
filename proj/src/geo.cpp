#include "bikesite/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/linestring.hpp>
#include <boost/geometry/geometries/point.hpp>
#include <boost/geometry/geometries/polygon.hpp>

#include "bikesite/errors.hpp"

namespace bg = boost::geometry;

namespace bikesite {
namespace {

// Planar view of lon/lat used for clipping; x = lon, y = lat.
using PlanePoint = bg::model::d2::point_xy<double>;
using PlaneLine = bg::model::linestring<PlanePoint>;
using PlaneMultiLine = bg::model::multi_linestring<PlaneLine>;
using PlanePolygon = bg::model::polygon<PlanePoint, /*ClockWise=*/false, /*Closed=*/true>;
using PlaneMultiPolygon = bg::model::multi_polygon<PlanePolygon>;

using GeoPoint = bg::model::point<double, 2, bg::cs::geographic<bg::degree>>;
using GeoLine = bg::model::linestring<GeoPoint>;

const bg::srs::spheroid<double> kWgs84(6378137.0, 6356752.3142451793);

PlaneLine to_plane(std::span<const LatLng> pts) {
  PlaneLine out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(p.lon, p.lat);
  return out;
}

PlanePolygon to_plane(const Polygon& poly) {
  PlanePolygon out;
  for (const auto& p : poly.outer) out.outer().emplace_back(p.lon, p.lat);
  for (const auto& hole : poly.holes) {
    auto& ring = out.inners().emplace_back();
    for (const auto& p : hole) ring.emplace_back(p.lon, p.lat);
  }
  bg::correct(out);
  return out;
}

template <typename Range>
std::vector<LatLng> from_plane(const Range& pts) {
  std::vector<LatLng> out;
  out.reserve(boost::size(pts));
  for (const auto& p : pts) out.push_back({p.y(), p.x()});
  return out;
}

Polygon from_plane(const PlanePolygon& poly) {
  Polygon out;
  out.outer = from_plane(poly.outer());
  for (const auto& inner : poly.inners()) out.holes.push_back(from_plane(inner));
  return out;
}

// Authalic sphere: same surface area as WGS84, with an equal-area latitude map.
constexpr double kA = 6378137.0;
constexpr double kF = 1 / 298.257223563;
const double kE2 = kF * (2 - kF);
const double kE = std::sqrt(kE2);

double authalic_q(double sin_phi) {
  const double es = kE * sin_phi;
  return (1 - kE2) * (sin_phi / (1 - es * es) - std::log((1 - es) / (1 + es)) / (2 * kE));
}

const double kQp = authalic_q(1.0);
const double kRq2 = kA * kA * kQp / 2;

double authalic_lat(double lat_deg) {
  return std::asin(std::clamp(authalic_q(std::sin(lat_deg * M_PI / 180.0)) / kQp, -1.0, 1.0));
}

// Spherical excess of a closed ring, summed edge by edge as the signed
// trapezoid between the edge and the pole. Each term scales with the edge,
// so tiny slivers keep their relative precision.
double ring_excess(const Ring& ring) {
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    double dlon = (ring[i + 1].lon - ring[i].lon) * M_PI / 180.0;
    if (dlon > M_PI) dlon -= 2 * M_PI;
    if (dlon < -M_PI) dlon += 2 * M_PI;
    const double t1 = std::tan(authalic_lat(ring[i].lat) / 2);
    const double t2 = std::tan(authalic_lat(ring[i + 1].lat) / 2);
    sum += 2 * std::atan2(std::tan(dlon / 2) * (t1 + t2), 1 + t1 * t2);
  }
  return std::abs(sum);
}

double signed_ring_area(std::span<const LatLng> ring) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    acc += ring[i].lon * ring[i + 1].lat - ring[i + 1].lon * ring[i].lat;
  }
  return acc / 2.0;
}

void close_ring(Ring& ring) {
  if (!ring.empty() && ring.front() != ring.back()) ring.push_back(ring.front());
}

// Distance from p to segment ab, all in a local metric frame.
double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double cx = ax + t * dx - px;
  const double cy = ay + t * dy - py;
  return std::sqrt(cx * cx + cy * cy);
}

}  // namespace

void BBox::extend(LatLng p) noexcept {
  south = std::min(south, p.lat);
  north = std::max(north, p.lat);
  west = std::min(west, p.lon);
  east = std::max(east, p.lon);
}

bool BBox::intersects(const BBox& o) const noexcept {
  return !(empty() || o.empty() || o.west > east || o.east < west || o.south > north ||
           o.north < south);
}

bool BBox::contains(LatLng p) const noexcept {
  return p.lat >= south && p.lat <= north && p.lon >= west && p.lon <= east;
}

bool valid_coordinate(LatLng p) noexcept {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

bool is_closed(std::span<const LatLng> ring) noexcept {
  return ring.size() >= 2 && ring.front() == ring.back();
}

BBox bbox_of(std::span<const LatLng> pts) noexcept {
  BBox box;
  for (const auto& p : pts) box.extend(p);
  return box;
}

BBox bbox_of(const Geometry& g) noexcept {
  return std::visit(
      [](const auto& geom) -> BBox {
        using T = std::decay_t<decltype(geom)>;
        if constexpr (std::is_same_v<T, LatLng>) {
          BBox box;
          box.extend(geom);
          return box;
        } else if constexpr (std::is_same_v<T, Polyline>) {
          return bbox_of(std::span<const LatLng>(geom));
        } else {
          return bbox_of(std::span<const LatLng>(geom.outer));
        }
      },
      g);
}

Polygon polygon_from_bbox(const BBox& box) {
  Polygon poly;
  poly.outer = {{box.south, box.west},
                {box.south, box.east},
                {box.north, box.east},
                {box.north, box.west},
                {box.south, box.west}};
  return poly;
}

double geodesic_distance(LatLng a, LatLng b) {
  const bg::strategy::distance::geographic<bg::strategy::vincenty> strategy(kWgs84);
  return bg::distance(GeoPoint(a.lon, a.lat), GeoPoint(b.lon, b.lat), strategy);
}

double geodesic_length(std::span<const LatLng> line) {
  double total = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) total += geodesic_distance(line[i - 1], line[i]);
  return total;
}

double geodesic_area(const Polygon& poly) {
  if (poly.outer.size() < 4) return 0.0;
  double excess = ring_excess(poly.outer);
  for (const auto& hole : poly.holes) excess -= ring_excess(hole);
  return std::max(0.0, excess) * kRq2;
}

bool point_in_polygon(const Polygon& poly, LatLng p) noexcept {
  const auto in_ring = [&](const Ring& ring) {
    bool inside = false;
    for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
      const auto& a = ring[i];
      const auto& b = ring[j];
      if ((a.lat > p.lat) != (b.lat > p.lat) &&
          p.lon < (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon) {
        inside = !inside;
      }
    }
    return inside;
  };
  if (poly.outer.size() < 4 || !in_ring(poly.outer)) return false;
  return std::none_of(poly.holes.begin(), poly.holes.end(), in_ring);
}

double distance_to_polygon_m(const Polygon& poly, LatLng p) {
  if (point_in_polygon(poly, p)) return 0.0;
  constexpr double kMetersPerDegree = 111320.0;
  const double kx = kMetersPerDegree * std::cos(p.lat * M_PI / 180.0);
  const double ky = kMetersPerDegree;
  double best = std::numeric_limits<double>::infinity();
  const auto scan = [&](const Ring& ring) {
    for (std::size_t i = 1; i < ring.size(); ++i) {
      best = std::min(best, segment_distance(0.0, 0.0, (ring[i - 1].lon - p.lon) * kx,
                                             (ring[i - 1].lat - p.lat) * ky,
                                             (ring[i].lon - p.lon) * kx,
                                             (ring[i].lat - p.lat) * ky));
    }
  };
  scan(poly.outer);
  for (const auto& h : poly.holes) scan(h);
  return best;
}

Polygon normalized(Polygon poly) {
  close_ring(poly.outer);
  if (signed_ring_area(poly.outer) < 0.0) std::reverse(poly.outer.begin(), poly.outer.end());
  for (auto& hole : poly.holes) {
    close_ring(hole);
    if (signed_ring_area(hole) > 0.0) std::reverse(hole.begin(), hole.end());
  }
  return poly;
}

bool is_valid_polygon(const Polygon& poly) {
  if (poly.outer.size() < 4 || !is_closed(poly.outer)) return false;
  for (const auto& h : poly.holes) {
    if (h.size() < 4 || !is_closed(h)) return false;
  }
  return bg::is_valid(to_plane(poly));
}

std::vector<Polyline> clip_polyline(std::span<const LatLng> line, const Polygon& clip) {
  std::vector<Polyline> out;
  if (line.size() < 2 || clip.outer.size() < 4) return out;
  PlaneMultiLine pieces;
  bg::intersection(to_plane(line), to_plane(clip), pieces);
  for (const auto& piece : pieces) {
    if (piece.size() >= 2) out.push_back(from_plane(piece));
  }
  return out;
}

std::vector<Polygon> clip_polygon(const Polygon& subject, const Polygon& clip) {
  std::vector<Polygon> out;
  if (subject.outer.size() < 4 || clip.outer.size() < 4) return out;
  PlaneMultiPolygon pieces;
  bg::intersection(to_plane(subject), to_plane(clip), pieces);
  for (const auto& piece : pieces) out.push_back(from_plane(piece));
  return out;
}

}  // namespace bikesite
