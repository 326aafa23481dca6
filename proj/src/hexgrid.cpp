#include "bikesite/hexgrid.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <unordered_set>

#include <h3api.h>
#include <json.hpp>

#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "serialization.hpp"

namespace bikesite {
namespace {

constexpr std::string_view kGridMagic = "BSGRID01";
constexpr std::uint32_t kGridVersion = 1;

double rad(double deg) { return deg * M_PI / 180.0; }
double deg(double rad) { return rad * 180.0 / M_PI; }

void check_h3(H3Error err, const char* what) {
  if (err != E_SUCCESS) {
    throw GeometryError(std::string(what) + " failed: " + describeH3Error(err));
  }
}

// Lazily computed cell boundaries.
class BoundaryCache {
 public:
  const Polygon& get(CellId c) {
    auto it = cache_.find(c.value());
    if (it == cache_.end()) it = cache_.emplace(c.value(), c.boundary()).first;
    return it->second;
  }

 private:
  std::unordered_map<std::uint64_t, Polygon> cache_;
};

}  // namespace

void check_resolution(int resolution) {
  if (resolution < kMinResolution || resolution > kMaxResolution) {
    throw ConfigError("unsupported H3 resolution " + std::to_string(resolution) +
                      " (supported: 9, 10, 11)");
  }
}

CellId::CellId(std::uint64_t index) : index_(index) {
  if (!isValidCell(index)) throw GeometryError("invalid H3 cell index " + std::to_string(index));
}

CellId CellId::from_string(std::string_view hex) {
  H3Index h = 0;
  const std::string s(hex);
  if (stringToH3(s.c_str(), &h) != E_SUCCESS) throw GeometryError("invalid H3 string '" + s + "'");
  return CellId(h);
}

int CellId::resolution() const noexcept { return getResolution(index_); }
bool CellId::is_pentagon() const noexcept { return isPentagon(index_) != 0; }

std::string CellId::to_string() const {
  char buf[17] = {};
  h3ToString(index_, buf, sizeof(buf));
  return buf;
}

LatLng CellId::center() const {
  ::LatLng g;
  check_h3(cellToLatLng(index_, &g), "cellToLatLng");
  return {deg(g.lat), deg(g.lng)};
}

Polygon CellId::boundary() const {
  CellBoundary b;
  check_h3(cellToBoundary(index_, &b), "cellToBoundary");
  Polygon poly;
  poly.outer.reserve(static_cast<std::size_t>(b.numVerts) + 1);
  for (int i = 0; i < b.numVerts; ++i) poly.outer.push_back({deg(b.verts[i].lat), deg(b.verts[i].lng)});
  return normalized(std::move(poly));
}

CellId cell_at(LatLng p, int resolution) {
  const ::LatLng g{rad(p.lat), rad(p.lon)};
  H3Index h = 0;
  check_h3(latLngToCell(&g, resolution, &h), "latLngToCell");
  return CellId(h);
}

double cell_area_m2(CellId cell) { return geodesic_area(cell.boundary()); }

std::vector<CellId> tessellate(const Polygon& boundary, int resolution) {
  check_resolution(resolution);
  if (boundary.empty()) return {};
  const auto poly = normalized(boundary);
  if (!is_valid_polygon(poly)) throw GeometryError("boundary polygon is not a valid simple polygon");

  const auto to_loop = [](const Ring& ring, std::vector<::LatLng>& storage) {
    storage.clear();
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) storage.push_back({rad(ring[i].lat), rad(ring[i].lon)});
    return GeoLoop{static_cast<int>(storage.size()), storage.data()};
  };
  std::vector<::LatLng> outer_pts;
  std::vector<std::vector<::LatLng>> hole_pts(poly.holes.size());
  std::vector<GeoLoop> holes;
  GeoPolygon gp{};
  gp.geoloop = to_loop(poly.outer, outer_pts);
  for (std::size_t i = 0; i < poly.holes.size(); ++i) holes.push_back(to_loop(poly.holes[i], hole_pts[i]));
  gp.numHoles = static_cast<int>(holes.size());
  gp.holes = holes.empty() ? nullptr : holes.data();

  std::int64_t max_size = 0;
  check_h3(maxPolygonToCellsSize(&gp, resolution, CONTAINMENT_CENTER, &max_size),
           "maxPolygonToCellsSize");
  std::vector<H3Index> out(static_cast<std::size_t>(max_size), 0);
  check_h3(polygonToCells(&gp, resolution, CONTAINMENT_CENTER, out.data()), "polygonToCells");

  std::vector<CellId> cells;
  for (H3Index h : out) {
    if (h != 0) cells.emplace_back(h);
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

RingNeighborhood k_rings(CellId center, int k) {
  if (k < 0) throw ConfigError("neighborhood size must be >= 0");
  RingNeighborhood out;
  out.center = center;
  out.k = k;
  if (k == 0) return out;
  std::int64_t size = 0;
  check_h3(maxGridDiskSize(k, &size), "maxGridDiskSize");
  std::vector<H3Index> cells(static_cast<std::size_t>(size), 0);
  std::vector<int> dist(static_cast<std::size_t>(size), 0);
  check_h3(gridDiskDistances(center.value(), k, cells.data(), dist.data()), "gridDiskDistances");
  out.rings.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i] == 0 || dist[i] == 0) continue;
    out.rings[static_cast<std::size_t>(dist[i] - 1)].emplace_back(cells[i]);
  }
  for (auto& ring : out.rings) std::sort(ring.begin(), ring.end());
  return out;
}

std::vector<CellId> neighbors(CellId cell) { return k_rings(cell, 1).rings.front(); }

CityGrid::CityGrid(std::string city_name, int resolution, std::vector<CellId> cells)
    : city_name_(std::move(city_name)), resolution_(resolution), cells_(std::move(cells)) {
  std::sort(cells_.begin(), cells_.end());
  cells_.erase(std::unique(cells_.begin(), cells_.end()), cells_.end());
  assignment_.resize(cells_.size());
  rebuild_index();
}

void CityGrid::rebuild_index() {
  index_.clear();
  index_.reserve(cells_.size());
  for (std::size_t i = 0; i < cells_.size(); ++i) index_.emplace(cells_[i].value(), i);
}

std::optional<std::size_t> CityGrid::index_of(CellId cell) const {
  const auto it = index_.find(cell.value());
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::vector<Assignment>& CityGrid::assignments(CellId cell) const {
  const auto idx = index_of(cell);
  if (!idx) throw LookupError("cell " + cell.to_string() + " is not part of grid '" + city_name_ + "'");
  return assignment_[*idx];
}

template <class Archive>
void CityGrid::serialize(Archive& ar) {
  ar(city_name_, resolution_, cells_, assignment_);
  if constexpr (Archive::is_loading::value) rebuild_index();
}

template <class Archive>
void serialize(Archive& ar, Assignment& a) {
  ar(a.feature, a.category, a.shape, a.measure);
}

CityGrid assign_features(const CityExtract& extract, std::vector<CellId> cells,
                         AssignDiagnostics* diagnostics) {
  if (cells.empty()) throw DataError("assign_features: the cell set is empty");
  const int res = cells.front().resolution();
  for (const auto& c : cells) {
    if (c.resolution() != res) throw DataError("assign_features: cells mix resolutions");
  }
  CityGrid grid(extract.city_name, res, std::move(cells));
  AssignDiagnostics local;
  auto& diag = diagnostics ? *diagnostics : local;

  BoundaryCache boundaries;
  BBox grid_box;
  for (const auto& c : grid.cells()) {
    for (const auto& p : boundaries.get(c).outer) grid_box.extend(p);
  }
  constexpr double kMargin = 1e-4;
  grid_box.south -= kMargin;
  grid_box.west -= kMargin;
  grid_box.north += kMargin;
  grid_box.east += kMargin;
  const Polygon box_poly = polygon_from_bbox(grid_box);

  const auto add = [&](std::size_t cell_index, std::uint32_t fi, const CategorizedFeature& f,
                       double measure) {
    auto& list = grid.assignments_at(cell_index);
    for (auto& a : list) {
      const auto& other = extract.features[a.feature];
      if (other.element_id == f.element_id && other.kind == f.kind) {
        a.measure += measure;
        return;
      }
    }
    list.push_back({fi, f.category, f.shape_class, measure});
  };

  // Flood-fills from the cells of the geometry's vertices, expanding only
  // through cells with a positive clipped measure.
  const auto flood = [&](std::span<const LatLng> seeds_from, auto&& measure_in) {
    std::vector<std::pair<std::size_t, double>> hits;
    std::unordered_set<std::uint64_t> visited;
    std::deque<CellId> queue;
    for (const auto& p : seeds_from) {
      const auto c = cell_at(p, res);
      if (visited.insert(c.value()).second) queue.push_back(c);
    }
    const std::size_t seed_count = queue.size();
    std::size_t processed = 0;
    while (!queue.empty()) {
      const auto c = queue.front();
      queue.pop_front();
      const double m = measure_in(boundaries.get(c));
      const bool is_seed = processed++ < seed_count;
      if (m > 0.0) {
        if (auto idx = grid.index_of(c)) hits.emplace_back(*idx, m);
      }
      if (m > 0.0 || is_seed) {
        for (const auto& n : neighbors(c)) {
          if (visited.insert(n.value()).second) queue.push_back(n);
        }
      }
    }
    return hits;
  };

  for (std::uint32_t fi = 0; fi < extract.features.size(); ++fi) {
    const auto& f = extract.features[fi];
    std::vector<std::pair<std::size_t, double>> hits;
    try {
      if (const auto* p = std::get_if<LatLng>(&f.geometry)) {
        if (auto idx = grid.index_of(cell_at(*p, res))) hits.emplace_back(*idx, 0.0);
      } else if (const auto* line = std::get_if<Polyline>(&f.geometry)) {
        if (bbox_of(std::span<const LatLng>(*line)).intersects(grid_box)) {
          for (const auto& piece : clip_polyline(*line, box_poly)) {
            auto h = flood(piece, [&](const Polygon& cell) {
              double len = 0.0;
              for (const auto& part : clip_polyline(piece, cell)) len += geodesic_length(part);
              return len;
            });
            hits.insert(hits.end(), h.begin(), h.end());
          }
        }
      } else if (const auto* poly = std::get_if<Polygon>(&f.geometry)) {
        if (!is_valid_polygon(*poly)) {
          ++diag.skipped_invalid;
          diag.messages.push_back(std::string(name_of(f.kind)) + " " + std::to_string(f.element_id) +
                                  ": invalid polygon skipped");
          continue;
        }
        if (bbox_of(f.geometry).intersects(grid_box)) {
          for (const auto& piece : clip_polygon(*poly, box_poly)) {
            auto h = flood(piece.outer, [&](const Polygon& cell) {
              double area = 0.0;
              for (const auto& part : clip_polygon(piece, cell)) area += geodesic_area(part);
              return area;
            });
            hits.insert(hits.end(), h.begin(), h.end());
          }
        }
      }
    } catch (const std::exception& e) {
      ++diag.skipped_invalid;
      diag.messages.push_back(std::string(name_of(f.kind)) + " " + std::to_string(f.element_id) +
                              ": geometry operation failed (" + e.what() + ")");
      continue;
    }
    if (hits.empty()) {
      ++diag.outside_features;
      continue;
    }
    ++diag.assigned_features;
    // Pieces of one feature may revisit a cell; merge per cell.
    std::sort(hits.begin(), hits.end());
    for (std::size_t i = 0; i < hits.size();) {
      double total = 0.0;
      std::size_t j = i;
      for (; j < hits.size() && hits[j].first == hits[i].first; ++j) total += hits[j].second;
      add(hits[i].first, fi, f, total);
      i = j;
    }
  }
  return grid;
}

std::string grid_to_geojson(const CityGrid& grid) {
  using nlohmann::json;
  json features = json::array();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto cell = grid.cells()[i];
    json ring = json::array();
    for (const auto& p : cell.boundary().outer) ring.push_back({p.lon, p.lat});
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", json::array({ring})}}},
                        {"properties",
                         {{"h3", cell.to_string()}, {"features", grid.assignments_at(i).size()}}}});
  }
  return json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

void save_grid(const CityGrid& grid, const std::filesystem::path& path) {
  write_snapshot(path, kGridMagic, kGridVersion, grid);
}

CityGrid load_grid(const std::filesystem::path& path) {
  return read_snapshot<CityGrid>(path, kGridMagic, kGridVersion);
}

}  // namespace bikesite
