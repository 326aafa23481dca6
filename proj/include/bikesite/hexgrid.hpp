#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bikesite/categories.hpp"
#include "bikesite/geo.hpp"
#include "bikesite/osm.hpp"

namespace bikesite {

struct CityExtract;

inline constexpr int kMinResolution = 9;
inline constexpr int kMaxResolution = 11;

/// Throws ConfigError unless resolution ∈ {9, 10, 11}.
void check_resolution(int resolution);

/// A valid H3 cell index.
class CellId {
 public:
  constexpr CellId() = default;
  /// Throws GeometryError if `index` is not a valid H3 cell.
  explicit CellId(std::uint64_t index);
  static CellId from_string(std::string_view hex);

  constexpr std::uint64_t value() const noexcept { return index_; }
  int resolution() const noexcept;
  bool is_pentagon() const noexcept;
  std::string to_string() const;

  LatLng center() const;
  /// Closed counter-clockwise boundary ring (may have more than six
  /// vertices for cells crossing icosahedron faces).
  Polygon boundary() const;

  friend constexpr auto operator<=>(const CellId&, const CellId&) = default;

 private:
  std::uint64_t index_ = 0;
};

/// Cell containing the point at the given resolution.
CellId cell_at(LatLng p, int resolution);
/// Geodesic WGS84 area of the cell boundary, m².
double cell_area_m2(CellId cell);

/// Cells whose centers lie inside the boundary (holes respected), sorted.
/// Empty boundary → empty set. Throws GeometryError for self-intersecting
/// input and ConfigError for unsupported resolutions.
std::vector<CellId> tessellate(const Polygon& boundary, int resolution);

struct RingNeighborhood {
  CellId center;
  int k = 0;
  /// rings[i] holds the cells at grid distance i + 1, sorted.
  std::vector<std::vector<CellId>> rings;
};

RingNeighborhood k_rings(CellId center, int k);
/// Cells at grid distance exactly 1.
std::vector<CellId> neighbors(CellId cell);

/// One feature's share of one cell. Parts of a split multipolygon that share
/// an element id are merged into a single assignment.
struct Assignment {
  std::uint32_t feature = 0;  // index into CityExtract::features
  CategoryId category = CategoryId::other;
  ShapeClass shape = ShapeClass::point;
  /// Clipped length (m) for lines, clipped area (m²) for areas, 0 for points.
  double measure = 0.0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct AssignDiagnostics {
  std::size_t assigned_features = 0;
  std::size_t outside_features = 0;
  std::size_t skipped_invalid = 0;
  std::vector<std::string> messages;
};

class CityGrid {
 public:
  CityGrid() = default;
  CityGrid(std::string city_name, int resolution, std::vector<CellId> cells);

  const std::string& city_name() const noexcept { return city_name_; }
  int resolution() const noexcept { return resolution_; }
  const std::vector<CellId>& cells() const noexcept { return cells_; }
  std::size_t size() const noexcept { return cells_.size(); }

  std::optional<std::size_t> index_of(CellId cell) const;
  bool contains(CellId cell) const { return index_of(cell).has_value(); }

  /// Throws LookupError for cells outside the grid.
  const std::vector<Assignment>& assignments(CellId cell) const;
  const std::vector<Assignment>& assignments_at(std::size_t index) const { return assignment_[index]; }
  std::vector<Assignment>& assignments_at(std::size_t index) { return assignment_[index]; }

  friend bool operator==(const CityGrid& a, const CityGrid& b) {
    return a.city_name_ == b.city_name_ && a.resolution_ == b.resolution_ &&
           a.cells_ == b.cells_ && a.assignment_ == b.assignment_;
  }

  template <class Archive>
  void serialize(Archive& ar);

 private:
  void rebuild_index();

  std::string city_name_;
  int resolution_ = 0;
  std::vector<CellId> cells_;
  std::vector<std::vector<Assignment>> assignment_;
  std::unordered_map<std::uint64_t, std::size_t> index_;
};

/// Assigns every feature to the grid cells it touches: points to their
/// containing cell, lines and areas clipped per cell. Features outside all
/// cells are dropped; invalid geometries are skipped and reported.
CityGrid assign_features(const CityExtract& extract, std::vector<CellId> cells,
                         AssignDiagnostics* diagnostics = nullptr);

/// GeoJSON FeatureCollection of the cells (property "h3", plus
/// "features" = number of assignments).
std::string grid_to_geojson(const CityGrid& grid);

void save_grid(const CityGrid& grid, const std::filesystem::path& path);
CityGrid load_grid(const std::filesystem::path& path);

}  // namespace bikesite

template <>
struct std::hash<bikesite::CellId> {
  std::size_t operator()(const bikesite::CellId& c) const noexcept {
    return std::hash<std::uint64_t>{}(c.value());
  }
};
