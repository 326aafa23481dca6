#pragma once

// Test-side reference computations. None of these call into the code under
// test for the quantity they check; they only borrow its data types.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "bikesite/dataset.hpp"
#include "bikesite/embedding.hpp"
#include "bikesite/geo.hpp"
#include "bikesite/hexgrid.hpp"
#include "bikesite/model.hpp"
#include "bikesite/random.hpp"

namespace oracle {

using bikesite::CellId;
using bikesite::LatLng;

// ---- geodesy --------------------------------------------------------------

/// Vincenty inverse on WGS84, meters.
double vincenty_m(LatLng a, LatLng b);
double polyline_m(const std::vector<LatLng>& line);

/// Ellipsoidal area via the authalic (equal-area cylindrical) projection with
/// edges densified in lat/lon. Holes subtracted.
double ellipsoid_area_m2(const bikesite::Polygon& poly);

/// Point `meters` away from `from` along `bearing_deg`, spherical.
LatLng offset_m(LatLng from, double bearing_deg, double meters);

// ---- grid -----------------------------------------------------------------

/// Neighbors found by stepping across every boundary edge: the edge midpoint
/// pushed outward from the center is looked up with the point-to-cell
/// function. Does not use any grid traversal routine.
std::set<CellId> edge_neighbors(CellId cell);

/// Breadth-first grid distances over edge_neighbors; ring[d-1] = cells at
/// distance d, for d = 1..k.
std::vector<std::set<CellId>> bfs_rings(CellId center, int k);

CellId random_cell(bikesite::Rng& rng, int resolution);

// ---- embedding ------------------------------------------------------------

/// Explicit-weight combination: weight list written out per method, then
/// Σ w v / Σ w, or plain concatenation.
std::vector<double> naive_combine(const std::vector<double>& center,
                                  const std::vector<std::vector<double>>& ring_means,
                                  bikesite::CombineMethod method);

// ---- metrics --------------------------------------------------------------

struct Confusion {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  bool precision_zero_div = false, recall_zero_div = false, f1_zero_div = false;
};

/// Counts by walking every (probability, label) pair.
Confusion brute_confusion(const std::vector<double>& probs, const std::vector<int>& labels,
                          double threshold);

// ---- data -----------------------------------------------------------------

/// `n` distinct valid cells at resolution 11 around a fixed place.
std::vector<CellId> distinct_cells(std::size_t n);

/// Two Gaussian blobs of unit variance whose means are `separation` apart
/// (along the diagonal). Labels 1 for the first `positives` rows.
std::vector<bikesite::LabeledRegion> two_gaussians(std::size_t positives, std::size_t negatives,
                                                   std::size_t dim, double separation,
                                                   std::uint64_t seed);

// ---- files ----------------------------------------------------------------

std::filesystem::path fixture(const std::string& rel);
std::string read_text(const std::filesystem::path& p);

/// Unique scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t");
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
