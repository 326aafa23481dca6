#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bikesite/hexgrid.hpp"

namespace bikesite {

enum class EmbeddingMethod : std::uint8_t { category_counting, shape_analysis };
enum class CombineMethod : std::uint8_t { concatenate, average, diminishing, squared_diminishing };

std::string_view name_of(EmbeddingMethod m) noexcept;
std::string_view name_of(CombineMethod m) noexcept;
EmbeddingMethod parse_embedding_method(std::string_view name);
CombineMethod parse_combine_method(std::string_view name);

inline constexpr std::size_t kCountDimension = 20;
inline constexpr std::size_t kShapeDimension = 36;

std::size_t base_dimension(EmbeddingMethod m) noexcept;
/// Column labels of a single-region vector.
///   category_counting: the 20 category names.
///   shape_analysis: water_area, roads_bike_length, roads_drive_length,
///   roads_walk_length, then <category>_area, <category>_points for the
///   remaining 16 categories in category order.
std::vector<std::string> base_columns(EmbeddingMethod m);

struct NeighborhoodConfig {
  int k = 5;
  CombineMethod method = CombineMethod::squared_diminishing;

  friend bool operator==(const NeighborhoodConfig&, const NeighborhoodConfig&) = default;
};

/// Weights of the center (index 0) and rings 1..K: all 1 for average,
/// 1/(k+1) for diminishing, 1/(k+1)² for squared diminishing.
std::vector<double> combination_weights(const NeighborhoodConfig& config);

struct RegionVector {
  CellId cell;
  EmbeddingMethod method = EmbeddingMethod::category_counting;
  std::vector<double> values;

  std::size_t dimension() const noexcept { return values.size(); }
};

/// Per-category number of features touching the cell.
RegionVector embed_count(const CityGrid& grid, CellId cell);
/// Clipped water area, road lengths, and (area, point count) pairs.
RegionVector embed_shape(const CityGrid& grid, CellId cell);
RegionVector embed_region(const CityGrid& grid, CellId cell, EmbeddingMethod method);

/// Component-wise mean; an empty list yields the zero vector of `dimension`.
std::vector<double> mean_vector(const std::vector<std::vector<double>>& vectors,
                                std::size_t dimension);

/// Combines a center vector with per-ring mean vectors. `ring_means` must
/// hold exactly config.k vectors of the center's dimension.
///   concatenate → [center | r_1 | ... | r_K]
///   otherwise   → Σ w_k v_k / Σ w_k with v_0 = center
std::vector<double> combine_neighborhood(std::span<const double> center,
                                         const std::vector<std::vector<double>>& ring_means,
                                         const NeighborhoodConfig& config);

std::size_t combined_dimension(std::size_t base, const NeighborhoodConfig& config) noexcept;

struct EmbeddingConfig {
  int resolution = 11;
  EmbeddingMethod method = EmbeddingMethod::category_counting;
  NeighborhoodConfig neighborhood;

  /// Stable text identifying the feature space, e.g.
  /// "res=11;embedding=category_counting;neighborhood=squared_diminishing;k=5".
  std::string fingerprint() const;
  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

struct NormalizationParams {
  std::vector<double> min;
  std::vector<double> max;

  friend bool operator==(const NormalizationParams&, const NormalizationParams&) = default;
};

/// City-wide feature matrix, one row per grid cell (cells sorted).
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::string city_name, EmbeddingConfig config, std::vector<std::string> columns);

  const std::string& city_name() const noexcept { return city_name_; }
  const EmbeddingConfig& config() const noexcept { return config_; }
  const std::vector<std::string>& columns() const noexcept { return columns_; }
  std::size_t dimension() const noexcept { return columns_.size(); }
  std::size_t rows() const noexcept { return cells_.size(); }
  bool empty() const noexcept { return cells_.empty(); }
  const std::vector<CellId>& cells() const noexcept { return cells_; }

  bool normalized() const noexcept { return params_.has_value(); }
  const std::optional<NormalizationParams>& normalization() const noexcept { return params_; }

  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);
  std::optional<std::size_t> index_of(CellId cell) const;

  /// Appends a row; cells must be added in increasing order.
  void append(CellId cell, std::span<const double> values);

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

  template <class Archive>
  void serialize(Archive& ar);

 private:
  friend EmbeddingMatrix normalize_city(EmbeddingMatrix matrix);
  friend EmbeddingMatrix apply_normalization(EmbeddingMatrix matrix, const NormalizationParams& p);

  std::string city_name_;
  EmbeddingConfig config_;
  std::vector<std::string> columns_;
  std::vector<CellId> cells_;
  std::vector<double> data_;
  std::optional<NormalizationParams> params_;
};

/// Region vectors for every grid cell combined with their rings. Ring means
/// use only cells that belong to the grid; a ring with no such cell
/// contributes the zero vector at full weight.
EmbeddingMatrix build_embedding(const CityGrid& grid, EmbeddingMethod method,
                                const NeighborhoodConfig& neighborhood);

/// Per-column (x - min) / (max - min) over the city; constant columns map to
/// 0. Records min/max. Throws DataError for empty or already normalized input.
EmbeddingMatrix normalize_city(EmbeddingMatrix matrix);
/// Applies previously recorded min/max (no clamping).
EmbeddingMatrix apply_normalization(EmbeddingMatrix matrix, const NormalizationParams& params);

/// CSV with header "h3,<columns...>", one row per cell.
std::string embedding_to_csv(const EmbeddingMatrix& matrix);
/// {"fingerprint", "columns", "min", "max"} sidecar.
std::string normalization_to_json(const EmbeddingMatrix& matrix);
NormalizationParams normalization_from_json(std::string_view text);

void save_embedding(const EmbeddingMatrix& matrix, const std::filesystem::path& path);
EmbeddingMatrix load_embedding(const std::filesystem::path& path);

/// Shortest round-trip decimal form, used by every text artifact.
std::string format_double(double v);

}  // namespace bikesite
