#include "bikesite/embedding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <json.hpp>

#include "bikesite/errors.hpp"
#include "serialization.hpp"

namespace bikesite {
namespace {

constexpr std::string_view kEmbeddingMagic = "BSEMBD01";
constexpr std::uint32_t kEmbeddingVersion = 1;

// Shape vector slots for the four special categories.
constexpr std::size_t kWaterSlot = 0;
constexpr std::size_t kBikeSlot = 1;
constexpr std::size_t kDriveSlot = 2;
constexpr std::size_t kWalkSlot = 3;

bool is_special(CategoryId c) {
  return c == CategoryId::water || c == CategoryId::roads_bike || c == CategoryId::roads_drive ||
         c == CategoryId::roads_walk;
}

// Position of a non-special category among the 16 paired ones.
std::array<int, kCategoryCount> make_pair_slots() {
  std::array<int, kCategoryCount> slots{};
  int next = 0;
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    slots[i] = is_special(static_cast<CategoryId>(i)) ? -1 : next++;
  }
  return slots;
}

const std::array<int, kCategoryCount>& pair_slots() {
  static const auto slots = make_pair_slots();
  return slots;
}

const std::vector<Assignment>& cell_assignments(const CityGrid& grid, CellId cell) {
  return grid.assignments(cell);
}

}  // namespace

std::string_view name_of(EmbeddingMethod m) noexcept {
  switch (m) {
    case EmbeddingMethod::category_counting: return "category_counting";
    case EmbeddingMethod::shape_analysis: return "shape_analysis";
  }
  return "?";
}

std::string_view name_of(CombineMethod m) noexcept {
  switch (m) {
    case CombineMethod::concatenate: return "concatenate";
    case CombineMethod::average: return "average";
    case CombineMethod::diminishing: return "diminishing";
    case CombineMethod::squared_diminishing: return "squared_diminishing";
  }
  return "?";
}

EmbeddingMethod parse_embedding_method(std::string_view name) {
  if (name == "category_counting") return EmbeddingMethod::category_counting;
  if (name == "shape_analysis") return EmbeddingMethod::shape_analysis;
  throw ConfigError("unknown embedding method '" + std::string(name) +
                    "' (expected category_counting or shape_analysis)");
}

CombineMethod parse_combine_method(std::string_view name) {
  for (auto m : {CombineMethod::concatenate, CombineMethod::average, CombineMethod::diminishing,
                 CombineMethod::squared_diminishing}) {
    if (name == name_of(m)) return m;
  }
  throw ConfigError("unknown neighborhood method '" + std::string(name) +
                    "' (expected concatenate, average, diminishing or squared_diminishing)");
}

std::size_t base_dimension(EmbeddingMethod m) noexcept {
  return m == EmbeddingMethod::category_counting ? kCountDimension : kShapeDimension;
}

std::vector<std::string> base_columns(EmbeddingMethod m) {
  std::vector<std::string> cols;
  if (m == EmbeddingMethod::category_counting) {
    for (auto n : kCategoryNames) cols.emplace_back(n);
    return cols;
  }
  cols = {"water_area", "roads_bike_length", "roads_drive_length", "roads_walk_length"};
  for (std::size_t i = 0; i < kCategoryCount; ++i) {
    const auto c = static_cast<CategoryId>(i);
    if (is_special(c)) continue;
    cols.push_back(std::string(name_of(c)) + "_area");
    cols.push_back(std::string(name_of(c)) + "_points");
  }
  return cols;
}

std::vector<double> combination_weights(const NeighborhoodConfig& config) {
  if (config.k < 0) throw ConfigError("neighborhood size K must be >= 0");
  std::vector<double> w(static_cast<std::size_t>(config.k) + 1, 1.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double d = static_cast<double>(k + 1);
    switch (config.method) {
      case CombineMethod::diminishing: w[k] = 1.0 / d; break;
      case CombineMethod::squared_diminishing: w[k] = 1.0 / (d * d); break;
      default: break;
    }
  }
  return w;
}

RegionVector embed_count(const CityGrid& grid, CellId cell) {
  RegionVector v{cell, EmbeddingMethod::category_counting, std::vector<double>(kCountDimension, 0.0)};
  for (const auto& a : cell_assignments(grid, cell)) v.values[index_of(a.category)] += 1.0;
  return v;
}

RegionVector embed_shape(const CityGrid& grid, CellId cell) {
  RegionVector v{cell, EmbeddingMethod::shape_analysis, std::vector<double>(kShapeDimension, 0.0)};
  for (const auto& a : cell_assignments(grid, cell)) {
    switch (a.category) {
      case CategoryId::water:
        if (a.shape == ShapeClass::area) v.values[kWaterSlot] += a.measure;
        break;
      case CategoryId::roads_bike:
        if (a.shape == ShapeClass::line) v.values[kBikeSlot] += a.measure;
        break;
      case CategoryId::roads_drive:
        if (a.shape == ShapeClass::line) v.values[kDriveSlot] += a.measure;
        break;
      case CategoryId::roads_walk:
        if (a.shape == ShapeClass::line) v.values[kWalkSlot] += a.measure;
        break;
      default: {
        const auto base = 4 + 2 * static_cast<std::size_t>(pair_slots()[index_of(a.category)]);
        if (a.shape == ShapeClass::area) v.values[base] += a.measure;
        else if (a.shape == ShapeClass::point) v.values[base + 1] += 1.0;
        break;
      }
    }
  }
  return v;
}

RegionVector embed_region(const CityGrid& grid, CellId cell, EmbeddingMethod method) {
  return method == EmbeddingMethod::category_counting ? embed_count(grid, cell)
                                                      : embed_shape(grid, cell);
}

std::vector<double> mean_vector(const std::vector<std::vector<double>>& vectors,
                                std::size_t dimension) {
  std::vector<double> out(dimension, 0.0);
  if (vectors.empty()) return out;
  for (const auto& v : vectors) {
    if (v.size() != dimension) throw DataError("mean_vector: dimension mismatch");
    for (std::size_t i = 0; i < dimension; ++i) out[i] += v[i];
  }
  const double n = static_cast<double>(vectors.size());
  for (auto& x : out) x /= n;
  return out;
}

std::size_t combined_dimension(std::size_t base, const NeighborhoodConfig& config) noexcept {
  if (config.method == CombineMethod::concatenate) {
    return base * (static_cast<std::size_t>(std::max(config.k, 0)) + 1);
  }
  return base;
}

std::vector<double> combine_neighborhood(std::span<const double> center,
                                         const std::vector<std::vector<double>>& ring_means,
                                         const NeighborhoodConfig& config) {
  if (config.k < 0) throw ConfigError("neighborhood size K must be >= 0");
  if (ring_means.size() != static_cast<std::size_t>(config.k)) {
    throw DataError("combine_neighborhood: got " + std::to_string(ring_means.size()) +
                    " ring vectors for K=" + std::to_string(config.k));
  }
  const std::size_t n = center.size();
  for (const auto& r : ring_means) {
    if (r.size() != n) throw DataError("combine_neighborhood: dimension mismatch");
  }
  if (config.method == CombineMethod::concatenate) {
    std::vector<double> out(center.begin(), center.end());
    out.reserve(n * (ring_means.size() + 1));
    for (const auto& r : ring_means) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
  const auto w = combination_weights(config);
  double total = 0.0;
  for (double x : w) total += x;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = w[0] * center[i];
    for (std::size_t k = 0; k < ring_means.size(); ++k) s += w[k + 1] * ring_means[k][i];
    out[i] = s / total;
  }
  return out;
}

std::string EmbeddingConfig::fingerprint() const {
  return "res=" + std::to_string(resolution) + ";embedding=" + std::string(name_of(method)) +
         ";neighborhood=" + std::string(name_of(neighborhood.method)) +
         ";k=" + std::to_string(neighborhood.k);
}

EmbeddingMatrix::EmbeddingMatrix(std::string city_name, EmbeddingConfig config,
                                 std::vector<std::string> columns)
    : city_name_(std::move(city_name)), config_(config), columns_(std::move(columns)) {}

std::span<const double> EmbeddingMatrix::row(std::size_t i) const {
  if (i >= rows()) throw LookupError("embedding row " + std::to_string(i) + " out of range");
  return {data_.data() + i * dimension(), dimension()};
}

std::span<double> EmbeddingMatrix::row(std::size_t i) {
  if (i >= rows()) throw LookupError("embedding row " + std::to_string(i) + " out of range");
  return {data_.data() + i * dimension(), dimension()};
}

std::optional<std::size_t> EmbeddingMatrix::index_of(CellId cell) const {
  auto it = std::lower_bound(cells_.begin(), cells_.end(), cell);
  if (it == cells_.end() || *it != cell) return std::nullopt;
  return static_cast<std::size_t>(it - cells_.begin());
}

void EmbeddingMatrix::append(CellId cell, std::span<const double> values) {
  if (values.size() != dimension()) throw DataError("embedding row has the wrong dimension");
  if (!cells_.empty() && !(cells_.back() < cell)) {
    throw DataError("embedding rows must be appended in increasing cell order");
  }
  cells_.push_back(cell);
  data_.insert(data_.end(), values.begin(), values.end());
}

template <class Archive>
void EmbeddingMatrix::serialize(Archive& ar) {
  ar(city_name_, config_.resolution, config_.method, config_.neighborhood.k,
     config_.neighborhood.method, columns_, cells_, data_);
  bool has = params_.has_value();
  ar(has);
  if constexpr (Archive::is_loading::value) {
    if (has) params_.emplace();
    else params_.reset();
  }
  if (has) ar(params_->min, params_->max);
}

EmbeddingMatrix build_embedding(const CityGrid& grid, EmbeddingMethod method,
                                const NeighborhoodConfig& neighborhood) {
  if (neighborhood.k < 0) throw ConfigError("neighborhood size K must be >= 0");
  EmbeddingConfig config{grid.resolution(), method, neighborhood};

  auto base = base_columns(method);
  std::vector<std::string> columns;
  if (neighborhood.method == CombineMethod::concatenate) {
    columns = base;
    for (int k = 1; k <= neighborhood.k; ++k) {
      for (const auto& c : base) columns.push_back("ring" + std::to_string(k) + ":" + c);
    }
  } else {
    columns = base;
  }
  EmbeddingMatrix matrix(grid.city_name(), config, std::move(columns));

  std::vector<std::vector<double>> single(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    single[i] = embed_region(grid, grid.cells()[i], method).values;
  }
  const std::size_t n = base.size();
  std::vector<std::vector<double>> ring_means;
  std::vector<std::vector<double>> members;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ring_means.clear();
    if (neighborhood.k > 0) {
      const auto hood = k_rings(grid.cells()[i], neighborhood.k);
      for (const auto& ring : hood.rings) {
        members.clear();
        for (CellId c : ring) {
          if (auto idx = grid.index_of(c)) members.push_back(single[*idx]);
        }
        ring_means.push_back(mean_vector(members, n));
      }
    }
    matrix.append(grid.cells()[i], combine_neighborhood(single[i], ring_means, neighborhood));
  }
  return matrix;
}

EmbeddingMatrix normalize_city(EmbeddingMatrix matrix) {
  if (matrix.empty()) throw DataError("normalize_city: the embedding matrix is empty");
  if (matrix.normalized()) throw DataError("normalize_city: the matrix is already normalized");
  const std::size_t d = matrix.dimension();
  NormalizationParams p{std::vector<double>(d), std::vector<double>(d)};
  auto first = matrix.row(0);
  std::copy(first.begin(), first.end(), p.min.begin());
  std::copy(first.begin(), first.end(), p.max.begin());
  for (std::size_t r = 1; r < matrix.rows(); ++r) {
    auto row = matrix.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      p.min[j] = std::min(p.min[j], row[j]);
      p.max[j] = std::max(p.max[j], row[j]);
    }
  }
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto row = matrix.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double span = p.max[j] - p.min[j];
      row[j] = span > 0.0 ? std::clamp((row[j] - p.min[j]) / span, 0.0, 1.0) : 0.0;
    }
  }
  matrix.params_ = std::move(p);
  return matrix;
}

EmbeddingMatrix apply_normalization(EmbeddingMatrix matrix, const NormalizationParams& params) {
  if (matrix.normalized()) throw DataError("apply_normalization: the matrix is already normalized");
  const std::size_t d = matrix.dimension();
  if (params.min.size() != d || params.max.size() != d) {
    throw DataError("apply_normalization: parameter dimension does not match the matrix");
  }
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    auto row = matrix.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      const double span = params.max[j] - params.min[j];
      row[j] = span > 0.0 ? (row[j] - params.min[j]) / span : 0.0;
    }
  }
  matrix.params_ = params;
  return matrix;
}

std::string format_double(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string embedding_to_csv(const EmbeddingMatrix& matrix) {
  std::string out = "h3";
  for (const auto& c : matrix.columns()) {
    out += ',';
    out += c;
  }
  out += '\n';
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    out += matrix.cells()[r].to_string();
    for (double v : matrix.row(r)) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string normalization_to_json(const EmbeddingMatrix& matrix) {
  if (!matrix.normalized()) throw DataError("normalization_to_json: matrix is not normalized");
  nlohmann::ordered_json doc;
  doc["city"] = matrix.city_name();
  doc["fingerprint"] = matrix.config().fingerprint();
  doc["columns"] = matrix.columns();
  doc["min"] = matrix.normalization()->min;
  doc["max"] = matrix.normalization()->max;
  return doc.dump(2) + "\n";
}

NormalizationParams normalization_from_json(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("normalization sidecar: ") + e.what(), e.byte);
  }
  NormalizationParams p;
  try {
    p.min = doc.at("min").get<std::vector<double>>();
    p.max = doc.at("max").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("normalization sidecar: ") + e.what(), 0);
  }
  if (p.min.size() != p.max.size()) throw ParseError("normalization sidecar: min/max length differ", 0);
  return p;
}

void save_embedding(const EmbeddingMatrix& matrix, const std::filesystem::path& path) {
  write_snapshot(path, kEmbeddingMagic, kEmbeddingVersion, matrix);
}

EmbeddingMatrix load_embedding(const std::filesystem::path& path) {
  return read_snapshot<EmbeddingMatrix>(path, kEmbeddingMagic, kEmbeddingVersion);
}

}  // namespace bikesite
