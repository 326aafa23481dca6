#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bikesite/embedding.hpp"
#include "bikesite/stations.hpp"

namespace bikesite {

struct LabeledRegion {
  CellId cell;
  std::vector<double> features;
  int label = 0;  // 1 = at least one station in the cell

  friend bool operator==(const LabeledRegion&, const LabeledRegion&) = default;
};

/// Labels every matrix row by station presence. Each station goes to the
/// cell returned by the point-to-cell lookup; stations outside the matrix
/// are ignored with a warning.
std::vector<LabeledRegion> label_regions(const EmbeddingMatrix& matrix,
                                         const std::vector<StationRecord>& stations,
                                         std::vector<std::string>* warnings = nullptr);

std::size_t count_positives(const std::vector<LabeledRegion>& regions) noexcept;

inline constexpr double kMinRatio = 1.0;
inline constexpr double kMaxRatio = 5.0;

struct SamplingSpec {
  double ratio = 2.5;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless ratio ∈ [1, 5].
  void validate() const;
};

/// round-half-up(ratio × positives).
std::size_t negative_count(std::size_t positives, double ratio);

/// All positives followed by round(ratio·|positives|) negatives drawn
/// uniformly without replacement. Order: positives in input order, then the
/// sampled negatives in draw order.
std::vector<LabeledRegion> sample_training(const std::vector<LabeledRegion>& labeled,
                                           const SamplingSpec& spec);

enum class SplitMode : std::uint8_t { same_city, transfer };

struct ExperimentSplit {
  std::vector<LabeledRegion> train;
  std::vector<LabeledRegion> eval;
  std::string train_city;
  std::string eval_city;
  SamplingSpec spec;
  SplitMode mode = SplitMode::same_city;
};

inline constexpr double kDefaultHoldout = 0.3;

/// Samples as sample_training, then holds out round-half-up(holdout·n) of
/// each class for evaluation; the rest trains. Train and eval are disjoint.
ExperimentSplit build_same_city_split(const std::vector<LabeledRegion>& labeled,
                                      const std::string& city, const SamplingSpec& spec,
                                      double holdout = kDefaultHoldout);

/// Train = sampled set of the train city, eval = every cell of the eval
/// city. Throws ConfigError when the two matrices differ in feature space.
ExperimentSplit build_transfer_split(const EmbeddingMatrix& train_matrix,
                                     const std::vector<StationRecord>& train_stations,
                                     const EmbeddingMatrix& eval_matrix,
                                     const std::vector<StationRecord>& eval_stations,
                                     const SamplingSpec& spec);
/// Same, over already-labeled regions.
ExperimentSplit build_transfer_split(const std::vector<LabeledRegion>& train_labeled,
                                     const std::string& train_city,
                                     const std::vector<LabeledRegion>& eval_labeled,
                                     const std::string& eval_city, const SamplingSpec& spec);

/// Throws ConfigError unless both matrices share config and columns.
void require_same_feature_space(const EmbeddingMatrix& a, const EmbeddingMatrix& b);

/// "h3,label,role" audit CSV; role ∈ {train, eval}.
std::string split_to_csv(const ExperimentSplit& split);

}  // namespace bikesite
