#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bikesite/dataset.hpp"
#include "bikesite/forest.hpp"

namespace bikesite {

/// Trained station classifier. Immutable after training.
class ClassifierModel {
 public:
  /// Throws DataError for empty or single-class training sets.
  static ClassifierModel train(const std::vector<LabeledRegion>& train, const ForestParams& params,
                               std::vector<std::string> trained_on, std::string fingerprint);

  std::string_view kind() const noexcept { return "random_forest"; }
  const std::vector<std::string>& trained_on() const noexcept { return trained_on_; }
  /// Embedding fingerprint of the feature space the model was trained in.
  const std::string& fingerprint() const noexcept { return fingerprint_; }
  std::size_t feature_dim() const noexcept { return forest_.feature_dim(); }
  const ForestParams& params() const noexcept { return forest_.params(); }
  const RandomForest& forest() const noexcept { return forest_; }

  /// Throws DataError on dimension mismatch.
  double predict(std::span<const double> features) const { return forest_.predict_proba(features); }
  const std::vector<double>& feature_importance() const noexcept { return forest_.feature_importance(); }

  friend bool operator==(const ClassifierModel&, const ClassifierModel&) = default;

  template <class Archive>
  void serialize(Archive& ar) {
    ar(trained_on_, fingerprint_, forest_);
  }

 private:
  std::vector<std::string> trained_on_;
  std::string fingerprint_;
  RandomForest forest_;
};

ClassifierModel train(const ExperimentSplit& split, const ForestParams& params,
                      const std::string& fingerprint);

void save_model(const ClassifierModel& model, const std::filesystem::path& path);
/// Refuses (ConfigError) when `expected_fingerprint` is given and differs,
/// unless `force`.
ClassifierModel load_model(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_fingerprint = std::nullopt,
                           bool force = false);

struct PredictionMap {
  std::map<CellId, double> cells;
  std::string fingerprint;
  int iterations_averaged = 1;

  std::optional<double> at(CellId cell) const;
  std::size_t size() const noexcept { return cells.size(); }
  bool empty() const noexcept { return cells.empty(); }
};

/// Throws ConfigError when the matrix feature space differs from the model's.
PredictionMap predict_proba(const ClassifierModel& model, const EmbeddingMatrix& matrix);
PredictionMap predict_proba(const ClassifierModel& model, const std::vector<LabeledRegion>& regions);

/// Which ratios hit a zero denominator. Such ratios are reported as 0.
struct MetricFlags {
  bool accuracy_undefined = false;
  bool precision_undefined = false;  // tp + fp = 0
  bool recall_undefined = false;     // tp + fn = 0 (no positives to find)
  bool f1_undefined = false;         // precision + recall = 0

  friend bool operator==(const MetricFlags&, const MetricFlags&) = default;
};

struct EvalMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  MetricFlags flags;

  std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
  friend bool operator==(const EvalMetrics&, const EvalMetrics&) = default;
};

EvalMetrics compute_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn);

inline constexpr double kDefaultThreshold = 0.5;

/// Predicted positive ⇔ probability ≥ threshold, threshold ∈ (0, 1).
/// Throws LookupError when a truth cell is missing from the prediction.
EvalMetrics evaluate(const PredictionMap& pred, const std::vector<LabeledRegion>& truth,
                     double threshold = kDefaultThreshold);

/// Arithmetic means over iterations. Recall is averaged over the iterations
/// where it is defined; `recall_applicable` is false when it never was.
struct MetricSummary {
  double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t iterations = 0;
  bool recall_applicable = true;
};

MetricSummary summarize(const std::vector<EvalMetrics>& runs);

struct PrPoint {
  double threshold;
  double precision;
  double recall;
};
/// Precision/recall at each distinct predicted probability (descending).
std::vector<PrPoint> pr_points(const PredictionMap& pred, const std::vector<LabeledRegion>& truth);

using SplitFactory = std::function<ExperimentSplit(std::uint64_t seed)>;

struct ExperimentOptions {
  int iterations = 100;
  std::uint64_t base_seed = 0;  // iteration i uses base_seed + i
  ForestParams forest;
  double threshold = kDefaultThreshold;
  std::string fingerprint;
  unsigned threads = 1;
  /// When set, every iteration also predicts these regions and the averaged
  /// map covers exactly them; otherwise each eval set is predicted and every
  /// cell is averaged over the iterations it was evaluated in.
  const std::vector<LabeledRegion>* heatmap = nullptr;
};

struct ExperimentResult {
  PredictionMap averaged;
  std::vector<EvalMetrics> per_iteration;
  MetricSummary mean;
};

/// Runs iterations independently (optionally on several threads) and reduces
/// in iteration order, so results do not depend on `threads`. A failing
/// iteration raises ExperimentError carrying its seed.
ExperimentResult repeated_experiment(const SplitFactory& factory, const ExperimentOptions& options);

struct PreparedCity {
  std::string name;
  EmbeddingMatrix matrix;
  std::vector<StationRecord> stations;
};

struct TransferMatrix {
  /// Sorted by station count descending, then name.
  std::vector<std::string> cities;
  std::vector<std::size_t> station_counts;
  /// recall[train][eval]; nullopt = not applicable (a city of the pair has
  /// no stations).
  std::vector<std::vector<std::optional<double>>> recall;

  /// "train_city,<eval cities...>" rows, "NA" for not-applicable entries.
  std::string to_csv() const;
  /// SHA-256 of to_csv().
  std::string digest() const;
};

TransferMatrix transfer_matrix(const std::vector<PreparedCity>& cities, const SamplingSpec& spec,
                               const ExperimentOptions& options);

}  // namespace bikesite
