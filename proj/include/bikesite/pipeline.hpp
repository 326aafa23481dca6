#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bikesite/dataset.hpp"
#include "bikesite/embedding.hpp"
#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "bikesite/hexgrid.hpp"
#include "bikesite/model.hpp"
#include "bikesite/stations.hpp"

namespace bikesite {

/// A failure inside one pipeline stage, with a hint on what to do about it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what, std::string hint)
      : Error("[" + stage + "] " + what + (hint.empty() ? "" : " (hint: " + hint + ")")),
        stage_(std::move(stage)),
        hint_(std::move(hint)) {}
  const std::string& stage() const noexcept { return stage_; }
  const std::string& hint() const noexcept { return hint_; }

 private:
  std::string stage_;
  std::string hint_;
};

enum class HeatmapFormat : std::uint8_t { geojson, html };
std::string_view name_of(HeatmapFormat f) noexcept;
HeatmapFormat parse_heatmap_format(std::string_view name);

struct CitySpec {
  std::string name;
  BoundarySource boundary;
  std::optional<StationSource> stations;
  /// Stored Overpass response imported into the cache before fetching.
  std::filesystem::path osm_file;
};

struct OutputConfig {
  std::filesystem::path dir = "out";
  std::vector<HeatmapFormat> formats{HeatmapFormat::geojson};
  double export_threshold = kDefaultThreshold;
  /// Suppresses timestamps in HTML output.
  bool deterministic = true;
};

struct PipelineConfig {
  std::vector<CitySpec> cities;
  int resolution = 11;
  EmbeddingMethod embedding = EmbeddingMethod::category_counting;
  NeighborhoodConfig neighborhood{5, CombineMethod::squared_diminishing};
  SamplingSpec sampling{2.5, 0};  // seed = base seed
  double holdout = kDefaultHoldout;
  ForestParams training;
  int iterations = 100;
  double threshold = kDefaultThreshold;
  /// Empty → same-city experiment per city. Otherwise train on these and
  /// evaluate on every cell of eval_city.
  std::vector<std::string> train_cities;
  std::optional<std::string> eval_city;
  std::filesystem::path rules_file;
  std::filesystem::path cache_dir = default_cache_root();
  bool offline = false;
  unsigned threads = 1;
  OutputConfig output;

  /// Throws ConfigError listing every invalid field.
  void validate() const;
  EmbeddingConfig embedding_config() const { return {resolution, embedding, neighborhood}; }
  ExperimentOptions experiment_options() const;
  const CitySpec& city(const std::string& name) const;

  /// Canonical JSON of the fields that influence results (paths to outputs,
  /// cache and thread count excluded).
  std::string canonical_json() const;
  /// SHA-256 of canonical_json(), hex.
  std::string fingerprint() const;
};

/// Parses and validates; relative paths resolve against `base_dir`.
PipelineConfig parse_pipeline_config(std::string_view json_text,
                                     const std::filesystem::path& base_dir = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
/// Published JSON schema of the config file.
std::string_view pipeline_config_schema();

/// K limits per resolution for sweeps: 3 at 9, 10 at 10, 25 at 11.
int max_neighborhood_k(int resolution);

// ---- stages -------------------------------------------------------------

struct CityData {
  CityExtract extract;
  CityGrid grid;
  AssignDiagnostics diagnostics;
  EmbeddingMatrix matrix;  // normalized
  std::vector<LabeledRegion> labeled;
  std::vector<std::string> warnings;
};

/// Fetch (through the cache) and attach stations.
CityExtract ingest_city(const CitySpec& spec, const PipelineConfig& config,
                        std::vector<std::string>& warnings);
CityGrid grid_city(const CityExtract& extract, int resolution, AssignDiagnostics* diagnostics = nullptr);
/// Embeds, combines and normalizes.
EmbeddingMatrix embed_city(const CityGrid& grid, const PipelineConfig& config);
CityData prepare_city(const CitySpec& spec, const PipelineConfig& config);

/// Split factory for the configured experiment. `train` and `eval` point to
/// prepared cities and must outlive the factory.
SplitFactory same_city_factory(const CityData& city, const PipelineConfig& config);
SplitFactory multi_city_factory(std::vector<const CityData*> train, const CityData& eval,
                                const PipelineConfig& config);

// ---- artifacts ----------------------------------------------------------

/// "# bikesite fingerprint=<fp> base_seed=<seed>" header line.
std::string artifact_stamp(const std::string& fingerprint, std::uint64_t base_seed);

std::string predictions_to_csv(const PredictionMap& pred, const std::vector<LabeledRegion>* truth,
                               const std::string& stamp);
PredictionMap parse_predictions_csv(std::string_view text);

/// FeatureCollection of cell polygons with probability ≥ threshold (all
/// cells when threshold is nullopt), sorted by cell; carries the fingerprint
/// as a foreign member.
std::string prediction_to_geojson(const PredictionMap& pred, std::optional<double> threshold);

struct HeatmapExport {
  std::string content;
  std::size_t exported = 0;
  bool empty_warning = false;
};

struct HtmlOptions {
  std::string title = "station probability";
  bool deterministic = true;
  const std::vector<StationRecord>* stations = nullptr;
};

/// threshold ∈ (0, 1); an empty result yields an empty collection and sets
/// empty_warning.
HeatmapExport export_heatmap(const PredictionMap& pred, double threshold, HeatmapFormat format,
                             const HtmlOptions& html = {});

std::string metrics_header();
std::string metrics_row(const std::string& train, const std::string& eval, int resolution,
                        const MetricSummary& m);

struct ExperimentRecord {
  std::string train_city;
  std::string eval_city;
  ExperimentResult result;
};

/// One row per iteration: train_city,eval_city,iteration,seed,tp,fp,fn,tn,
/// accuracy,f1,precision,recall.
std::string iterations_csv(const std::vector<ExperimentRecord>& records, std::uint64_t base_seed,
                           const std::string& stamp);

/// Runs the configured experiments over prepared cities: one transfer run
/// when eval_city is set, else a same-city run per city with stations.
/// Each averaged map covers every cell of the eval city.
std::vector<ExperimentRecord> run_experiments(const PipelineConfig& config,
                                              const std::vector<CityData>& cities);

struct PipelineArtifacts {
  std::filesystem::path dir;
  std::string fingerprint;
  std::vector<std::filesystem::path> files;  // relative to dir, sorted
  std::vector<ExperimentRecord> experiments;
};

/// ingest → grid → embed → label/sample → train → predict → export.
/// Writes under config.output.dir:
///   config.json, metrics.csv, iterations.csv, manifest.json
///   <city>/embedding.csv, <city>/normalization.json, <city>/matrix.bin,
///   <city>/stations.geojson (serve snapshot)
///   <eval city>/predictions.csv, <eval city>/heatmap.geojson|html
PipelineArtifacts run_pipeline(const PipelineConfig& config);

/// Writes the per-city snapshot used by serve.
void write_city_snapshot(const CityData& city, const std::filesystem::path& dir);

// ---- sweeps and transfer -------------------------------------------------

enum class SweepAxis : std::uint8_t { neighborhood_method, embedding_method, imbalance_ratio, resolution_and_k };
std::string_view name_of(SweepAxis a) noexcept;
SweepAxis parse_sweep_axis(std::string_view name);

struct SweepRow {
  int resolution = 0;
  std::string value;
  std::string status = "ok";  // or "skipped: <reason>"
  MetricSummary mean;
  double seconds = 0.0;
};

struct SweepReport {
  SweepAxis axis{};
  std::string fingerprint;
  std::uint64_t base_seed = 0;
  std::vector<SweepRow> rows;

  /// axis,resolution,value,status,iterations,accuracy,f1,precision,recall
  /// (plus seconds when `timing`).
  std::string to_csv(bool timing = false) const;
};

/// One row per value, metrics averaged over the same-city experiments of all
/// cities (or the configured transfer). Values for resolution_and_k are
/// "<res>:<K>". Unsupported values become skipped rows.
SweepReport sweep(const PipelineConfig& base, SweepAxis axis, const std::vector<std::string>& values);

/// Transfer matrix over every configured city with stations.
TransferMatrix run_transfer(const PipelineConfig& config);

}  // namespace bikesite
