// bikesite command line: stage-by-stage tools plus the full pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "bikesite/hashing.hpp"
#include "bikesite/pipeline.hpp"
#include "bikesite/server.hpp"

using namespace bikesite;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw LookupError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const fs::path& p, std::string_view text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

void emit(const std::string& out, std::string_view text) {
  if (out.empty() || out == "-") std::cout << text;
  else spit(out, text);
}

// Flags mirroring PipelineConfig fields; unset flags keep the config value.
struct Overrides {
  std::string config;
  std::optional<int> resolution;
  std::optional<std::string> embedding;
  std::optional<std::string> neighborhood;
  std::optional<int> k;
  std::optional<double> ratio;
  std::optional<std::uint64_t> seed;
  std::optional<double> holdout;
  std::optional<int> trees;
  std::optional<int> max_depth;
  std::optional<int> min_leaf;
  std::optional<std::string> weighting;
  std::optional<int> iterations;
  std::optional<double> threshold;
  std::optional<std::string> out_dir;
  std::optional<std::string> cache_dir;
  std::optional<unsigned> threads;
  bool offline = false;

  void add_config(CLI::App* app, bool required) {
    auto* o = app->add_option("-c,--config", config, "pipeline config JSON");
    if (required) o->required();
  }

  void add_embedding(CLI::App* app) {
    app->add_option("--resolution", resolution, "H3 resolution (9, 10, 11)");
    app->add_option("--embedding", embedding, "category_counting | shape_analysis");
    app->add_option("--neighborhood", neighborhood, "concatenate | average | diminishing | squared_diminishing");
    app->add_option("-k,--neighborhood-size", k, "number of rings K");
  }

  void add_training(CLI::App* app) {
    app->add_option("--ratio", ratio, "negatives per positive, 1..5");
    app->add_option("--seed", seed, "base seed");
    app->add_option("--holdout", holdout, "same-city evaluation fraction");
    app->add_option("--trees", trees, "forest size");
    app->add_option("--max-depth", max_depth, "0 = unlimited");
    app->add_option("--min-leaf", min_leaf, "minimum samples per leaf");
    app->add_option("--class-weighting", weighting, "none | balanced | balanced_per_sample");
    app->add_option("--iterations", iterations, "repeated experiment count");
    app->add_option("--threshold", threshold, "decision threshold in (0,1)");
    app->add_option("--threads", threads, "worker threads for iterations");
  }

  void add_io(CLI::App* app) {
    app->add_option("-o,--out", out_dir, "output directory");
    app->add_option("--cache-dir", cache_dir, "response cache root (default $BIKESITE_CACHE_DIR or ./cache)");
    app->add_flag("--offline", offline, "never touch the network");
  }

  PipelineConfig load() const {
    PipelineConfig cfg;
    if (!config.empty()) cfg = load_pipeline_config(config);
    apply(cfg);
    return cfg;
  }

  void apply(PipelineConfig& cfg) const {
    if (resolution) cfg.resolution = *resolution;
    if (embedding) cfg.embedding = parse_embedding_method(*embedding);
    if (neighborhood) cfg.neighborhood.method = parse_combine_method(*neighborhood);
    if (k) cfg.neighborhood.k = *k;
    if (ratio) cfg.sampling.ratio = *ratio;
    if (seed) cfg.sampling.seed = *seed;
    if (holdout) cfg.holdout = *holdout;
    if (trees) cfg.training.tree_count = *trees;
    if (max_depth) cfg.training.max_depth = *max_depth;
    if (min_leaf) cfg.training.min_leaf = *min_leaf;
    if (weighting) cfg.training.weighting = parse_class_weighting(*weighting);
    if (iterations) cfg.iterations = *iterations;
    if (threshold) cfg.threshold = *threshold;
    if (out_dir) cfg.output.dir = *out_dir;
    if (cache_dir) cfg.cache_dir = *cache_dir;
    if (threads) cfg.threads = *threads;
    if (offline) cfg.offline = true;
  }
};

// A city snapshot directory: matrix.bin + stations.geojson.
struct CityDir {
  EmbeddingMatrix matrix;
  std::vector<StationRecord> stations;
};

CityDir load_city_dir(const fs::path& dir) {
  CityDir c;
  c.matrix = load_embedding(dir / "matrix.bin");
  if (fs::exists(dir / "stations.geojson")) {
    c.stations = parse_station_geojson(slurp(dir / "stations.geojson"), c.matrix.city_name()).records;
  }
  return c;
}

std::vector<StationRecord> load_station_file(const fs::path& p) {
  const auto text = slurp(p);
  auto load = p.extension() == ".csv" ? parse_station_csv(text) : parse_station_geojson(text);
  for (const auto& w : load.warnings) spdlog::warn("{}", w);
  return load.records;
}

int cmd_ingest(const Overrides& ov, const std::vector<std::string>& only) {
  auto cfg = ov.load();
  const fs::path out = ov.out_dir ? fs::path(*ov.out_dir) : cfg.output.dir;
  for (const auto& spec : cfg.cities) {
    if (!only.empty() && std::find(only.begin(), only.end(), spec.name) == only.end()) continue;
    std::vector<std::string> warnings;
    auto extract = ingest_city(spec, cfg, warnings);
    for (const auto& w : warnings) spdlog::warn("{}", w);
    save_extract(extract, out / spec.name / "extract.bin");
    spit(out / spec.name / "stations.geojson", stations_to_geojson(extract.stations));
    const auto counts = extract.category_counts();
    std::cout << spec.name << ": " << extract.features.size() << " features, " << extract.stations.size()
              << " stations, snapshot " << extract.snapshot_id.substr(0, 16) << "\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
      std::cout << "  " << kCategoryNames[i] << " " << counts[i] << "\n";
    }
  }
  return 0;
}

int cmd_grid(const std::string& extract_path, int resolution, const std::string& out, const std::string& geojson) {
  const auto extract = load_extract(extract_path);
  AssignDiagnostics diag;
  const auto grid = grid_city(extract, resolution, &diag);
  for (const auto& m : diag.messages) spdlog::warn("{}", m);
  save_grid(grid, out);
  if (!geojson.empty()) spit(geojson, grid_to_geojson(grid));
  std::cout << extract.city_name << ": " << grid.size() << " cells at resolution " << resolution << ", "
            << diag.assigned_features << " features assigned, " << diag.outside_features << " outside, "
            << diag.skipped_invalid << " invalid\n";
  return 0;
}

int cmd_embed(const Overrides& ov, const std::string& grid_path, const std::string& out, const std::string& csv,
              const std::string& sidecar, const std::string& stations) {
  auto cfg = ov.load();
  const auto grid = load_grid(grid_path);
  cfg.resolution = grid.resolution();
  const auto matrix = embed_city(grid, cfg);
  save_embedding(matrix, out);
  if (!csv.empty()) spit(csv, embedding_to_csv(matrix));
  if (!sidecar.empty()) spit(sidecar, normalization_to_json(matrix));
  if (!stations.empty()) {
    const fs::path dir = fs::path(out).parent_path();
    spit(dir / "stations.geojson", stations_to_geojson(load_station_file(stations)));
  }
  std::cout << matrix.city_name() << ": " << matrix.rows() << " x " << matrix.dimension() << " ("
            << matrix.config().fingerprint() << ")\n";
  return 0;
}

int cmd_train(const Overrides& ov, const std::vector<std::string>& dirs, const std::string& out) {
  auto cfg = ov.load();
  std::vector<LabeledRegion> train;
  std::vector<std::string> names;
  std::string fingerprint;
  std::vector<std::string> columns;
  for (std::size_t j = 0; j < dirs.size(); ++j) {
    auto city = load_city_dir(dirs[j]);
    if (fingerprint.empty()) {
      fingerprint = city.matrix.config().fingerprint();
      columns = city.matrix.columns();
    } else if (fingerprint != city.matrix.config().fingerprint()) {
      throw ConfigError("cities use different embeddings: " + fingerprint + " vs " + city.matrix.config().fingerprint());
    }
    auto labeled = label_regions(city.matrix, city.stations);
    auto part = sample_training(labeled, SamplingSpec{cfg.sampling.ratio, cfg.sampling.seed + j * 0x9e3779b97f4a7c15ULL});
    train.insert(train.end(), part.begin(), part.end());
    names.push_back(city.matrix.city_name());
  }
  auto params = cfg.training;
  params.seed = cfg.sampling.seed;
  const auto model = ClassifierModel::train(train, params, names, fingerprint);
  save_model(model, out);
  std::cout << "trained on " << train.size() << " regions; feature importance:\n";
  const auto& imp = model.feature_importance();
  for (std::size_t i = 0; i < imp.size(); ++i) std::cout << "  " << columns[i] << " " << format_double(imp[i]) << "\n";
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& dir, const std::string& out,
                const std::string& geojson, bool force) {
  auto city = load_city_dir(dir);
  const auto model = load_model(model_path, city.matrix.config().fingerprint(), force);
  auto pred = predict_proba(model, city.matrix);
  pred.fingerprint = model.fingerprint();
  auto labeled = label_regions(city.matrix, city.stations);
  emit(out, predictions_to_csv(pred, &labeled, artifact_stamp(sha256_hex(model.fingerprint()), model.params().seed)));
  if (!geojson.empty()) spit(geojson, prediction_to_geojson(pred, std::nullopt));
  return 0;
}

int cmd_evaluate(const std::string& predictions, const std::string& stations, double threshold, bool pr) {
  const auto pred = parse_predictions_csv(slurp(predictions));
  if (pred.empty()) throw DataError("no predictions in " + predictions);
  const int res = pred.cells.begin()->first.resolution();
  std::vector<LabeledRegion> truth;
  for (const auto& [cell, _] : pred.cells) truth.push_back({cell, {}, 0});
  std::size_t outside = 0;
  for (const auto& s : load_station_file(stations)) {
    const auto cell = cell_at(s.location, res);
    auto it = std::lower_bound(truth.begin(), truth.end(), cell,
                               [](const LabeledRegion& r, CellId c) { return r.cell < c; });
    if (it != truth.end() && it->cell == cell) it->label = 1;
    else ++outside;
  }
  if (outside) spdlog::warn("{} stations fall outside the predicted cells", outside);
  const auto m = evaluate(pred, truth, threshold);
  std::cout << "tp,fp,fn,tn,accuracy,f1,precision,recall,precision_undefined,recall_undefined\n"
            << m.tp << "," << m.fp << "," << m.fn << "," << m.tn << "," << format_double(m.accuracy) << ","
            << format_double(m.f1) << "," << format_double(m.precision) << "," << format_double(m.recall) << ","
            << m.flags.precision_undefined << "," << m.flags.recall_undefined << "\n";
  if (pr) {
    std::cout << "\nthreshold,precision,recall\n";
    for (const auto& p : pr_points(pred, truth)) {
      std::cout << format_double(p.threshold) << "," << format_double(p.precision) << ","
                << format_double(p.recall) << "\n";
    }
  }
  return 0;
}

int cmd_export(const std::string& predictions, double threshold, const std::string& format, const std::string& out,
               const std::string& stations, bool timestamp) {
  const auto pred = parse_predictions_csv(slurp(predictions));
  std::vector<StationRecord> st;
  HtmlOptions html;
  html.deterministic = !timestamp;
  if (!stations.empty()) {
    st = load_station_file(stations);
    html.stations = &st;
  }
  const auto res = export_heatmap(pred, threshold, parse_heatmap_format(format), html);
  emit(out, res.content);
  spdlog::info("{} cells exported at threshold {}", res.exported, format_double(threshold));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bike-sharing station site prediction"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  Overrides ov;

  auto* ingest = app.add_subcommand("ingest", "fetch OSM data and stations for configured cities");
  std::vector<std::string> only;
  ov.add_config(ingest, true);
  ov.add_io(ingest);
  ingest->add_option("--city", only, "restrict to these cities");

  auto* grid = app.add_subcommand("grid", "tessellate a city and assign features to cells");
  std::string extract_path, grid_out = "grid.bin", grid_geojson;
  int grid_res = 11;
  grid->add_option("extract", extract_path, "extract.bin from ingest")->required();
  grid->add_option("--resolution", grid_res, "H3 resolution (9, 10, 11)");
  grid->add_option("-o,--out", grid_out, "grid snapshot");
  grid->add_option("--geojson", grid_geojson, "also write the cells as GeoJSON");

  auto* embed = app.add_subcommand("embed", "embed, combine neighborhoods and normalize");
  std::string embed_grid, embed_out = "matrix.bin", embed_csv, embed_sidecar, embed_stations;
  ov.add_config(embed, false);
  ov.add_embedding(embed);
  embed->add_option("grid", embed_grid, "grid.bin")->required();
  embed->add_option("-o,--out", embed_out, "matrix snapshot");
  embed->add_option("--csv", embed_csv, "embedding CSV");
  embed->add_option("--sidecar", embed_sidecar, "normalization JSON");
  embed->add_option("--stations", embed_stations, "station file copied next to the matrix as stations.geojson");

  auto* train = app.add_subcommand("train", "train a forest on sampled regions of city snapshots");
  std::vector<std::string> train_dirs;
  std::string model_out = "model.bin";
  ov.add_config(train, false);
  ov.add_training(train);
  train->add_option("cities", train_dirs, "city snapshot directories (matrix.bin + stations.geojson)")->required();
  train->add_option("-o,--out", model_out, "model file");

  auto* predict = app.add_subcommand("predict", "predict station probability for every cell of a city");
  std::string model_path, predict_dir, predict_out, predict_geojson;
  bool force = false;
  predict->add_option("--model", model_path, "model file")->required();
  predict->add_option("city", predict_dir, "city snapshot directory")->required();
  predict->add_option("-o,--out", predict_out, "predictions CSV (default stdout)");
  predict->add_option("--geojson", predict_geojson, "unfiltered probability GeoJSON");
  predict->add_flag("--force", force, "load a model trained for another embedding");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "confusion counts and metrics of a prediction");
  std::string eval_pred, eval_stations;
  double eval_threshold = kDefaultThreshold;
  bool eval_pr = false;
  evaluate_cmd->add_option("predictions", eval_pred, "predictions CSV")->required();
  evaluate_cmd->add_option("--stations", eval_stations, "station CSV or GeoJSON")->required();
  evaluate_cmd->add_option("--threshold", eval_threshold, "decision threshold in (0,1)");
  evaluate_cmd->add_flag("--pr", eval_pr, "also print precision/recall points");

  auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep along one axis");
  std::string axis, sweep_out;
  std::vector<std::string> values;
  bool timing = false;
  ov.add_config(sweep_cmd, true);
  ov.add_embedding(sweep_cmd);
  ov.add_training(sweep_cmd);
  ov.add_io(sweep_cmd);
  sweep_cmd->add_option("--axis", axis, "neighborhood_method | embedding_method | imbalance_ratio | resolution_and_K")
      ->required();
  sweep_cmd->add_option("--values", values, "axis values; resolution_and_K takes <res>:<K>")->required()->delimiter(',');
  sweep_cmd->add_option("--report", sweep_out, "report CSV (default stdout)");
  sweep_cmd->add_flag("--timing", timing, "add a seconds column");

  auto* transfer = app.add_subcommand("transfer", "cross-city recall matrix");
  std::string transfer_out;
  ov.add_config(transfer, true);
  ov.add_embedding(transfer);
  ov.add_training(transfer);
  ov.add_io(transfer);
  transfer->add_option("--report", transfer_out, "matrix CSV (default stdout)");

  auto* export_cmd = app.add_subcommand("export", "heatmap of a prediction above a threshold");
  std::string export_pred, export_format = "geojson", export_out, export_stations;
  double export_threshold = kDefaultThreshold;
  bool export_ts = false;
  export_cmd->add_option("predictions", export_pred, "predictions CSV")->required();
  export_cmd->add_option("--threshold", export_threshold, "keep cells with probability >= threshold");
  export_cmd->add_option("--format", export_format, "geojson | html");
  export_cmd->add_option("-o,--out", export_out, "output file (default stdout)");
  export_cmd->add_option("--stations", export_stations, "stations drawn on the HTML map");
  export_cmd->add_flag("--timestamp", export_ts, "stamp HTML with the generation time");

  auto* serve = app.add_subcommand("serve", "HTTP API for the planner UI");
  ServeOptions so;
  std::string serve_snapshots = "out";
  ov.add_config(serve, false);
  ov.add_training(serve);
  serve->add_option("--snapshots", serve_snapshots, "directory of <city>/matrix.bin + stations.geojson");
  serve->add_option("--host", so.host, "bind address");
  serve->add_option("--port", so.port, "port (0 = any)");
  serve->add_option("--workers", so.workers, "concurrent prediction jobs");
  serve->add_option("--max-queue", so.max_queue, "queued jobs before 503");

  auto* run = app.add_subcommand("run", "full pipeline: ingest, grid, embed, train, predict, export");
  ov.add_config(run, true);
  ov.add_embedding(run);
  ov.add_training(run);
  ov.add_io(run);

  app.add_subcommand("schema", "print the pipeline config JSON schema");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  spdlog::set_pattern("%^%l%$ %v");

  try {
    if (*ingest) return cmd_ingest(ov, only);
    if (*grid) return cmd_grid(extract_path, grid_res, grid_out, grid_geojson);
    if (*embed) return cmd_embed(ov, embed_grid, embed_out, embed_csv, embed_sidecar, embed_stations);
    if (*train) return cmd_train(ov, train_dirs, model_out);
    if (*predict) return cmd_predict(model_path, predict_dir, predict_out, predict_geojson, force);
    if (*evaluate_cmd) return cmd_evaluate(eval_pred, eval_stations, eval_threshold, eval_pr);
    if (*export_cmd) return cmd_export(export_pred, export_threshold, export_format, export_out, export_stations, export_ts);
    if (*sweep_cmd) {
      const auto cfg = ov.load();
      const auto report = sweep(cfg, parse_sweep_axis(axis), values);
      emit(sweep_out, report.to_csv(timing));
      return 0;
    }
    if (*transfer) {
      const auto cfg = ov.load();
      const auto tm = run_transfer(cfg);
      emit(transfer_out, artifact_stamp(cfg.fingerprint(), cfg.sampling.seed) + "\n" + tm.to_csv());
      spdlog::info("transfer matrix digest {}", tm.digest());
      return 0;
    }
    if (*serve) {
      if (!ov.config.empty() || ov.trees || ov.ratio || ov.seed) {
        const auto cfg = ov.load();
        so.forest = cfg.training;
        so.ratio = cfg.sampling.ratio;
        so.base_seed = cfg.sampling.seed;
        so.default_iterations = cfg.iterations;
      }
      so.snapshot_dir = serve_snapshots;
      HttpServer server(so);
      server.run();
      return 0;
    }
    if (*run) {
      const auto cfg = ov.load();
      const auto art = run_pipeline(cfg);
      std::cout << "fingerprint " << art.fingerprint << "\n";
      for (const auto& f : art.files) std::cout << (art.dir / f).string() << "\n";
      return 0;
    }
    if (app.got_subcommand("schema")) {
      std::cout << pipeline_config_schema();
      return 0;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
