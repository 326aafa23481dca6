#include "bikesite/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "bikesite/hashing.hpp"
#include "serialization.hpp"

namespace bikesite {

namespace detail {
extern const std::string_view kPipelineConfigSchema;
}

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

class FieldErrors {
 public:
  void add(std::string field, std::string message) {
    errors_.push_back(std::move(field) + ": " + std::move(message));
  }
  bool empty() const { return errors_.empty(); }
  void raise(const std::string& what) const {
    if (errors_.empty()) return;
    std::string msg = what;
    for (const auto& e : errors_) msg += "\n  " + e;
    throw ConfigError(msg);
  }

 private:
  std::vector<std::string> errors_;
};

void check_keys(const json& obj, const std::string& where, std::initializer_list<std::string_view> allowed,
                FieldErrors& errors) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      errors.add(where + key, "unknown field");
    }
  }
}

template <class T>
void read_field(const json& obj, const std::string& where, const char* key, T& out, FieldErrors& errors) {
  auto it = obj.find(key);
  if (it == obj.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    errors.add(where + key, std::string("wrong type (") + it->type_name() + ")");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path.lexically_normal();
}

bool valid_city_name(const std::string& name) {
  if (name.empty() || !std::isalnum(static_cast<unsigned char>(name[0]))) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == ' ' || c == '.' || c == '_' || c == '-';
  });
}

void write_text(const std::filesystem::path& dir, const std::filesystem::path& rel,
                std::string_view content, std::vector<std::filesystem::path>& files) {
  detail::write_file_atomic(dir / rel, content);
  files.push_back(rel);
}

std::string read_text(const std::filesystem::path& path) { return detail::read_file_bytes(path); }

const CityData& find_city(const std::vector<CityData>& cities, const std::string& name) {
  for (const auto& c : cities) {
    if (c.extract.city_name == name) return c;
  }
  throw LookupError("city '" + name + "' was not prepared");
}

CategoryRules rules_for(const PipelineConfig& config) {
  if (config.rules_file.empty()) return default_category_rules();
  return load_category_rules(config.rules_file.string());
}

}  // namespace

std::string_view name_of(HeatmapFormat f) noexcept {
  return f == HeatmapFormat::geojson ? "geojson" : "html";
}

HeatmapFormat parse_heatmap_format(std::string_view name) {
  if (name == "geojson") return HeatmapFormat::geojson;
  if (name == "html") return HeatmapFormat::html;
  throw ConfigError("unknown heatmap format '" + std::string(name) + "' (expected geojson or html)");
}

std::string_view name_of(SweepAxis a) noexcept {
  switch (a) {
    case SweepAxis::neighborhood_method: return "neighborhood_method";
    case SweepAxis::embedding_method: return "embedding_method";
    case SweepAxis::imbalance_ratio: return "imbalance_ratio";
    case SweepAxis::resolution_and_k: return "resolution_and_K";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view name) {
  for (auto a : {SweepAxis::neighborhood_method, SweepAxis::embedding_method, SweepAxis::imbalance_ratio,
                 SweepAxis::resolution_and_k}) {
    if (name == name_of(a)) return a;
  }
  if (name == "resolution_and_k") return SweepAxis::resolution_and_k;
  throw ConfigError("unknown sweep axis '" + std::string(name) +
                    "' (expected neighborhood_method, embedding_method, imbalance_ratio or resolution_and_K)");
}

int max_neighborhood_k(int resolution) {
  switch (resolution) {
    case 9: return 3;
    case 10: return 10;
    case 11: return 25;
  }
  throw ConfigError("resolution " + std::to_string(resolution) + " is not supported (use 9, 10 or 11)");
}

// ---- config ---------------------------------------------------------------

void PipelineConfig::validate() const {
  FieldErrors errors;
  if (cities.empty()) errors.add("cities", "at least one city is required");
  std::set<std::string> names;
  for (std::size_t i = 0; i < cities.size(); ++i) {
    const auto& c = cities[i];
    const auto where = "cities[" + std::to_string(i) + "]";
    if (!valid_city_name(c.name)) errors.add(where + ".name", "'" + c.name + "' is not a valid city name");
    if (!names.insert(c.name).second) errors.add(where + ".name", "duplicate city '" + c.name + "'");
    switch (c.boundary.kind) {
      case BoundaryKind::osm_relation_id:
        if (c.boundary.relation_id <= 0) errors.add(where + ".boundary.relation_id", "must be positive");
        break;
      case BoundaryKind::bbox:
        if (c.boundary.bbox.empty() || c.boundary.bbox.south < -90 || c.boundary.bbox.north > 90 ||
            c.boundary.bbox.west < -180 || c.boundary.bbox.east > 180) {
          errors.add(where + ".boundary.bbox", "must be [south, west, north, east] with south < north, west < east");
        }
        break;
      case BoundaryKind::polygon_file:
        if (c.boundary.path.empty()) errors.add(where + ".boundary.path", "required for polygon_file");
        break;
    }
    if (c.stations && c.stations->kind != StationSourceKind::nextbike_api && c.stations->location.empty()) {
      errors.add(where + ".stations.path", "required for file sources");
    }
  }
  if (resolution < kMinResolution || resolution > kMaxResolution) {
    errors.add("resolution", std::to_string(resolution) + " is not supported (use 9, 10 or 11)");
  }
  if (neighborhood.k < 0) errors.add("embedding.k", "must be >= 0");
  if (!(sampling.ratio >= kMinRatio && sampling.ratio <= kMaxRatio)) errors.add("sampling.ratio", "must lie in [1, 5]");
  if (!(holdout > 0.0 && holdout < 1.0)) errors.add("sampling.holdout", "must lie in (0, 1)");
  if (training.tree_count < 1) errors.add("training.trees", "must be >= 1");
  if (training.max_depth < 0) errors.add("training.max_depth", "must be >= 0");
  if (training.min_leaf < 1) errors.add("training.min_leaf", "must be >= 1");
  if (training.max_features < 0) errors.add("training.max_features", "must be >= 0");
  if (iterations < 1) errors.add("iterations", "must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) errors.add("threshold", "must lie in (0, 1)");
  if (!(output.export_threshold > 0.0 && output.export_threshold < 1.0)) {
    errors.add("output.export_threshold", "must lie in (0, 1)");
  }
  if (threads < 1) errors.add("threads", "must be >= 1");
  if (eval_city) {
    if (!names.count(*eval_city)) errors.add("eval_city", "unknown city '" + *eval_city + "'");
    if (train_cities.empty()) errors.add("train_cities", "required when eval_city is set");
  } else if (!train_cities.empty()) {
    errors.add("eval_city", "required when train_cities is set");
  }
  for (const auto& t : train_cities) {
    if (!names.count(t)) errors.add("train_cities", "unknown city '" + t + "'");
  }
  errors.raise("invalid pipeline config:");
}

ExperimentOptions PipelineConfig::experiment_options() const {
  ExperimentOptions o;
  o.iterations = iterations;
  o.base_seed = sampling.seed;
  o.forest = training;
  o.threshold = threshold;
  o.fingerprint = embedding_config().fingerprint();
  o.threads = threads;
  return o;
}

const CitySpec& PipelineConfig::city(const std::string& name) const {
  for (const auto& c : cities) {
    if (c.name == name) return c;
  }
  std::string known;
  for (const auto& c : cities) known += (known.empty() ? "" : ", ") + c.name;
  throw LookupError("unknown city '" + name + "' (configured: " + known + ")");
}

std::string PipelineConfig::canonical_json() const {
  ordered_json doc;
  doc["cities"] = ordered_json::array();
  for (const auto& c : cities) {
    ordered_json city;
    city["name"] = c.name;
    ordered_json b;
    switch (c.boundary.kind) {
      case BoundaryKind::osm_relation_id:
        b["kind"] = "osm_relation";
        b["relation_id"] = c.boundary.relation_id;
        break;
      case BoundaryKind::bbox:
        b["kind"] = "bbox";
        b["bbox"] = {c.boundary.bbox.south, c.boundary.bbox.west, c.boundary.bbox.north, c.boundary.bbox.east};
        break;
      case BoundaryKind::polygon_file:
        b["kind"] = "polygon_file";
        b["path"] = c.boundary.path.filename().string();
        break;
    }
    city["boundary"] = b;
    if (c.stations) {
      ordered_json s;
      switch (c.stations->kind) {
        case StationSourceKind::csv_file: s["kind"] = "csv_file"; break;
        case StationSourceKind::geojson_file: s["kind"] = "geojson_file"; break;
        case StationSourceKind::nextbike_api: s["kind"] = "nextbike_api"; break;
      }
      if (c.stations->kind == StationSourceKind::nextbike_api) {
        s["city_uid"] = c.stations->nextbike_city_uid;
      } else {
        s["path"] = std::filesystem::path(c.stations->location).filename().string();
      }
      s["allow_empty"] = c.stations->allow_empty;
      city["stations"] = s;
    }
    if (!c.osm_file.empty()) city["osm_file"] = c.osm_file.filename().string();
    doc["cities"].push_back(city);
  }
  doc["resolution"] = resolution;
  doc["embedding"] = {{"method", name_of(embedding)},
                      {"neighborhood", name_of(neighborhood.method)},
                      {"k", neighborhood.k}};
  doc["sampling"] = {{"ratio", sampling.ratio}, {"base_seed", sampling.seed}, {"holdout", holdout}};
  doc["training"] = {{"trees", training.tree_count},
                     {"max_depth", training.max_depth},
                     {"min_leaf", training.min_leaf},
                     {"max_features", training.max_features},
                     {"class_weighting", name_of(training.weighting)}};
  doc["iterations"] = iterations;
  doc["threshold"] = threshold;
  if (eval_city) {
    doc["train_cities"] = train_cities;
    doc["eval_city"] = *eval_city;
  }
  if (!rules_file.empty()) doc["rules_file"] = rules_file.filename().string();
  ordered_json formats = ordered_json::array();
  for (auto f : output.formats) formats.push_back(name_of(f));
  doc["output"] = {{"formats", formats}, {"export_threshold", output.export_threshold}};
  return doc.dump(2) + "\n";
}

std::string PipelineConfig::fingerprint() const { return sha256_hex(canonical_json()); }

PipelineConfig parse_pipeline_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("pipeline config: ") + e.what(), e.byte);
  }
  if (!doc.is_object()) throw ConfigError("pipeline config must be a JSON object");
  FieldErrors errors;
  PipelineConfig cfg;
  check_keys(doc, "",
             {"cities", "resolution", "embedding", "sampling", "training", "iterations", "threshold",
              "train_cities", "eval_city", "rules_file", "cache_dir", "offline", "threads", "output", "$schema"},
             errors);

  if (auto it = doc.find("cities"); it != doc.end() && it->is_array()) {
    for (std::size_t i = 0; i < it->size(); ++i) {
      const auto& cj = (*it)[i];
      const auto where = "cities[" + std::to_string(i) + "].";
      if (!cj.is_object()) {
        errors.add(where, "must be an object");
        continue;
      }
      check_keys(cj, where, {"name", "boundary", "stations", "osm_file"}, errors);
      CitySpec spec;
      read_field(cj, where, "name", spec.name, errors);
      if (auto b = cj.find("boundary"); b != cj.end() && b->is_object()) {
        check_keys(*b, where + "boundary.", {"kind", "relation_id", "bbox", "path"}, errors);
        std::string kind;
        read_field(*b, where + "boundary.", "kind", kind, errors);
        if (kind == "osm_relation") {
          spec.boundary.kind = BoundaryKind::osm_relation_id;
          read_field(*b, where + "boundary.", "relation_id", spec.boundary.relation_id, errors);
        } else if (kind == "bbox") {
          spec.boundary.kind = BoundaryKind::bbox;
          std::vector<double> v;
          read_field(*b, where + "boundary.", "bbox", v, errors);
          if (v.size() == 4) spec.boundary.bbox = BBox{v[0], v[1], v[2], v[3]};
          else errors.add(where + "boundary.bbox", "expected [south, west, north, east]");
        } else if (kind == "polygon_file") {
          spec.boundary.kind = BoundaryKind::polygon_file;
          std::string p;
          read_field(*b, where + "boundary.", "path", p, errors);
          if (!p.empty()) spec.boundary.path = resolve(base_dir, p);
        } else {
          errors.add(where + "boundary.kind", "expected osm_relation, bbox or polygon_file");
        }
      } else {
        errors.add(where + "boundary", "required object");
      }
      if (auto s = cj.find("stations"); s != cj.end()) {
        if (!s->is_object()) {
          errors.add(where + "stations", "must be an object");
        } else {
          check_keys(*s, where + "stations.", {"kind", "path", "url", "city_uid", "allow_empty"}, errors);
          StationSource src;
          std::string kind, path, url;
          read_field(*s, where + "stations.", "kind", kind, errors);
          read_field(*s, where + "stations.", "path", path, errors);
          read_field(*s, where + "stations.", "url", url, errors);
          read_field(*s, where + "stations.", "city_uid", src.nextbike_city_uid, errors);
          read_field(*s, where + "stations.", "allow_empty", src.allow_empty, errors);
          if (kind == "csv_file") src.kind = StationSourceKind::csv_file;
          else if (kind == "geojson_file") src.kind = StationSourceKind::geojson_file;
          else if (kind == "nextbike_api") src.kind = StationSourceKind::nextbike_api;
          else errors.add(where + "stations.kind", "expected csv_file, geojson_file or nextbike_api");
          src.location = src.kind == StationSourceKind::nextbike_api
                             ? url
                             : (path.empty() ? std::string() : resolve(base_dir, path).string());
          spec.stations = src;
        }
      }
      std::string osm;
      read_field(cj, where, "osm_file", osm, errors);
      if (!osm.empty()) spec.osm_file = resolve(base_dir, osm);
      cfg.cities.push_back(std::move(spec));
    }
  } else {
    errors.add("cities", "required array");
  }

  read_field(doc, "", "resolution", cfg.resolution, errors);
  if (auto e = doc.find("embedding"); e != doc.end()) {
    check_keys(*e, "embedding.", {"method", "neighborhood", "k"}, errors);
    std::string method, hood;
    read_field(*e, "embedding.", "method", method, errors);
    read_field(*e, "embedding.", "neighborhood", hood, errors);
    read_field(*e, "embedding.", "k", cfg.neighborhood.k, errors);
    try {
      if (!method.empty()) cfg.embedding = parse_embedding_method(method);
    } catch (const ConfigError& ex) {
      errors.add("embedding.method", ex.what());
    }
    try {
      if (!hood.empty()) cfg.neighborhood.method = parse_combine_method(hood);
    } catch (const ConfigError& ex) {
      errors.add("embedding.neighborhood", ex.what());
    }
  }
  if (auto s = doc.find("sampling"); s != doc.end()) {
    check_keys(*s, "sampling.", {"ratio", "base_seed", "holdout"}, errors);
    read_field(*s, "sampling.", "ratio", cfg.sampling.ratio, errors);
    read_field(*s, "sampling.", "base_seed", cfg.sampling.seed, errors);
    read_field(*s, "sampling.", "holdout", cfg.holdout, errors);
  }
  if (auto t = doc.find("training"); t != doc.end()) {
    check_keys(*t, "training.", {"trees", "max_depth", "min_leaf", "max_features", "class_weighting"}, errors);
    read_field(*t, "training.", "trees", cfg.training.tree_count, errors);
    read_field(*t, "training.", "max_depth", cfg.training.max_depth, errors);
    read_field(*t, "training.", "min_leaf", cfg.training.min_leaf, errors);
    read_field(*t, "training.", "max_features", cfg.training.max_features, errors);
    std::string w;
    read_field(*t, "training.", "class_weighting", w, errors);
    try {
      if (!w.empty()) cfg.training.weighting = parse_class_weighting(w);
    } catch (const ConfigError& ex) {
      errors.add("training.class_weighting", ex.what());
    }
  }
  read_field(doc, "", "iterations", cfg.iterations, errors);
  read_field(doc, "", "threshold", cfg.threshold, errors);
  read_field(doc, "", "train_cities", cfg.train_cities, errors);
  if (doc.contains("eval_city")) {
    std::string e;
    read_field(doc, "", "eval_city", e, errors);
    cfg.eval_city = e;
  }
  std::string rules, cache;
  read_field(doc, "", "rules_file", rules, errors);
  if (!rules.empty()) cfg.rules_file = resolve(base_dir, rules);
  read_field(doc, "", "cache_dir", cache, errors);
  if (!cache.empty()) cfg.cache_dir = resolve(base_dir, cache);
  read_field(doc, "", "offline", cfg.offline, errors);
  read_field(doc, "", "threads", cfg.threads, errors);
  if (auto o = doc.find("output"); o != doc.end()) {
    check_keys(*o, "output.", {"dir", "formats", "export_threshold", "deterministic"}, errors);
    std::string dir;
    read_field(*o, "output.", "dir", dir, errors);
    if (!dir.empty()) cfg.output.dir = resolve(base_dir, dir);
    std::vector<std::string> formats;
    read_field(*o, "output.", "formats", formats, errors);
    if (o->contains("formats")) {
      cfg.output.formats.clear();
      for (const auto& f : formats) {
        try {
          cfg.output.formats.push_back(parse_heatmap_format(f));
        } catch (const ConfigError& ex) {
          errors.add("output.formats", ex.what());
        }
      }
    }
    read_field(*o, "output.", "export_threshold", cfg.output.export_threshold, errors);
    read_field(*o, "output.", "deterministic", cfg.output.deterministic, errors);
  }
  errors.raise("invalid pipeline config:");
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(read_text(path), path.parent_path());
}

std::string_view pipeline_config_schema() { return detail::kPipelineConfigSchema; }

// ---- stages -----------------------------------------------------------------

CityExtract ingest_city(const CitySpec& spec, const PipelineConfig& config,
                        std::vector<std::string>& warnings) {
  const auto rules = rules_for(config);
  FetchOptions fo;
  fo.cache_root = config.cache_dir;
  fo.rules = &rules;
  fo.offline = config.offline;
  if (!spec.osm_file.empty()) import_overpass_response(spec.name, spec.boundary, read_text(spec.osm_file), fo);
  FetchReport report;
  auto extract = fetch_city_extract(spec.name, spec.boundary, fo, &report);
  for (const auto& d : report.dropped) warnings.push_back(spec.name + ": dropped " + d);
  if (spec.stations) {
    auto load = load_stations(*spec.stations, spec.name);
    for (auto& w : load.warnings) warnings.push_back(spec.name + ": " + w);
    attach_stations(extract, std::move(load.records), warnings);
  }
  return extract;
}

CityGrid grid_city(const CityExtract& extract, int resolution, AssignDiagnostics* diagnostics) {
  auto cells = tessellate(extract.boundary, resolution);
  if (cells.empty()) {
    throw DataError("boundary of '" + extract.city_name + "' contains no cell centers at resolution " +
                    std::to_string(resolution));
  }
  return assign_features(extract, std::move(cells), diagnostics);
}

EmbeddingMatrix embed_city(const CityGrid& grid, const PipelineConfig& config) {
  return normalize_city(build_embedding(grid, config.embedding, config.neighborhood));
}

namespace {

template <class F>
auto stage(const std::string& name, const std::string& hint, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what(), hint);
  }
}

std::string ingest_hint(const CitySpec& spec) {
  std::string hint = "check network access or pre-populate the cache (BIKESITE_CACHE_DIR / cache_dir)";
  if (spec.boundary.kind == BoundaryKind::osm_relation_id) hint += "; verify the boundary relation id";
  if (spec.stations) hint += "; set stations.allow_empty for cities without stations";
  return hint;
}

}  // namespace

CityData prepare_city(const CitySpec& spec, const PipelineConfig& config) {
  CityData data;
  data.extract = stage("ingest", ingest_hint(spec), [&] { return ingest_city(spec, config, data.warnings); });
  data.grid = stage("grid", "check that the boundary is a valid, non-self-intersecting polygon",
                    [&] { return grid_city(data.extract, config.resolution, &data.diagnostics); });
  data.diagnostics.messages.insert(data.diagnostics.messages.begin(), data.warnings.begin(), data.warnings.end());
  data.matrix = stage("embed", "check the embedding settings", [&] { return embed_city(data.grid, config); });
  data.labeled = stage("label", "", [&] { return label_regions(data.matrix, data.extract.stations, &data.warnings); });
  spdlog::info("{}: {} features, {} cells, {} stations, {} positive cells", spec.name,
               data.extract.features.size(), data.grid.size(), data.extract.stations.size(),
               count_positives(data.labeled));
  return data;
}

SplitFactory same_city_factory(const CityData& city, const PipelineConfig& config) {
  const double ratio = config.sampling.ratio;
  const double holdout = config.holdout;
  return [&city, ratio, holdout](std::uint64_t seed) {
    return build_same_city_split(city.labeled, city.extract.city_name, SamplingSpec{ratio, seed}, holdout);
  };
}

SplitFactory multi_city_factory(std::vector<const CityData*> train, const CityData& eval,
                                const PipelineConfig& config) {
  for (const auto* t : train) require_same_feature_space(t->matrix, eval.matrix);
  const double ratio = config.sampling.ratio;
  std::string name;
  for (const auto* t : train) name += (name.empty() ? "" : "+") + t->extract.city_name;
  return [train = std::move(train), &eval, ratio, name](std::uint64_t seed) {
    ExperimentSplit split;
    for (std::size_t j = 0; j < train.size(); ++j) {
      // Distinct stream per reference city within one iteration.
      const SamplingSpec spec{ratio, seed + j * 0x9e3779b97f4a7c15ULL};
      auto part = sample_training(train[j]->labeled, spec);
      split.train.insert(split.train.end(), std::make_move_iterator(part.begin()),
                         std::make_move_iterator(part.end()));
    }
    split.eval = eval.labeled;
    split.train_city = name;
    split.eval_city = eval.extract.city_name;
    split.spec = SamplingSpec{ratio, seed};
    split.mode = SplitMode::transfer;
    return split;
  };
}

std::vector<ExperimentRecord> run_experiments(const PipelineConfig& config,
                                              const std::vector<CityData>& cities) {
  std::vector<ExperimentRecord> out;
  auto options = config.experiment_options();
  if (config.eval_city) {
    std::vector<const CityData*> train;
    for (const auto& n : config.train_cities) train.push_back(&find_city(cities, n));
    const auto& eval = find_city(cities, *config.eval_city);
    auto factory = multi_city_factory(train, eval, config);
    options.heatmap = &eval.labeled;
    ExperimentRecord rec;
    for (const auto& n : config.train_cities) rec.train_city += (rec.train_city.empty() ? "" : "+") + n;
    rec.eval_city = eval.extract.city_name;
    rec.result = stage("experiment", "every reference city needs stations and enough negative cells for the ratio",
                       [&] { return repeated_experiment(factory, options); });
    out.push_back(std::move(rec));
    return out;
  }
  for (const auto& city : cities) {
    if (count_positives(city.labeled) == 0) {
      spdlog::warn("{}: no cell holds a station, same-city experiment skipped", city.extract.city_name);
      continue;
    }
    options.heatmap = &city.labeled;
    auto factory = same_city_factory(city, config);
    ExperimentRecord rec{city.extract.city_name, city.extract.city_name, {}};
    rec.result = stage("experiment", "the city needs stations and enough negative cells for the ratio",
                       [&] { return repeated_experiment(factory, options); });
    out.push_back(std::move(rec));
  }
  return out;
}

// ---- artifacts --------------------------------------------------------------

std::string artifact_stamp(const std::string& fingerprint, std::uint64_t base_seed) {
  return "# bikesite fingerprint=" + fingerprint + " base_seed=" + std::to_string(base_seed);
}

std::string predictions_to_csv(const PredictionMap& pred, const std::vector<LabeledRegion>* truth,
                               const std::string& stamp) {
  std::map<CellId, int> labels;
  if (truth) {
    for (const auto& r : *truth) labels[r.cell] = r.label;
  }
  std::string out = stamp + " iterations=" + std::to_string(pred.iterations_averaged) +
                    " features=" + pred.fingerprint + "\n";
  out += truth ? "h3,probability,label\n" : "h3,probability\n";
  for (const auto& [cell, p] : pred.cells) {
    out += cell.to_string() + "," + format_double(p);
    if (truth) {
      auto it = labels.find(cell);
      out += "," + (it == labels.end() ? std::string() : std::to_string(it->second));
    }
    out += '\n';
  }
  return out;
}

PredictionMap parse_predictions_csv(std::string_view text) {
  PredictionMap pred;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = false;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const auto here = offset;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream words(line);
      std::string w;
      while (words >> w) {
        if (w.rfind("features=", 0) == 0) pred.fingerprint = w.substr(9);
        else if (w.rfind("iterations=", 0) == 0) pred.iterations_averaged = std::stoi(w.substr(11));
      }
      // Feature fingerprints contain ';' but no spaces, so they survive the split.
      continue;
    }
    if (!header) {
      if (line.rfind("h3,probability", 0) != 0) throw ParseError("predictions CSV: missing h3,probability header", here);
      header = true;
      continue;
    }
    const auto c1 = line.find(',');
    if (c1 == std::string::npos) throw ParseError("predictions CSV: malformed row", here);
    const auto c2 = line.find(',', c1 + 1);
    try {
      const CellId cell = CellId::from_string(line.substr(0, c1));
      const double p = std::stod(line.substr(c1 + 1, c2 == std::string::npos ? std::string::npos : c2 - c1 - 1));
      if (!(p >= 0.0 && p <= 1.0)) throw ParseError("predictions CSV: probability outside [0,1]", here);
      pred.cells[cell] = p;
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(std::string("predictions CSV: ") + e.what(), here);
    }
  }
  if (!header) throw ParseError("predictions CSV: missing header", 0);
  return pred;
}

std::string prediction_to_geojson(const PredictionMap& pred, std::optional<double> threshold) {
  ordered_json doc;
  doc["type"] = "FeatureCollection";
  doc["fingerprint"] = pred.fingerprint;
  doc["iterations_averaged"] = pred.iterations_averaged;
  doc["threshold"] = threshold ? json(*threshold) : json(nullptr);
  doc["features"] = ordered_json::array();
  for (const auto& [cell, p] : pred.cells) {
    if (threshold && !(p >= *threshold)) continue;
    ordered_json ring = ordered_json::array();
    for (const auto& v : cell.boundary().outer) ring.push_back({v.lon, v.lat});
    ordered_json f;
    f["type"] = "Feature";
    f["id"] = cell.to_string();
    f["geometry"] = {{"type", "Polygon"}, {"coordinates", ordered_json::array({ring})}};
    f["properties"] = {{"h3", cell.to_string()}, {"probability", p}};
    doc["features"].push_back(std::move(f));
  }
  return doc.dump() + "\n";
}

namespace {

std::string ramp_color(double p) {
  // red (low) → yellow (high)
  const int g = static_cast<int>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
  char buf[16];
  std::snprintf(buf, sizeof buf, "#ff%02x00", g);
  return buf;
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string render_html(const PredictionMap& pred, double threshold, const HtmlOptions& opt,
                        std::size_t& exported) {
  std::vector<std::pair<CellId, double>> shown;
  BBox box;
  for (const auto& [cell, p] : pred.cells) {
    if (p >= threshold) {
      shown.emplace_back(cell, p);
      for (const auto& v : cell.boundary().outer) box.extend(v);
    }
  }
  if (opt.stations) {
    for (const auto& s : *opt.stations) box.extend(s.location);
  }
  exported = shown.size();
  const double width = 960.0;
  double height = 480.0;
  double kx = 1.0, scale = 1.0;
  if (!box.empty()) {
    kx = std::cos((box.south + box.north) / 2.0 * 3.14159265358979323846 / 180.0);
    const double w = std::max((box.east - box.west) * kx, 1e-9);
    const double h = std::max(box.north - box.south, 1e-9);
    scale = (width - 20.0) / w;
    height = h * scale + 20.0;
  }
  auto px = [&](const LatLng& v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", 10.0 + (v.lon - box.west) * kx * scale,
                  10.0 + (box.north - v.lat) * scale);
    return std::string(buf);
  };

  std::ostringstream h;
  h << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << html_escape(opt.title)
    << "</title>\n<style>body{font-family:sans-serif;margin:16px}svg{background:#f4f4f4}"
       ".legend{display:flex;align-items:center;gap:8px;margin:8px 0}"
       ".ramp{width:200px;height:12px;background:linear-gradient(to right,#ff0000,#ffff00)}</style>\n"
       "</head><body>\n<h1>"
    << html_escape(opt.title) << "</h1>\n<p>fingerprint " << html_escape(pred.fingerprint) << ", threshold "
    << format_double(threshold) << ", " << shown.size() << " of " << pred.cells.size() << " cells shown";
  if (!opt.deterministic) {
    const auto now = std::time(nullptr);
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    h << ", generated " << ts;
  }
  h << "</p>\n<div class=\"legend\"><span>low</span><div class=\"ramp\"></div><span>high</span></div>\n";
  if (shown.empty()) h << "<p>No cell reaches the threshold.</p>\n";
  h << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << std::lround(height)
    << "\">\n";
  for (const auto& [cell, p] : shown) {
    h << "<polygon points=\"";
    const auto ring = cell.boundary().outer;
    for (std::size_t i = 0; i + 1 < ring.size(); ++i) h << (i ? " " : "") << px(ring[i]);
    h << "\" fill=\"" << ramp_color(p) << "\" fill-opacity=\"0.8\" stroke=\"#666\" stroke-width=\"0.3\"><title>"
      << cell.to_string() << " " << format_double(p) << "</title></polygon>\n";
  }
  if (opt.stations) {
    for (const auto& s : *opt.stations) {
      const auto xy = px(s.location);
      const auto comma = xy.find(',');
      h << "<circle cx=\"" << xy.substr(0, comma) << "\" cy=\"" << xy.substr(comma + 1)
        << "\" r=\"3\" fill=\"#fff\" stroke=\"#000\" stroke-width=\"1\"><title>" << html_escape(s.station_id)
        << "</title></circle>\n";
    }
  }
  h << "</svg>\n</body></html>\n";
  return h.str();
}

}  // namespace

HeatmapExport export_heatmap(const PredictionMap& pred, double threshold, HeatmapFormat format,
                             const HtmlOptions& html) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("export threshold must lie in (0, 1)");
  HeatmapExport out;
  if (format == HeatmapFormat::geojson) {
    out.content = prediction_to_geojson(pred, threshold);
    for (const auto& [cell, p] : pred.cells) out.exported += p >= threshold;
  } else {
    out.content = render_html(pred, threshold, html, out.exported);
  }
  out.empty_warning = out.exported == 0;
  if (out.empty_warning) {
    spdlog::warn("no cell reaches threshold {}; exporting an empty heatmap", format_double(threshold));
  }
  return out;
}

std::string metrics_header() {
  return "train_city,eval_city,resolution,iterations,accuracy,f1,precision,recall,recall_applicable\n";
}

std::string metrics_row(const std::string& train, const std::string& eval, int resolution,
                        const MetricSummary& m) {
  return train + "," + eval + "," + std::to_string(resolution) + "," + std::to_string(m.iterations) + "," +
         format_double(m.accuracy) + "," + format_double(m.f1) + "," + format_double(m.precision) + "," +
         (m.recall_applicable ? format_double(m.recall) : std::string("NA")) + "," +
         (m.recall_applicable ? "true" : "false") + "\n";
}

std::string iterations_csv(const std::vector<ExperimentRecord>& records, std::uint64_t base_seed,
                           const std::string& stamp) {
  std::string out = stamp + "\n";
  out += "train_city,eval_city,iteration,seed,tp,fp,fn,tn,accuracy,f1,precision,recall\n";
  for (const auto& r : records) {
    for (std::size_t i = 0; i < r.result.per_iteration.size(); ++i) {
      const auto& m = r.result.per_iteration[i];
      out += r.train_city + "," + r.eval_city + "," + std::to_string(i) + "," + std::to_string(base_seed + i) +
             "," + std::to_string(m.tp) + "," + std::to_string(m.fp) + "," + std::to_string(m.fn) + "," +
             std::to_string(m.tn) + "," + format_double(m.accuracy) + "," + format_double(m.f1) + "," +
             format_double(m.precision) + "," + format_double(m.recall) + "\n";
    }
  }
  return out;
}

void write_city_snapshot(const CityData& city, const std::filesystem::path& dir) {
  save_embedding(city.matrix, dir / "matrix.bin");
  detail::write_file_atomic(dir / "stations.geojson", stations_to_geojson(city.extract.stations));
}

PipelineArtifacts run_pipeline(const PipelineConfig& config) {
  config.validate();
  PipelineArtifacts art;
  art.dir = config.output.dir;
  art.fingerprint = config.fingerprint();
  const auto stamp = artifact_stamp(art.fingerprint, config.sampling.seed);

  std::vector<std::string> needed;
  if (config.eval_city) {
    needed = config.train_cities;
    if (std::find(needed.begin(), needed.end(), *config.eval_city) == needed.end()) needed.push_back(*config.eval_city);
  } else {
    for (const auto& c : config.cities) needed.push_back(c.name);
  }
  std::vector<CityData> cities;
  for (const auto& n : needed) cities.push_back(prepare_city(config.city(n), config));

  std::filesystem::create_directories(art.dir);
  auto& files = art.files;
  write_text(art.dir, "config.json", config.canonical_json(), files);
  for (const auto& c : cities) {
    const std::filesystem::path sub = c.extract.city_name;
    write_text(art.dir, sub / "embedding.csv", embedding_to_csv(c.matrix), files);
    write_text(art.dir, sub / "normalization.json", normalization_to_json(c.matrix), files);
    write_city_snapshot(c, art.dir / sub);
    files.push_back(sub / "matrix.bin");
    files.push_back(sub / "stations.geojson");
  }

  art.experiments = run_experiments(config, cities);

  std::string metrics = stamp + "\n" + metrics_header();
  for (const auto& rec : art.experiments) {
    metrics += metrics_row(rec.train_city, rec.eval_city, config.resolution, rec.result.mean);
    const auto& eval = find_city(cities, rec.eval_city);
    const std::filesystem::path sub = rec.eval_city;
    write_text(art.dir, sub / "predictions.csv", predictions_to_csv(rec.result.averaged, &eval.labeled, stamp),
               files);
    for (auto fmt : config.output.formats) {
      HtmlOptions html;
      html.title = rec.eval_city + " station probability (trained on " + rec.train_city + ")";
      html.deterministic = config.output.deterministic;
      html.stations = &eval.extract.stations;
      auto exp = export_heatmap(rec.result.averaged, config.output.export_threshold, fmt, html);
      write_text(art.dir, sub / (std::string("heatmap.") + std::string(name_of(fmt))), exp.content, files);
    }
    spdlog::info("{} -> {}: accuracy {:.3f} f1 {:.3f} precision {:.3f} recall {:.3f}", rec.train_city,
                 rec.eval_city, rec.result.mean.accuracy, rec.result.mean.f1, rec.result.mean.precision,
                 rec.result.mean.recall);
  }
  write_text(art.dir, "metrics.csv", metrics, files);
  write_text(art.dir, "iterations.csv", iterations_csv(art.experiments, config.sampling.seed, stamp), files);

  std::sort(files.begin(), files.end());
  ordered_json manifest;
  manifest["fingerprint"] = art.fingerprint;
  manifest["base_seed"] = config.sampling.seed;
  manifest["files"] = ordered_json::object();
  for (const auto& f : files) manifest["files"][f.generic_string()] = sha256_hex(read_text(art.dir / f));
  write_text(art.dir, "manifest.json", manifest.dump(2) + "\n", files);
  std::sort(files.begin(), files.end());
  return art;
}

// ---- sweeps -----------------------------------------------------------------

namespace {

// RFC 4180 quoting for free-text fields.
std::string csv_field(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) return v;
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string SweepReport::to_csv(bool timing) const {
  std::string out = artifact_stamp(fingerprint, base_seed) + "\n";
  out += "axis,resolution,value,status,iterations,accuracy,f1,precision,recall";
  out += timing ? ",seconds\n" : "\n";
  for (const auto& r : rows) {
    const bool ok = r.status == "ok";
    out += std::string(name_of(axis)) + "," + std::to_string(r.resolution) + "," + csv_field(r.value) + "," + csv_field(r.status) + ",";
    if (ok) {
      out += std::to_string(r.mean.iterations) + "," + format_double(r.mean.accuracy) + "," +
             format_double(r.mean.f1) + "," + format_double(r.mean.precision) + "," +
             (r.mean.recall_applicable ? format_double(r.mean.recall) : std::string("NA"));
    } else {
      out += ",,,,";
    }
    if (timing) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", r.seconds);
      out += std::string(",") + buf;
    }
    out += '\n';
  }
  return out;
}

namespace {

// Applies one sweep value; returns a reason when it cannot be applied.
std::optional<std::string> apply_sweep_value(PipelineConfig& cfg, SweepAxis axis, const std::string& value) {
  try {
    switch (axis) {
      case SweepAxis::neighborhood_method: cfg.neighborhood.method = parse_combine_method(value); break;
      case SweepAxis::embedding_method: cfg.embedding = parse_embedding_method(value); break;
      case SweepAxis::imbalance_ratio: {
        std::size_t used = 0;
        const double r = std::stod(value, &used);
        if (used != value.size()) return "not a number";
        if (!(r >= kMinRatio && r <= kMaxRatio)) return "ratio outside [1, 5]";
        cfg.sampling.ratio = r;
        break;
      }
      case SweepAxis::resolution_and_k: {
        const auto colon = value.find(':');
        if (colon == std::string::npos) return "expected <resolution>:<K>";
        const int res = std::stoi(value.substr(0, colon));
        const int k = std::stoi(value.substr(colon + 1));
        if (res < kMinResolution || res > kMaxResolution) return "resolution not supported";
        if (k < 0) return "K must be >= 0";
        cfg.resolution = res;
        cfg.neighborhood.k = k;
        break;
      }
    }
  } catch (const std::exception& e) {
    return std::string(e.what());
  }
  if (cfg.neighborhood.k > max_neighborhood_k(cfg.resolution)) {
    return "K=" + std::to_string(cfg.neighborhood.k) + " exceeds the limit " +
           std::to_string(max_neighborhood_k(cfg.resolution)) + " at resolution " + std::to_string(cfg.resolution);
  }
  return std::nullopt;
}

MetricSummary pool_means(const std::vector<ExperimentRecord>& records) {
  MetricSummary s;
  std::size_t recall_n = 0;
  for (const auto& r : records) {
    s.accuracy += r.result.mean.accuracy;
    s.f1 += r.result.mean.f1;
    s.precision += r.result.mean.precision;
    s.iterations += r.result.mean.iterations;
    if (r.result.mean.recall_applicable) {
      s.recall += r.result.mean.recall;
      ++recall_n;
    }
  }
  if (!records.empty()) {
    const double n = static_cast<double>(records.size());
    s.accuracy /= n;
    s.f1 /= n;
    s.precision /= n;
    s.iterations /= records.size();
  }
  s.recall_applicable = recall_n > 0;
  s.recall = recall_n ? s.recall / static_cast<double>(recall_n) : 0.0;
  return s;
}

}  // namespace

SweepReport sweep(const PipelineConfig& base, SweepAxis axis, const std::vector<std::string>& values) {
  base.validate();
  SweepReport report;
  report.axis = axis;
  report.fingerprint = base.fingerprint();
  report.base_seed = base.sampling.seed;

  std::vector<std::string> needed;
  if (base.eval_city) {
    needed = base.train_cities;
    if (std::find(needed.begin(), needed.end(), *base.eval_city) == needed.end()) needed.push_back(*base.eval_city);
  } else {
    for (const auto& c : base.cities) needed.push_back(c.name);
  }

  std::map<std::string, CityExtract> extracts;
  std::map<std::pair<std::string, int>, std::pair<CityGrid, AssignDiagnostics>> grids;
  for (const auto& value : values) {
    SweepRow row;
    PipelineConfig cfg = base;
    row.value = value;
    if (auto reason = apply_sweep_value(cfg, axis, value)) {
      row.resolution = cfg.resolution;
      row.status = "skipped: " + *reason;
      spdlog::warn("sweep {}={}: {}", name_of(axis), value, *reason);
      report.rows.push_back(std::move(row));
      continue;
    }
    row.resolution = cfg.resolution;
    const auto start = std::chrono::steady_clock::now();
    std::vector<CityData> cities;
    for (const auto& n : needed) {
      const auto& spec = cfg.city(n);
      if (!extracts.count(n)) {
        std::vector<std::string> warnings;
        extracts[n] = stage("ingest", ingest_hint(spec), [&] { return ingest_city(spec, cfg, warnings); });
      }
      auto key = std::make_pair(n, cfg.resolution);
      if (!grids.count(key)) {
        AssignDiagnostics diag;
        auto grid = stage("grid", "", [&] { return grid_city(extracts[n], cfg.resolution, &diag); });
        grids.emplace(key, std::make_pair(std::move(grid), std::move(diag)));
      }
      CityData data;
      data.extract = extracts[n];
      data.grid = grids[key].first;
      data.matrix = stage("embed", "", [&] { return embed_city(data.grid, cfg); });
      data.labeled = label_regions(data.matrix, data.extract.stations, &data.warnings);
      cities.push_back(std::move(data));
    }
    std::vector<ExperimentRecord> records;
    try {
      records = run_experiments(cfg, cities);
    } catch (const StageError& e) {
      // data too thin for this value (e.g. every cell has a station at res 9)
      row.status = "skipped: " + std::string(e.what());
      spdlog::warn("sweep {}={}: {}", name_of(axis), value, e.what());
      report.rows.push_back(std::move(row));
      continue;
    }
    row.mean = pool_means(records);
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (records.empty()) row.status = "skipped: no city with stations";
    spdlog::info("sweep {}={} res {}: f1 {:.3f} ({:.1f} s)", name_of(axis), value, row.resolution, row.mean.f1,
                 row.seconds);
    report.rows.push_back(std::move(row));
  }
  return report;
}

TransferMatrix run_transfer(const PipelineConfig& config) {
  config.validate();
  std::vector<PreparedCity> prepared;
  for (const auto& spec : config.cities) {
    auto data = prepare_city(spec, config);
    prepared.push_back({spec.name, std::move(data.matrix), std::move(data.extract.stations)});
  }
  SamplingSpec spec = config.sampling;
  return stage("transfer", "every training city needs stations and enough negative cells for the ratio",
               [&] { return transfer_matrix(prepared, spec, config.experiment_options()); });
}

}  // namespace bikesite
