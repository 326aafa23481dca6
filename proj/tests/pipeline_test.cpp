#include <gtest/gtest.h>

#include <json.hpp>

#include "bikesite/pipeline.hpp"
#include "oracles.hpp"

using namespace bikesite;

namespace {

PipelineConfig twin(const oracle::TempDir& dir, int iterations = 5) {
  auto cfg = load_pipeline_config(oracle::fixture("twin/pipeline.json"));
  cfg.cache_dir = dir / "cache";
  cfg.output.dir = dir / "out";
  cfg.iterations = iterations;
  cfg.training.tree_count = 30;
  return cfg;
}

PredictionMap sample_map() {
  PredictionMap m;
  m.fingerprint = "res=11;embedding=category_counting;neighborhood=squared_diminishing;k=5";
  m.iterations_averaged = 4;
  const auto cells = oracle::distinct_cells(6);
  const double probs[] = {0.05, 0.5, 0.49, 0.95, 0.2, 1.0 / 3};
  for (std::size_t i = 0; i < 6; ++i) m.cells[cells[i]] = probs[i];
  return m;
}

}  // namespace

TEST(Config, DefaultsAreTheFinalSetting) {
  PipelineConfig c;
  EXPECT_EQ(c.resolution, 11);
  EXPECT_EQ(c.embedding, EmbeddingMethod::category_counting);
  EXPECT_EQ(c.neighborhood.method, CombineMethod::squared_diminishing);
  EXPECT_EQ(c.neighborhood.k, 5);
  EXPECT_EQ(c.sampling.ratio, 2.5);
  EXPECT_EQ(c.iterations, 100);
  EXPECT_EQ(c.threshold, 0.5);
  EXPECT_EQ(c.training.tree_count, 100);
}

TEST(Config, ParsesTwinWithRelativePaths) {
  const auto cfg = load_pipeline_config(oracle::fixture("twin/pipeline.json"));
  ASSERT_EQ(cfg.cities.size(), 2u);
  EXPECT_EQ(cfg.cities[0].name, "alpha");
  EXPECT_TRUE(std::filesystem::exists(cfg.cities[0].boundary.path));
  EXPECT_TRUE(std::filesystem::exists(cfg.cities[1].osm_file));
  EXPECT_EQ(cfg.cities[1].stations->kind, StationSourceKind::geojson_file);
  EXPECT_TRUE(cfg.offline);
  EXPECT_EQ(cfg.city("beta").name, "beta");
  EXPECT_THROW(cfg.city("gamma"), LookupError);
}

TEST(Config, StrictKeysAndValidation) {
  const std::string city = R"({"name":"a","boundary":{"kind":"bbox","bbox":[46,14,46.01,14.01]}})";
  EXPECT_NO_THROW(parse_pipeline_config(R"({"cities":[)" + city + "]}"));
  EXPECT_THROW(parse_pipeline_config(R"({"cities":[)" + city + R"(],"resolutoin":11})"), ConfigError);
  EXPECT_THROW(parse_pipeline_config(R"({"cities":[)" + city + R"(],"resolution":12})"), ConfigError);
  EXPECT_THROW(parse_pipeline_config(R"({"cities":[]})"), ConfigError);
  try {
    parse_pipeline_config(R"({"cities":[)" + city + R"(],"threshold":1.5,"iterations":0})");
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("threshold"), std::string::npos);
    EXPECT_NE(msg.find("iterations"), std::string::npos);
  }
  EXPECT_THROW(parse_pipeline_config(R"({"cities":[)" + city + R"(],"sampling":{"ratio":7}})"), ConfigError);
  EXPECT_THROW(parse_pipeline_config("{not json"), Error);
}

TEST(Config, FingerprintIgnoresOutputAndThreads) {
  oracle::TempDir dir("cfg");
  auto a = twin(dir);
  auto b = a;
  b.output.dir = "/elsewhere";
  b.cache_dir = "/other";
  b.threads = 4;
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  EXPECT_EQ(a.fingerprint().size(), 64u);
  b.sampling.ratio = 3.0;
  EXPECT_NE(a.fingerprint(), b.fingerprint());
  // canonical JSON parses back to the same settings
  const auto doc = nlohmann::json::parse(a.canonical_json());
  EXPECT_EQ(doc["resolution"], 11);
  EXPECT_EQ(doc["embedding"]["k"], 5);
}

TEST(Config, SchemaIsJson) {
  const auto schema = nlohmann::json::parse(pipeline_config_schema());
  EXPECT_EQ(schema["type"], "object");
  EXPECT_TRUE(schema["properties"].contains("cities"));
  EXPECT_EQ(max_neighborhood_k(9), 3);
  EXPECT_EQ(max_neighborhood_k(10), 10);
  EXPECT_EQ(max_neighborhood_k(11), 25);
}

TEST(Artifacts, PredictionsCsvRoundTrip) {
  const auto m = sample_map();
  const auto csv = predictions_to_csv(m, nullptr, artifact_stamp("abc", 7));
  EXPECT_EQ(csv.rfind("# bikesite fingerprint=abc base_seed=7", 0), 0u);
  const auto back = parse_predictions_csv(csv);
  EXPECT_EQ(back.cells, m.cells);
  EXPECT_EQ(back.fingerprint, m.fingerprint);
  EXPECT_EQ(back.iterations_averaged, 4);
  EXPECT_THROW(parse_predictions_csv("a,b\n1,2\n"), ParseError);
  EXPECT_THROW(parse_predictions_csv("h3,probability\n8b1e1216b314fff,1.5\n"), ParseError);
}

TEST(Artifacts, HeatmapThresholdFiltering) {
  const auto m = sample_map();
  for (double thr : {0.1, 0.3, 0.5, 0.9}) {
    const auto exp = export_heatmap(m, thr, HeatmapFormat::geojson);
    std::size_t want = 0;
    for (const auto& [c, p] : m.cells) want += p >= thr;
    const auto doc = nlohmann::json::parse(exp.content);
    EXPECT_EQ(doc["features"].size(), want) << thr;
    EXPECT_EQ(exp.exported, want);
    for (const auto& f : doc["features"]) {
      EXPECT_GE(f["properties"]["probability"].get<double>(), thr);
      const auto& ring = f["geometry"]["coordinates"][0];
      EXPECT_EQ(ring.front(), ring.back());
    }
    EXPECT_EQ(doc["fingerprint"], m.fingerprint);
  }
  const auto none = export_heatmap(m, 0.99, HeatmapFormat::geojson);
  EXPECT_TRUE(none.empty_warning);
  EXPECT_EQ(nlohmann::json::parse(none.content)["features"].size(), 0u);
  EXPECT_THROW(export_heatmap(m, 0.0, HeatmapFormat::geojson), ConfigError);
}

TEST(Artifacts, HtmlHeatmap) {
  const auto m = sample_map();
  const auto exp = export_heatmap(m, 0.3, HeatmapFormat::html);
  EXPECT_EQ(exp.exported, 4u);
  EXPECT_NE(exp.content.find("<svg"), std::string::npos);
  EXPECT_NE(exp.content.find("#ffff00"), std::string::npos);  // probability 1 end of the ramp
  EXPECT_EQ(exp.content, export_heatmap(m, 0.3, HeatmapFormat::html).content);
  EXPECT_EQ(parse_heatmap_format("html"), HeatmapFormat::html);
  EXPECT_THROW(parse_heatmap_format("png"), ConfigError);
}

TEST(Pipeline, RunTwinWritesStampedArtifacts) {
  oracle::TempDir dir("pipe");
  const auto cfg = twin(dir);
  const auto art = run_pipeline(cfg);
  ASSERT_EQ(art.experiments.size(), 2u);
  for (const char* f : {"config.json", "metrics.csv", "iterations.csv", "manifest.json", "alpha/predictions.csv",
                        "alpha/heatmap.geojson", "beta/matrix.bin", "beta/stations.geojson",
                        "alpha/normalization.json", "alpha/embedding.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(art.dir / f)) << f;
  }
  const auto stamp = artifact_stamp(cfg.fingerprint(), cfg.sampling.seed);
  for (const char* f : {"metrics.csv", "iterations.csv", "alpha/predictions.csv"}) {
    EXPECT_EQ(oracle::read_text(art.dir / f).rfind(stamp, 0), 0u) << f;
  }
  const auto manifest = nlohmann::json::parse(oracle::read_text(art.dir / "manifest.json"));
  EXPECT_EQ(manifest["fingerprint"], cfg.fingerprint());
  for (const auto& rec : art.experiments) {
    EXPECT_EQ(rec.result.per_iteration.size(), 5u);
    EXPECT_GT(rec.result.mean.f1, 0.5) << rec.eval_city;
  }
  // predictions cover every cell of the eval city
  const auto pred = parse_predictions_csv(oracle::read_text(art.dir / "alpha/predictions.csv"));
  const auto matrix = load_embedding(art.dir / "alpha/matrix.bin");
  EXPECT_EQ(pred.size(), matrix.rows());
  EXPECT_TRUE(matrix.normalized());
}

TEST(Pipeline, TransferConfiguration) {
  oracle::TempDir dir("pipe");
  auto cfg = twin(dir, 3);
  cfg.train_cities = {"alpha"};
  cfg.eval_city = "beta";
  const auto art = run_pipeline(cfg);
  ASSERT_EQ(art.experiments.size(), 1u);
  EXPECT_EQ(art.experiments[0].train_city, "alpha");
  EXPECT_EQ(art.experiments[0].eval_city, "beta");
  EXPECT_TRUE(std::filesystem::exists(art.dir / "beta/predictions.csv"));
  EXPECT_FALSE(std::filesystem::exists(art.dir / "alpha/predictions.csv"));
  cfg.eval_city = "gamma";
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Pipeline, SweepRows) {
  oracle::TempDir dir("sweep");
  const auto cfg = twin(dir, 2);
  const auto rep = sweep(cfg, SweepAxis::imbalance_ratio, {"1", "2.5", "7"});
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.rows[0].status, "ok");
  EXPECT_EQ(rep.rows[0].mean.iterations, 2u);
  EXPECT_EQ(rep.rows[2].status.rfind("skipped", 0), 0u);
  const auto csv = rep.to_csv();
  EXPECT_EQ(csv.rfind("# bikesite fingerprint=", 0), 0u);
  EXPECT_NE(csv.find("axis,resolution,value,status,iterations,accuracy,f1,precision,recall\n"), std::string::npos);
  EXPECT_NE(rep.to_csv(true).find(",seconds"), std::string::npos);
  EXPECT_EQ(parse_sweep_axis("resolution_and_k"), SweepAxis::resolution_and_k);
}

TEST(Pipeline, StageErrorsCarryHints) {
  oracle::TempDir dir("stage");
  auto cfg = twin(dir);
  cfg.cities[0].osm_file.clear();
  try {
    prepare_city(cfg.cities[0], cfg);
    FAIL();
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "ingest");
    EXPECT_FALSE(e.hint().empty());
  }
}
