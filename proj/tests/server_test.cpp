#include <gtest/gtest.h>

#include <httplib.h>
#include <json.hpp>

#include "bikesite/pipeline.hpp"
#include "bikesite/server.hpp"
#include "oracles.hpp"

using namespace bikesite;
using nlohmann::json;

namespace {

// One pipeline run shared by every test; its output dir is the snapshot dir.
class Serve : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new oracle::TempDir("serve");
    auto cfg = load_pipeline_config(oracle::fixture("twin/pipeline.json"));
    cfg.cache_dir = *dir_ / "cache";
    cfg.output.dir = *dir_ / "out";
    cfg.iterations = 1;
    cfg.training.tree_count = 10;
    run_pipeline(cfg);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static ServeOptions options() {
    ServeOptions o;
    o.snapshot_dir = *dir_ / "out";
    o.port = 0;
    o.forest.tree_count = 10;
    return o;
  }

  static json wait_for(PredictionService& svc, const std::string& id) {
    svc.wait_idle();
    const auto r = svc.handle("GET", "/jobs/" + id, "");
    EXPECT_EQ(r.status, 200);
    return json::parse(r.body);
  }

  static oracle::TempDir* dir_;
};

oracle::TempDir* Serve::dir_ = nullptr;

}  // namespace

TEST_F(Serve, ListsCities) {
  PredictionService svc(options());
  const auto r = svc.handle("GET", "/cities", "");
  ASSERT_EQ(r.status, 200);
  const auto doc = json::parse(r.body);
  ASSERT_EQ(doc["cities"].size(), 2u);
  EXPECT_EQ(doc["cities"][0]["name"], "alpha");
  EXPECT_GT(doc["cities"][0]["stations"].get<int>(), 0);
  EXPECT_GT(doc["cities"][0]["cells"].get<int>(), 800);
  EXPECT_EQ(doc["cities"][1]["fingerprint"], doc["cities"][0]["fingerprint"]);

  oracle::TempDir empty("serve-empty");
  auto o = options();
  o.snapshot_dir = empty.path();
  PredictionService none(o);
  EXPECT_EQ(json::parse(none.handle("GET", "/cities", "").body)["cities"].size(), 0u);
}

TEST_F(Serve, RejectsInvalidRequests) {
  PredictionService svc(options());
  auto r = svc.handle("POST", "/predict", "{oops");
  EXPECT_EQ(r.status, 400);
  r = svc.handle("POST", "/predict", R"({"train_cities":[],"threshold":2,"colour":1})");
  ASSERT_EQ(r.status, 400);
  const auto fields = json::parse(r.body)["fields"];
  EXPECT_TRUE(fields.contains("train_cities"));
  EXPECT_TRUE(fields.contains("eval_city"));
  EXPECT_TRUE(fields.contains("threshold"));
  EXPECT_TRUE(fields.contains("colour"));
  r = svc.handle("POST", "/predict", R"({"train_cities":["gamma"],"eval_city":"beta"})");
  ASSERT_EQ(r.status, 404);
  EXPECT_EQ(json::parse(r.body)["cities"], json::array({"alpha", "beta"}));
  EXPECT_EQ(svc.handle("GET", "/predict", "").status, 405);
  EXPECT_EQ(svc.handle("GET", "/nothing", "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/jobs/999", "").status, 404);
  EXPECT_EQ(svc.handle("GET", "/stations/gamma", "").status, 404);
}

TEST_F(Serve, PredictJobLifecycle) {
  PredictionService svc(options());
  const std::string body = R"({"train_cities":["alpha"],"eval_city":"beta","iterations":2,"threshold":0.5})";
  auto r = svc.handle("POST", "/predict", body);
  ASSERT_EQ(r.status, 202);
  const auto id = json::parse(r.body)["job_id"].get<std::string>();
  const auto job = wait_for(svc, id);
  ASSERT_EQ(job["status"], "done") << job.dump();
  EXPECT_EQ(job["request"]["eval_city"], "beta");
  // every eval cell is returned; the client filters by threshold itself
  const auto& gj = job["geojson"];
  EXPECT_EQ(gj["type"], "FeatureCollection");
  const auto cities = json::parse(svc.handle("GET", "/cities", "").body)["cities"];
  EXPECT_EQ(gj["features"].size(), cities[1]["cells"].get<std::size_t>());
  for (const auto& f : gj["features"]) {
    const double p = f["properties"]["probability"].get<double>();
    EXPECT_TRUE(p >= 0.0 && p <= 1.0);
  }
  EXPECT_GE(job["metrics"]["f1"].get<double>(), 0.0);

  // identical requests give identical results
  const auto id2 = json::parse(svc.handle("POST", "/predict", body).body)["job_id"].get<std::string>();
  EXPECT_NE(id2, id);
  const auto again = wait_for(svc, id2);
  EXPECT_EQ(again["geojson"], gj);
  EXPECT_EQ(again["metrics"], job["metrics"]);
}

TEST_F(Serve, StationsEndpoint) {
  PredictionService svc(options());
  const auto r = svc.handle("GET", "/stations/beta", "");
  ASSERT_EQ(r.status, 200);
  const auto doc = json::parse(r.body);
  EXPECT_EQ(doc["type"], "FeatureCollection");
  EXPECT_EQ(doc["features"].size(), json::parse(oracle::read_text(*dir_ / "out/beta/stations.geojson"))["features"].size());
}

TEST_F(Serve, HttpFrontEnd) {
  HttpServer server(options());
  const int port = server.start();
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/cities");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  res = client.Post("/predict", R"({"train_cities":["beta"],"eval_city":"alpha","iterations":1})", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 202);
  const auto id = json::parse(res->body)["job_id"].get<std::string>();
  server.service().wait_idle();
  res = client.Get("/jobs/" + id);
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["status"], "done");
  res = client.Options("/predict");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  server.stop();
}
