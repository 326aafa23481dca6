#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "bikesite/errors.hpp"
#include "bikesite/extract.hpp"
#include "bikesite/http.hpp"
#include "oracles.hpp"

using namespace bikesite;
using namespace std::chrono_literals;

namespace {

// Local Overpass stand-in: answers 429 `failures` times, then the payload.
class MockOverpass {
 public:
  MockOverpass(std::string payload, int failures) : payload_(std::move(payload)), failures_(failures) {
    server_.Post("/api/interpreter", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits_;
      last_body_ = req.body;
      if (failures_-- > 0) {
        res.status = 429;
        res.set_content("rate limited", "text/plain");
        return;
      }
      res.set_content(payload_, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockOverpass() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/api/interpreter"; }
  int hits() const { return hits_; }
  std::string last_body() const { return last_body_; }

 private:
  httplib::Server server_;
  std::string payload_;
  std::atomic<int> failures_;
  std::atomic<int> hits_{0};
  std::string last_body_;
  int port_ = 0;
  std::thread thread_;
};

RetryPolicy recording(std::vector<std::chrono::milliseconds>& sleeps, int attempts = 5) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.initial_backoff = 100ms;
  p.sleep = [&sleeps](std::chrono::milliseconds d) { sleeps.push_back(d); };
  return p;
}

}  // namespace

TEST(Http, RetriesWithExponentialBackoff) {
  int calls = 0;
  HttpTransport t = [&](const HttpRequest&) {
    ++calls;
    return calls < 4 ? HttpResponse{429, "", ""} : HttpResponse{200, "ok", ""};
  };
  std::vector<std::chrono::milliseconds> sleeps;
  const auto res = request_with_retry(t, {"http://x/"}, recording(sleeps));
  EXPECT_EQ(res.body, "ok");
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{100ms, 200ms, 400ms}));
}

TEST(Http, GivesUpAfterConfiguredAttempts) {
  int calls = 0;
  HttpTransport t = [&](const HttpRequest&) {
    ++calls;
    return HttpResponse{0, "", "connection refused"};
  };
  std::vector<std::chrono::milliseconds> sleeps;
  EXPECT_THROW(request_with_retry(t, {"http://x/"}, recording(sleeps, 3)), NetworkError);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(sleeps.size(), 2u);
}

TEST(Http, ClientErrorsAreNotRetried) {
  int calls = 0;
  HttpTransport t = [&](const HttpRequest&) {
    ++calls;
    return HttpResponse{400, "bad query", ""};
  };
  std::vector<std::chrono::milliseconds> sleeps;
  EXPECT_THROW(request_with_retry(t, {"http://x/"}, recording(sleeps)), NetworkError);
  EXPECT_EQ(calls, 1);
}

TEST(Http, FormEncode) {
  EXPECT_EQ(form_encode("a b&c=d;[x]"), "a+b%26c%3Dd%3B%5Bx%5D");
  EXPECT_EQ(form_encode("safe-_.~09AZ"), "safe-_.~09AZ");
}

TEST(Http, FetchThroughRateLimitedServerThenReplayFromCache) {
  const auto payload = oracle::read_text(oracle::fixture("town/overpass.json"));
  MockOverpass server(payload, 2);
  oracle::TempDir dir("http");

  FetchOptions opt;
  opt.cache_root = dir.path();
  opt.endpoint = server.url();
  opt.transport = default_http_transport(5s);
  std::vector<std::chrono::milliseconds> sleeps;
  opt.retry = recording(sleeps);

  BoundarySource boundary;
  boundary.kind = BoundaryKind::polygon_file;
  boundary.path = oracle::fixture("town/boundary.geojson");

  FetchReport report;
  const auto first = fetch_city_extract("town", boundary, opt, &report);
  EXPECT_EQ(server.hits(), 3);
  EXPECT_EQ(sleeps.size(), 2u);
  EXPECT_FALSE(report.cache_hit);
  EXPECT_EQ(server.last_body().rfind("data=", 0), 0u);
  EXPECT_EQ(first.features.size(), 150u);

  const ResponseCache cache(dir.path());
  const auto query = build_feature_query(default_category_rules(), boundary, first.boundary);
  const auto cached_path = cache.response_path("town", query);
  ASSERT_TRUE(std::filesystem::exists(cached_path));
  const auto cached_bytes = oracle::read_text(cached_path);
  EXPECT_EQ(cached_bytes, payload);

  // second fetch never reaches the server
  opt.offline = true;
  const auto second = fetch_city_extract("town", boundary, opt, &report);
  EXPECT_TRUE(report.cache_hit);
  EXPECT_EQ(server.hits(), 3);
  EXPECT_EQ(second.snapshot_id, first.snapshot_id);
  EXPECT_EQ(oracle::read_text(cached_path), cached_bytes);
}

TEST(Http, OfflineMissFails) {
  oracle::TempDir dir("off");
  FetchOptions opt;
  opt.cache_root = dir.path();
  opt.offline = true;
  BoundarySource boundary;
  boundary.kind = BoundaryKind::bbox;
  boundary.bbox = {46.0, 14.0, 46.01, 14.01};
  EXPECT_THROW(fetch_city_extract("nowhere", boundary, opt), NetworkError);
}
