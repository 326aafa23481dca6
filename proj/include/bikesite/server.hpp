#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>

#include "bikesite/forest.hpp"

namespace bikesite {

struct ServeOptions {
  /// <dir>/<city>/matrix.bin and <dir>/<city>/stations.geojson, as written
  /// by run_pipeline.
  std::filesystem::path snapshot_dir = "out";
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 = any free port
  unsigned workers = 1;
  std::size_t max_queue = 64;
  std::size_t max_jobs_kept = 256;
  ForestParams forest;
  double ratio = 2.5;
  std::uint64_t base_seed = 0;
  int default_iterations = 100;
  int max_iterations = 1000;
};

struct ServiceReply {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Transport-independent request handling and the job queue.
///   GET  /cities             → {"cities":[{name, stations, cells, fingerprint}]}
///   POST /predict            → 202 {"job_id", "status"}
///   GET  /jobs/{id}          → {"job_id", "status", "request", "metrics"?, "geojson"?, "error"?}
///   GET  /stations/{city}    → station FeatureCollection
/// Unknown cities answer 404 with the city list; invalid bodies 400 with
/// per-field errors.
class PredictionService {
 public:
  explicit PredictionService(ServeOptions options);
  ~PredictionService();
  PredictionService(const PredictionService&) = delete;
  PredictionService& operator=(const PredictionService&) = delete;

  ServiceReply handle(const std::string& method, const std::string& path, const std::string& body);

  /// Blocks until the queue is empty and no job runs.
  void wait_idle();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// HTTP front end over PredictionService.
class HttpServer {
 public:
  explicit HttpServer(ServeOptions options);
  ~HttpServer();

  /// Binds and serves on a background thread; returns the bound port.
  int start();
  void stop();
  /// Binds and serves on the calling thread until stop() is called.
  void run();

  PredictionService& service();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace bikesite
