#include "bikesite/server.hpp"

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "bikesite/errors.hpp"
#include "bikesite/pipeline.hpp"
#include "serialization.hpp"

namespace bikesite {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ServiceReply json_reply(int status, const ordered_json& body) { return {status, "application/json", body.dump()}; }

ServiceReply error_reply(int status, const std::string& message, ordered_json extra = ordered_json::object()) {
  ordered_json body;
  body["error"] = message;
  for (auto& [k, v] : extra.items()) body[k] = v;
  return json_reply(status, body);
}

struct Snapshot {
  CityData data;
  std::string stations_geojson;
};

struct JobRequest {
  std::vector<std::string> train_cities;
  std::string eval_city;
  double threshold = kDefaultThreshold;
  int iterations = 100;
};

enum class JobState { queued, running, done, failed };

std::string_view name_of(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "?";
}

struct Job {
  std::string id;
  JobRequest request;
  JobState state = JobState::queued;
  std::string result_json;  // metrics + geojson, when done
  std::string error;
};

}  // namespace

struct PredictionService::Impl {
  ServeOptions options;

  std::mutex snap_mutex;
  std::map<std::string, std::shared_ptr<const Snapshot>> snapshots;

  std::mutex job_mutex;
  std::condition_variable job_cv;
  std::condition_variable idle_cv;
  std::map<std::uint64_t, Job> jobs;
  std::deque<std::uint64_t> queue;
  std::uint64_t next_id = 1;
  unsigned running = 0;
  bool stopping = false;
  std::vector<std::thread> workers;

  explicit Impl(ServeOptions o) : options(std::move(o)) {
    for (unsigned i = 0; i < std::max(1u, options.workers); ++i) workers.emplace_back([this] { work(); });
  }

  ~Impl() {
    {
      std::lock_guard lock(job_mutex);
      stopping = true;
    }
    job_cv.notify_all();
    for (auto& w : workers) w.join();
  }

  std::vector<std::string> city_names() const {
    std::vector<std::string> names;
    std::error_code ec;
    if (!std::filesystem::is_directory(options.snapshot_dir, ec)) return names;
    for (const auto& entry : std::filesystem::directory_iterator(options.snapshot_dir, ec)) {
      if (entry.is_directory() && std::filesystem::exists(entry.path() / "matrix.bin")) {
        names.push_back(entry.path().filename().string());
      }
    }
    std::sort(names.begin(), names.end());
    return names;
  }

  std::shared_ptr<const Snapshot> snapshot(const std::string& city) {
    {
      std::lock_guard lock(snap_mutex);
      if (auto it = snapshots.find(city); it != snapshots.end()) return it->second;
    }
    const auto names = city_names();
    if (std::find(names.begin(), names.end(), city) == names.end()) return nullptr;
    const auto dir = options.snapshot_dir / city;
    auto snap = std::make_shared<Snapshot>();
    snap->data.matrix = load_embedding(dir / "matrix.bin");
    snap->data.extract.city_name = city;
    if (std::filesystem::exists(dir / "stations.geojson")) {
      snap->stations_geojson = detail::read_file_bytes(dir / "stations.geojson");
      snap->data.extract.stations = parse_station_geojson(snap->stations_geojson, city).records;
    } else {
      snap->stations_geojson = stations_to_geojson({});
    }
    snap->data.labeled = label_regions(snap->data.matrix, snap->data.extract.stations);
    std::lock_guard lock(snap_mutex);
    return snapshots.emplace(city, std::move(snap)).first->second;
  }

  ServiceReply unknown_city(const std::vector<std::string>& unknown) {
    ordered_json extra;
    extra["unknown"] = unknown;
    extra["cities"] = city_names();
    return error_reply(404, "unknown city", extra);
  }

  ServiceReply list_cities() {
    ordered_json list = ordered_json::array();
    for (const auto& name : city_names()) {
      try {
        auto s = snapshot(name);
        list.push_back({{"name", name},
                        {"stations", s->data.extract.stations.size()},
                        {"cells", s->data.matrix.rows()},
                        {"fingerprint", s->data.matrix.config().fingerprint()}});
      } catch (const std::exception& e) {
        spdlog::warn("snapshot {} unreadable: {}", name, e.what());
      }
    }
    return json_reply(200, {{"cities", list}});
  }

  ServiceReply stations(const std::string& city) {
    auto s = snapshot(city);
    if (!s) return unknown_city({city});
    return {200, "application/geo+json", s->stations_geojson};
  }

  ServiceReply submit(const std::string& body) {
    json doc;
    try {
      doc = json::parse(body);
    } catch (const json::parse_error& e) {
      return error_reply(400, "invalid JSON body", {{"fields", {{"body", e.what()}}}});
    }
    ordered_json fields = ordered_json::object();
    JobRequest req;
    req.iterations = options.default_iterations;
    if (!doc.is_object()) {
      return error_reply(400, "invalid request", {{"fields", {{"body", "must be a JSON object"}}}});
    }
    for (const auto& [k, _] : doc.items()) {
      if (k != "train_cities" && k != "eval_city" && k != "threshold" && k != "iterations") fields[k] = "unknown field";
    }
    if (auto it = doc.find("train_cities"); it == doc.end()) {
      fields["train_cities"] = "required";
    } else if (!it->is_array() || it->empty() ||
               !std::all_of(it->begin(), it->end(), [](const json& v) { return v.is_string(); })) {
      fields["train_cities"] = "must be a non-empty array of city names";
    } else {
      req.train_cities = it->get<std::vector<std::string>>();
      std::set<std::string> uniq(req.train_cities.begin(), req.train_cities.end());
      if (uniq.size() != req.train_cities.size()) fields["train_cities"] = "contains duplicates";
    }
    if (auto it = doc.find("eval_city"); it == doc.end()) {
      fields["eval_city"] = "required";
    } else if (!it->is_string() || it->get<std::string>().empty()) {
      fields["eval_city"] = "must be a city name";
    } else {
      req.eval_city = it->get<std::string>();
    }
    if (auto it = doc.find("threshold"); it != doc.end()) {
      if (!it->is_number() || !(it->get<double>() > 0.0 && it->get<double>() < 1.0)) {
        fields["threshold"] = "must be a number in (0, 1)";
      } else {
        req.threshold = it->get<double>();
      }
    }
    if (auto it = doc.find("iterations"); it != doc.end()) {
      if (!it->is_number_integer() || it->get<std::int64_t>() < 1 || it->get<std::int64_t>() > options.max_iterations) {
        fields["iterations"] = "must be an integer in [1, " + std::to_string(options.max_iterations) + "]";
      } else {
        req.iterations = it->get<int>();
      }
    }
    if (!fields.empty()) return error_reply(400, "invalid request", {{"fields", fields}});

    std::vector<std::string> unknown;
    std::vector<std::shared_ptr<const Snapshot>> train;
    for (const auto& c : req.train_cities) {
      auto s = snapshot(c);
      if (!s) unknown.push_back(c);
      else train.push_back(std::move(s));
    }
    auto eval = snapshot(req.eval_city);
    if (!eval) unknown.push_back(req.eval_city);
    if (!unknown.empty()) return unknown_city(unknown);

    for (std::size_t i = 0; i < train.size(); ++i) {
      if (count_positives(train[i]->data.labeled) == 0) {
        fields["train_cities"] = "'" + req.train_cities[i] + "' has no stations to learn from";
      }
      if (!(train[i]->data.matrix.config() == eval->data.matrix.config()) ||
          train[i]->data.matrix.columns() != eval->data.matrix.columns()) {
        fields["train_cities"] = "'" + req.train_cities[i] + "' uses a different embedding than '" +
                                 req.eval_city + "'";
      }
    }
    if (!fields.empty()) return error_reply(400, "invalid request", {{"fields", fields}});

    std::uint64_t id;
    {
      std::lock_guard lock(job_mutex);
      if (queue.size() >= options.max_queue) return error_reply(503, "job queue is full, retry later");
      id = next_id++;
      auto& job = jobs[id];
      job.id = std::to_string(id);
      job.request = req;
      queue.push_back(id);
      prune_locked();
    }
    job_cv.notify_one();
    return json_reply(202, {{"job_id", std::to_string(id)}, {"status", "queued"}});
  }

  void prune_locked() {
    while (jobs.size() > options.max_jobs_kept) {
      auto it = std::find_if(jobs.begin(), jobs.end(), [](const auto& kv) {
        return kv.second.state == JobState::done || kv.second.state == JobState::failed;
      });
      if (it == jobs.end()) break;
      jobs.erase(it);
    }
  }

  ServiceReply job_status(const std::string& id_text) {
    std::uint64_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoull(id_text, &used);
      if (used != id_text.size()) throw std::invalid_argument("id");
    } catch (const std::exception&) {
      return error_reply(404, "unknown job '" + id_text + "'");
    }
    std::lock_guard lock(job_mutex);
    auto it = jobs.find(id);
    if (it == jobs.end()) return error_reply(404, "unknown job '" + id_text + "'");
    const auto& job = it->second;
    // The result document is stored pre-rendered; splice it in.
    ordered_json head;
    head["job_id"] = job.id;
    head["status"] = name_of(job.state);
    head["request"] = {{"train_cities", job.request.train_cities},
                       {"eval_city", job.request.eval_city},
                       {"threshold", job.request.threshold},
                       {"iterations", job.request.iterations}};
    if (job.state == JobState::failed) head["error"] = job.error;
    std::string text = head.dump();
    if (job.state == JobState::done) {
      text.pop_back();
      text += "," + job.result_json + "}";
    }
    return {200, "application/json", text};
  }

  std::string run_job(const JobRequest& req) {
    std::vector<std::shared_ptr<const Snapshot>> keep;
    std::vector<const CityData*> train;
    for (const auto& c : req.train_cities) {
      keep.push_back(snapshot(c));
      if (!keep.back()) throw LookupError("city '" + c + "' disappeared");
      train.push_back(&keep.back()->data);
    }
    auto eval = snapshot(req.eval_city);
    if (!eval) throw LookupError("city '" + req.eval_city + "' disappeared");

    PipelineConfig cfg;
    cfg.sampling.ratio = options.ratio;
    auto factory = multi_city_factory(train, eval->data, cfg);
    ExperimentOptions eo;
    eo.iterations = req.iterations;
    eo.base_seed = options.base_seed;
    eo.forest = options.forest;
    eo.threshold = req.threshold;
    eo.fingerprint = eval->data.matrix.config().fingerprint();
    eo.heatmap = &eval->data.labeled;
    const auto result = repeated_experiment(factory, eo);

    ordered_json metrics;
    metrics["accuracy"] = result.mean.accuracy;
    metrics["f1"] = result.mean.f1;
    metrics["precision"] = result.mean.precision;
    metrics["recall"] = result.mean.recall_applicable ? json(result.mean.recall) : json(nullptr);
    metrics["recall_applicable"] = result.mean.recall_applicable;
    metrics["iterations"] = result.mean.iterations;
    std::string geo = prediction_to_geojson(result.averaged, std::nullopt);
    while (!geo.empty() && geo.back() == '\n') geo.pop_back();
    return "\"metrics\":" + metrics.dump() + ",\"geojson\":" + geo;
  }

  void work() {
    for (;;) {
      std::uint64_t id;
      JobRequest req;
      {
        std::unique_lock lock(job_mutex);
        job_cv.wait(lock, [this] { return stopping || !queue.empty(); });
        if (stopping) return;
        id = queue.front();
        queue.pop_front();
        auto& job = jobs[id];
        job.state = JobState::running;
        req = job.request;
        ++running;
      }
      std::string result, error;
      bool ok = true;
      try {
        result = run_job(req);
      } catch (const std::exception& e) {
        ok = false;
        error = e.what();
        spdlog::warn("job {} failed: {}", id, error);
      }
      {
        std::lock_guard lock(job_mutex);
        if (auto it = jobs.find(id); it != jobs.end()) {
          it->second.state = ok ? JobState::done : JobState::failed;
          it->second.result_json = std::move(result);
          it->second.error = std::move(error);
        }
        --running;
      }
      idle_cv.notify_all();
    }
  }
};

PredictionService::PredictionService(ServeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}
PredictionService::~PredictionService() = default;

ServiceReply PredictionService::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex job_re("^/jobs/([^/]+)$");
  static const std::regex stations_re("^/stations/([^/]+)$");
  std::smatch m;
  try {
    if (path == "/cities") {
      if (method != "GET") return error_reply(405, "use GET");
      return impl_->list_cities();
    }
    if (path == "/predict") {
      if (method != "POST") return error_reply(405, "use POST");
      return impl_->submit(body);
    }
    if (std::regex_match(path, m, job_re)) {
      if (method != "GET") return error_reply(405, "use GET");
      return impl_->job_status(m[1]);
    }
    if (std::regex_match(path, m, stations_re)) {
      if (method != "GET") return error_reply(405, "use GET");
      return impl_->stations(m[1]);
    }
  } catch (const std::exception& e) {
    return error_reply(500, e.what());
  }
  return error_reply(404, "no such endpoint");
}

void PredictionService::wait_idle() {
  std::unique_lock lock(impl_->job_mutex);
  impl_->idle_cv.wait(lock, [this] { return impl_->queue.empty() && impl_->running == 0; });
}

struct HttpServer::Impl {
  ServeOptions options;
  PredictionService service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(ServeOptions o) : options(o), service(std::move(o)) {
    auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
      auto reply = service.handle(req.method, req.path, req.body);
      res.status = reply.status;
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_content(reply.body, reply.content_type);
    };
    server.Get(R"(/.*)", dispatch);
    server.Post(R"(/.*)", dispatch);
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });
  }

  int bind() {
    int port = options.port;
    if (port == 0) {
      port = server.bind_to_any_port(options.host);
    } else if (!server.bind_to_port(options.host, port)) {
      port = -1;
    }
    if (port < 0) throw NetworkError("cannot bind " + options.host + ":" + std::to_string(options.port));
    return port;
  }
};

HttpServer::HttpServer(ServeOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
  const int port = impl_->bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void HttpServer::run() {
  const int port = impl_->bind();
  spdlog::info("serving {} on http://{}:{}", impl_->options.snapshot_dir.string(), impl_->options.host, port);
  impl_->server.listen_after_bind();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

PredictionService& HttpServer::service() { return impl_->service; }

}  // namespace bikesite
