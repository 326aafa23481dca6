#include "bikesite/model.hpp"

#include <algorithm>
#include <exception>
#include <thread>

#include "bikesite/errors.hpp"
#include "bikesite/hashing.hpp"
#include "serialization.hpp"

namespace bikesite {
namespace {

constexpr std::string_view kModelMagic = "BSMODL01";
constexpr std::uint32_t kModelVersion = 1;

double ratio_or_zero(double num, double den, bool& undefined) {
  if (den == 0.0) {
    undefined = true;
    return 0.0;
  }
  return num / den;
}

}  // namespace

template <class Archive>
void serialize(Archive& ar, TreeNode& n) {
  ar(n.feature, n.threshold, n.left, n.right, n.positive_fraction);
}

ClassifierModel ClassifierModel::train(const std::vector<LabeledRegion>& train,
                                       const ForestParams& params,
                                       std::vector<std::string> trained_on, std::string fingerprint) {
  if (train.empty()) throw DataError("cannot train on an empty training set");
  const std::size_t d = train.front().features.size();
  std::vector<double> x;
  x.reserve(train.size() * d);
  std::vector<int> y;
  y.reserve(train.size());
  for (const auto& r : train) {
    if (r.features.size() != d) throw DataError("training rows differ in dimension");
    x.insert(x.end(), r.features.begin(), r.features.end());
    y.push_back(r.label);
  }
  ClassifierModel model;
  model.forest_ = RandomForest::fit(TrainingData{x, train.size(), d, y}, params);
  model.trained_on_ = std::move(trained_on);
  model.fingerprint_ = std::move(fingerprint);
  return model;
}

ClassifierModel train(const ExperimentSplit& split, const ForestParams& params,
                      const std::string& fingerprint) {
  std::vector<std::string> cities{split.train_city};
  return ClassifierModel::train(split.train, params, std::move(cities), fingerprint);
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path) {
  write_snapshot(path, kModelMagic, kModelVersion, model);
}

ClassifierModel load_model(const std::filesystem::path& path,
                           const std::optional<std::string>& expected_fingerprint, bool force) {
  auto model = read_snapshot<ClassifierModel>(path, kModelMagic, kModelVersion);
  if (expected_fingerprint && *expected_fingerprint != model.fingerprint() && !force) {
    throw ConfigError("model " + path.string() + " was trained for '" + model.fingerprint() +
                      "', not '" + *expected_fingerprint + "' (use force to override)");
  }
  return model;
}

std::optional<double> PredictionMap::at(CellId cell) const {
  auto it = cells.find(cell);
  if (it == cells.end()) return std::nullopt;
  return it->second;
}

PredictionMap predict_proba(const ClassifierModel& model, const EmbeddingMatrix& matrix) {
  PredictionMap out;
  out.fingerprint = model.fingerprint();
  if (matrix.empty()) return out;
  if (matrix.config().fingerprint() != model.fingerprint()) {
    throw ConfigError("matrix '" + matrix.city_name() + "' uses " + matrix.config().fingerprint() +
                      " but the model was trained on " + model.fingerprint());
  }
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    out.cells.emplace_hint(out.cells.end(), matrix.cells()[i], model.predict(matrix.row(i)));
  }
  return out;
}

PredictionMap predict_proba(const ClassifierModel& model, const std::vector<LabeledRegion>& regions) {
  PredictionMap out;
  out.fingerprint = model.fingerprint();
  for (const auto& r : regions) out.cells[r.cell] = model.predict(r.features);
  return out;
}

EvalMetrics compute_metrics(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
  EvalMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  const auto d = [](std::uint64_t v) { return static_cast<double>(v); };
  m.accuracy = ratio_or_zero(d(tp + tn), d(m.total()), m.flags.accuracy_undefined);
  m.precision = ratio_or_zero(d(tp), d(tp + fp), m.flags.precision_undefined);
  m.recall = ratio_or_zero(d(tp), d(tp + fn), m.flags.recall_undefined);
  m.f1 = ratio_or_zero(2.0 * m.precision * m.recall, m.precision + m.recall, m.flags.f1_undefined);
  return m;
}

EvalMetrics evaluate(const PredictionMap& pred, const std::vector<LabeledRegion>& truth,
                     double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& r : truth) {
    const auto p = pred.at(r.cell);
    if (!p) throw LookupError("cell " + r.cell.to_string() + " has no prediction");
    const bool predicted = *p >= threshold;
    if (r.label == 1) (predicted ? tp : fn)++;
    else (predicted ? fp : tn)++;
  }
  return compute_metrics(tp, fp, fn, tn);
}

MetricSummary summarize(const std::vector<EvalMetrics>& runs) {
  MetricSummary s;
  s.iterations = runs.size();
  if (runs.empty()) return s;
  std::size_t with_recall = 0;
  for (const auto& m : runs) {
    s.accuracy += m.accuracy;
    s.precision += m.precision;
    s.f1 += m.f1;
    if (!m.flags.recall_undefined) {
      s.recall += m.recall;
      ++with_recall;
    }
  }
  const double n = static_cast<double>(runs.size());
  s.accuracy /= n;
  s.precision /= n;
  s.f1 /= n;
  s.recall_applicable = with_recall > 0;
  s.recall = with_recall ? s.recall / static_cast<double>(with_recall) : 0.0;
  return s;
}

std::vector<PrPoint> pr_points(const PredictionMap& pred, const std::vector<LabeledRegion>& truth) {
  std::vector<std::pair<double, int>> scored;
  scored.reserve(truth.size());
  std::uint64_t positives = 0;
  for (const auto& r : truth) {
    const auto p = pred.at(r.cell);
    if (!p) throw LookupError("cell " + r.cell.to_string() + " has no prediction");
    scored.emplace_back(*p, r.label);
    positives += r.label == 1;
  }
  std::sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
  std::vector<PrPoint> out;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    (scored[i].second == 1 ? tp : fp)++;
    if (i + 1 < scored.size() && scored[i + 1].first == scored[i].first) continue;
    const auto m = compute_metrics(tp, fp, positives - tp, 0);
    out.push_back({scored[i].first, m.precision, m.recall});
  }
  return out;
}

ExperimentResult repeated_experiment(const SplitFactory& factory, const ExperimentOptions& options) {
  if (options.iterations < 1) throw ConfigError("iterations must be >= 1");
  const auto n = static_cast<std::size_t>(options.iterations);
  const auto* heatmap = options.heatmap;

  struct Outcome {
    EvalMetrics metrics;
    std::vector<std::pair<CellId, double>> eval_probs;  // without heatmap
    std::vector<double> heat_probs;                     // aligned with *heatmap
    std::exception_ptr error;
    std::uint64_t seed = 0;
  };

  auto run_one = [&](std::size_t i, Outcome& out) {
    out = Outcome{};
    out.seed = options.base_seed + i;
    try {
      auto split = factory(out.seed);
      ForestParams params = options.forest;
      params.seed = out.seed;
      auto model = train(split, params, options.fingerprint);
      auto eval_pred = predict_proba(model, split.eval);
      out.metrics = evaluate(eval_pred, split.eval, options.threshold);
      if (heatmap) {
        out.heat_probs.reserve(heatmap->size());
        for (const auto& r : *heatmap) out.heat_probs.push_back(model.predict(r.features));
      } else {
        out.eval_probs.assign(eval_pred.cells.begin(), eval_pred.cells.end());
      }
    } catch (...) {
      out.error = std::current_exception();
    }
  };

  ExperimentResult result;
  result.averaged.fingerprint = options.fingerprint;
  result.averaged.iterations_averaged = options.iterations;
  std::vector<double> heat_sums(heatmap ? heatmap->size() : 0, 0.0);
  std::map<CellId, std::pair<double, int>> sums;

  // Batches of `threads` iterations; each batch is reduced in iteration
  // order, so memory stays bounded and sums do not depend on scheduling.
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n)));
  std::vector<Outcome> batch(threads);
  for (std::size_t start = 0; start < n; start += threads) {
    const std::size_t count = std::min<std::size_t>(threads, n - start);
    if (count == 1) {
      run_one(start, batch[0]);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < count; ++t) pool.emplace_back(run_one, start + t, std::ref(batch[t]));
      for (auto& th : pool) th.join();
    }
    for (std::size_t t = 0; t < count; ++t) {
      auto& out = batch[t];
      if (out.error) {
        try {
          std::rethrow_exception(out.error);
        } catch (const std::exception& e) {
          throw ExperimentError(std::string("experiment iteration failed: ") + e.what(), out.seed);
        }
      }
      result.per_iteration.push_back(out.metrics);
      if (heatmap) {
        for (std::size_t k = 0; k < heat_sums.size(); ++k) heat_sums[k] += out.heat_probs[k];
      } else {
        for (const auto& [cell, p] : out.eval_probs) {
          auto& s = sums[cell];
          s.first += p;
          s.second += 1;
        }
      }
      out = Outcome{};
    }
  }
  if (heatmap) {
    for (std::size_t k = 0; k < heat_sums.size(); ++k) {
      result.averaged.cells[(*heatmap)[k].cell] = heat_sums[k] / static_cast<double>(n);
    }
  } else {
    for (const auto& [cell, s] : sums) {
      result.averaged.cells.emplace_hint(result.averaged.cells.end(), cell, s.first / s.second);
    }
  }
  result.mean = summarize(result.per_iteration);
  return result;
}

std::string TransferMatrix::to_csv() const {
  std::string out = "train_city";
  for (const auto& c : cities) out += "," + c;
  out += '\n';
  for (std::size_t i = 0; i < cities.size(); ++i) {
    out += cities[i];
    for (const auto& r : recall[i]) out += "," + (r ? format_double(*r) : std::string("NA"));
    out += '\n';
  }
  return out;
}

std::string TransferMatrix::digest() const { return sha256_hex(to_csv()); }

TransferMatrix transfer_matrix(const std::vector<PreparedCity>& cities, const SamplingSpec& spec,
                               const ExperimentOptions& options) {
  if (cities.empty()) return {};
  for (const auto& c : cities) require_same_feature_space(cities.front().matrix, c.matrix);

  std::vector<std::size_t> order(cities.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (cities[a].stations.size() != cities[b].stations.size()) {
      return cities[a].stations.size() > cities[b].stations.size();
    }
    return cities[a].name < cities[b].name;
  });

  std::vector<std::vector<LabeledRegion>> labeled(cities.size());
  for (std::size_t i = 0; i < cities.size(); ++i) {
    labeled[i] = label_regions(cities[i].matrix, cities[i].stations);
  }

  TransferMatrix tm;
  for (auto i : order) {
    tm.cities.push_back(cities[i].name);
    tm.station_counts.push_back(cities[i].stations.size());
  }
  for (auto ti : order) {
    std::vector<std::optional<double>> row;
    for (auto ei : order) {
      if (count_positives(labeled[ei]) == 0 || count_positives(labeled[ti]) == 0) {
        row.push_back(std::nullopt);
        continue;
      }
      ExperimentOptions opts = options;
      opts.heatmap = nullptr;
      const auto& train_set = labeled[ti];
      const auto& eval_set = labeled[ei];
      const auto& tn = cities[ti].name;
      const auto& en = cities[ei].name;
      SplitFactory factory = [&](std::uint64_t seed) {
        SamplingSpec s = spec;
        s.seed = seed;
        return build_transfer_split(train_set, tn, eval_set, en, s);
      };
      try {
        auto res = repeated_experiment(factory, opts);
        row.push_back(res.mean.recall_applicable ? std::optional<double>(res.mean.recall) : std::nullopt);
      } catch (const std::exception& e) {
        throw DataError("transfer " + tn + " -> " + en + ": " + e.what());
      }
    }
    tm.recall.push_back(std::move(row));
  }
  return tm;
}

}  // namespace bikesite
