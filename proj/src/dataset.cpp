#include "bikesite/dataset.hpp"

#include <cmath>
#include <unordered_set>

#include "bikesite/errors.hpp"
#include "bikesite/random.hpp"

namespace bikesite {

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::vector<LabeledRegion> label_regions(const EmbeddingMatrix& matrix,
                                         const std::vector<StationRecord>& stations,
                                         std::vector<std::string>* warnings) {
  std::vector<LabeledRegion> out;
  out.reserve(matrix.rows());
  for (std::size_t i = 0; i < matrix.rows(); ++i) {
    auto row = matrix.row(i);
    out.push_back({matrix.cells()[i], std::vector<double>(row.begin(), row.end()), 0});
  }
  if (matrix.empty()) return out;
  const int res = matrix.config().resolution;
  for (const auto& s : stations) {
    const CellId cell = cell_at(s.location, res);
    if (auto idx = matrix.index_of(cell)) {
      out[*idx].label = 1;
    } else if (warnings) {
      warnings->push_back("station " + s.station_id + " lies outside all cells of '" +
                          matrix.city_name() + "', ignored");
    }
  }
  return out;
}

std::size_t count_positives(const std::vector<LabeledRegion>& regions) noexcept {
  std::size_t n = 0;
  for (const auto& r : regions) n += r.label == 1;
  return n;
}

void SamplingSpec::validate() const {
  if (!(ratio >= kMinRatio && ratio <= kMaxRatio)) {
    throw ConfigError("imbalance ratio " + std::to_string(ratio) + " outside [1, 5]");
  }
}

std::size_t negative_count(std::size_t positives, double ratio) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(positives) + 0.5));
}

namespace {

void split_classes(const std::vector<LabeledRegion>& labeled, std::vector<std::size_t>& pos,
                   std::vector<std::size_t>& neg) {
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    (labeled[i].label == 1 ? pos : neg).push_back(i);
  }
}

std::vector<std::size_t> sample_indices(const std::vector<LabeledRegion>& labeled,
                                        const SamplingSpec& spec, std::size_t* positives) {
  spec.validate();
  std::vector<std::size_t> pos, neg;
  split_classes(labeled, pos, neg);
  if (pos.empty()) throw DataError("cannot sample training data: no positive regions");
  const std::size_t want = negative_count(pos.size(), spec.ratio);
  if (neg.size() < want) {
    throw DataError("not enough negative regions: ratio " + format_double(spec.ratio) +
                    " requires " + std::to_string(want) + ", available " +
                    std::to_string(neg.size()));
  }
  Rng rng(spec.seed);
  rng.partial_shuffle(neg, want);
  neg.resize(want);
  *positives = pos.size();
  pos.insert(pos.end(), neg.begin(), neg.end());
  return pos;
}

}  // namespace

std::vector<LabeledRegion> sample_training(const std::vector<LabeledRegion>& labeled,
                                           const SamplingSpec& spec) {
  std::size_t npos = 0;
  std::vector<LabeledRegion> out;
  for (auto i : sample_indices(labeled, spec, &npos)) out.push_back(labeled[i]);
  return out;
}

ExperimentSplit build_same_city_split(const std::vector<LabeledRegion>& labeled,
                                      const std::string& city, const SamplingSpec& spec,
                                      double holdout) {
  if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("holdout fraction must lie in (0, 1)");
  std::size_t npos = 0;
  auto idx = sample_indices(labeled, spec, &npos);
  std::vector<std::size_t> pos(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(npos));
  std::vector<std::size_t> neg(idx.begin() + static_cast<std::ptrdiff_t>(npos), idx.end());

  // Independent stream for the hold-out so it does not alias the negative draw.
  Rng rng(mix_seed(spec.seed));
  ExperimentSplit split;
  split.train_city = city;
  split.eval_city = city;
  split.spec = spec;
  split.mode = SplitMode::same_city;
  for (auto* cls : {&pos, &neg}) {
    const auto n_eval = static_cast<std::size_t>(std::floor(holdout * static_cast<double>(cls->size()) + 0.5));
    rng.partial_shuffle(*cls, n_eval);
    for (std::size_t i = 0; i < cls->size(); ++i) {
      (i < n_eval ? split.eval : split.train).push_back(labeled[(*cls)[i]]);
    }
  }
  std::size_t train_pos = 0;
  for (const auto& r : split.train) train_pos += r.label == 1;
  if (train_pos == 0 || train_pos == split.train.size()) {
    throw DataError("same-city split of '" + city + "' leaves a single class for training");
  }
  return split;
}

void require_same_feature_space(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (!(a.config() == b.config())) {
    throw ConfigError("embedding config mismatch: '" + a.city_name() + "' has " +
                      a.config().fingerprint() + ", '" + b.city_name() + "' has " +
                      b.config().fingerprint());
  }
  if (a.columns() != b.columns()) {
    throw ConfigError("embedding columns differ between '" + a.city_name() + "' and '" +
                      b.city_name() + "'");
  }
}

ExperimentSplit build_transfer_split(const std::vector<LabeledRegion>& train_labeled,
                                     const std::string& train_city,
                                     const std::vector<LabeledRegion>& eval_labeled,
                                     const std::string& eval_city, const SamplingSpec& spec) {
  if (!train_labeled.empty() && !eval_labeled.empty() &&
      train_labeled.front().features.size() != eval_labeled.front().features.size()) {
    throw ConfigError("feature dimension differs between '" + train_city + "' and '" +
                      eval_city + "'");
  }
  ExperimentSplit split;
  split.train = sample_training(train_labeled, spec);
  split.eval = eval_labeled;
  split.train_city = train_city;
  split.eval_city = eval_city;
  split.spec = spec;
  split.mode = SplitMode::transfer;
  return split;
}

ExperimentSplit build_transfer_split(const EmbeddingMatrix& train_matrix,
                                     const std::vector<StationRecord>& train_stations,
                                     const EmbeddingMatrix& eval_matrix,
                                     const std::vector<StationRecord>& eval_stations,
                                     const SamplingSpec& spec) {
  require_same_feature_space(train_matrix, eval_matrix);
  return build_transfer_split(label_regions(train_matrix, train_stations), train_matrix.city_name(),
                              label_regions(eval_matrix, eval_stations), eval_matrix.city_name(),
                              spec);
}

std::string split_to_csv(const ExperimentSplit& split) {
  std::string out = "h3,label,role\n";
  for (const auto& r : split.train) out += r.cell.to_string() + "," + std::to_string(r.label) + ",train\n";
  for (const auto& r : split.eval) out += r.cell.to_string() + "," + std::to_string(r.label) + ",eval\n";
  return out;
}

}  // namespace bikesite
