#include "oracles.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#ifndef BIKESITE_FIXTURE_DIR
#error "BIKESITE_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace oracle {

namespace {

constexpr double kA = 6378137.0;
constexpr double kF = 1.0 / 298.257223563;
constexpr double kB = kA * (1 - kF);
constexpr double kDeg = std::numbers::pi / 180.0;

using Vec3 = std::array<double, 3>;

Vec3 to_vec(LatLng p) {
  const double la = p.lat * kDeg, lo = p.lon * kDeg;
  return {std::cos(la) * std::cos(lo), std::cos(la) * std::sin(lo), std::sin(la)};
}

LatLng to_latlng(const Vec3& v) {
  return {std::atan2(v[2], std::hypot(v[0], v[1])) / kDeg, std::atan2(v[1], v[0]) / kDeg};
}

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 unit(Vec3 v) {
  const double n = std::sqrt(dot(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

}  // namespace

double vincenty_m(LatLng p1, LatLng p2) {
  const double L = (p2.lon - p1.lon) * kDeg;
  const double U1 = std::atan((1 - kF) * std::tan(p1.lat * kDeg));
  const double U2 = std::atan((1 - kF) * std::tan(p2.lat * kDeg));
  const double sinU1 = std::sin(U1), cosU1 = std::cos(U1);
  const double sinU2 = std::sin(U2), cosU2 = std::cos(U2);
  double lambda = L, prev;
  double sinSigma = 0, cosSigma = 0, sigma = 0, cos2Alpha = 0, cos2SigmaM = 0;
  int iter = 0;
  do {
    const double sinL = std::sin(lambda), cosL = std::cos(lambda);
    sinSigma = std::sqrt(std::pow(cosU2 * sinL, 2) + std::pow(cosU1 * sinU2 - sinU1 * cosU2 * cosL, 2));
    if (sinSigma == 0) return 0.0;
    cosSigma = sinU1 * sinU2 + cosU1 * cosU2 * cosL;
    sigma = std::atan2(sinSigma, cosSigma);
    const double sinAlpha = cosU1 * cosU2 * sinL / sinSigma;
    cos2Alpha = 1 - sinAlpha * sinAlpha;
    cos2SigmaM = cos2Alpha != 0 ? cosSigma - 2 * sinU1 * sinU2 / cos2Alpha : 0.0;
    const double C = kF / 16 * cos2Alpha * (4 + kF * (4 - 3 * cos2Alpha));
    prev = lambda;
    lambda = L + (1 - C) * kF * sinAlpha *
                     (sigma + C * sinSigma * (cos2SigmaM + C * cosSigma * (-1 + 2 * cos2SigmaM * cos2SigmaM)));
  } while (std::abs(lambda - prev) > 1e-13 && ++iter < 200);
  const double u2 = cos2Alpha * (kA * kA - kB * kB) / (kB * kB);
  const double A = 1 + u2 / 16384 * (4096 + u2 * (-768 + u2 * (320 - 175 * u2)));
  const double B = u2 / 1024 * (256 + u2 * (-128 + u2 * (74 - 47 * u2)));
  const double dSigma =
      B * sinSigma *
      (cos2SigmaM + B / 4 *
                        (cosSigma * (-1 + 2 * cos2SigmaM * cos2SigmaM) -
                         B / 6 * cos2SigmaM * (-3 + 4 * sinSigma * sinSigma) * (-3 + 4 * cos2SigmaM * cos2SigmaM)));
  return kB * A * (sigma - dSigma);
}

double polyline_m(const std::vector<LatLng>& line) {
  double s = 0;
  for (std::size_t i = 1; i < line.size(); ++i) s += vincenty_m(line[i - 1], line[i]);
  return s;
}

namespace {

double authalic_q(double phi) {
  const double e2 = kF * (2 - kF), e = std::sqrt(e2), s = std::sin(phi);
  return (1 - e2) * (s / (1 - e2 * s * s) - 1 / (2 * e) * std::log((1 - e * s) / (1 + e * s)));
}

double ring_area(const std::vector<LatLng>& ring) {
  if (ring.size() < 4) return 0.0;
  constexpr int kSteps = 16;
  const double lon0 = ring.front().lon;
  auto unwrap = [&](double lon) {
    double d = lon - lon0;
    while (d > 180) d -= 360;
    while (d < -180) d += 360;
    return d;
  };
  std::vector<std::pair<double, double>> xy;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const double la0 = ring[i].lat, lo0 = unwrap(ring[i].lon);
    const double la1 = ring[i + 1].lat, lo1 = unwrap(ring[i + 1].lon);
    for (int s = 0; s < kSteps; ++s) {
      const double t = static_cast<double>(s) / kSteps;
      const double lat = la0 + t * (la1 - la0), lon = lo0 + t * (lo1 - lo0);
      xy.emplace_back(kA * lon * kDeg, kA * authalic_q(lat * kDeg) / 2);
    }
  }
  double twice = 0;
  for (std::size_t i = 0; i < xy.size(); ++i) {
    const auto& [x0, y0] = xy[i];
    const auto& [x1, y1] = xy[(i + 1) % xy.size()];
    twice += x0 * y1 - x1 * y0;
  }
  return std::abs(twice) / 2;
}

}  // namespace

double ellipsoid_area_m2(const bikesite::Polygon& poly) {
  double a = ring_area(poly.outer);
  for (const auto& h : poly.holes) a -= ring_area(h);
  return a;
}

LatLng offset_m(LatLng from, double bearing_deg, double meters) {
  constexpr double R = 6371008.8;
  const double d = meters / R, br = bearing_deg * kDeg;
  const double la = from.lat * kDeg, lo = from.lon * kDeg;
  const double la2 = std::asin(std::sin(la) * std::cos(d) + std::cos(la) * std::sin(d) * std::cos(br));
  const double lo2 = lo + std::atan2(std::sin(br) * std::sin(d) * std::cos(la), std::cos(d) - std::sin(la) * std::sin(la2));
  return {la2 / kDeg, lo2 / kDeg};
}

std::set<CellId> edge_neighbors(CellId cell) {
  const Vec3 c = to_vec(cell.center());
  const auto ring = cell.boundary().outer;
  std::set<CellId> out;
  for (std::size_t i = 0; i + 1 < ring.size(); ++i) {
    const Vec3 a = to_vec(ring[i]), b = to_vec(ring[i + 1]);
    const Vec3 m = unit({a[0] + b[0], a[1] + b[1], a[2] + b[2]});
    const double theta = std::acos(std::clamp(dot(c, m), -1.0, 1.0));
    const double cm = dot(c, m);
    const Vec3 t = unit({m[0] - cm * c[0], m[1] - cm * c[1], m[2] - cm * c[2]});
    // 1.5 apothems out: past the shared edge, well inside the neighbor
    const double phi = 1.5 * theta;
    const Vec3 p = {std::cos(phi) * c[0] + std::sin(phi) * t[0], std::cos(phi) * c[1] + std::sin(phi) * t[1],
                    std::cos(phi) * c[2] + std::sin(phi) * t[2]};
    const CellId n = bikesite::cell_at(to_latlng(p), cell.resolution());
    if (n != cell) out.insert(n);
  }
  return out;
}

std::vector<std::set<CellId>> bfs_rings(CellId center, int k) {
  std::vector<std::set<CellId>> rings;
  std::set<CellId> seen{center};
  std::set<CellId> frontier{center};
  for (int d = 1; d <= k; ++d) {
    std::set<CellId> next;
    for (const auto& c : frontier) {
      for (const auto& n : edge_neighbors(c)) {
        if (seen.insert(n).second) next.insert(n);
      }
    }
    rings.push_back(next);
    frontier = std::move(next);
  }
  return rings;
}

CellId random_cell(bikesite::Rng& rng, int resolution) {
  const double lat = std::asin(2 * rng.uniform() - 1) / kDeg;
  const double lon = 360 * rng.uniform() - 180;
  return bikesite::cell_at({lat, lon}, resolution);
}

std::vector<double> naive_combine(const std::vector<double>& center,
                                  const std::vector<std::vector<double>>& ring_means,
                                  bikesite::CombineMethod method) {
  using bikesite::CombineMethod;
  if (method == CombineMethod::concatenate) {
    std::vector<double> out = center;
    for (const auto& r : ring_means) {
      for (double v : r) out.push_back(v);
    }
    return out;
  }
  std::vector<const std::vector<double>*> vecs{&center};
  std::vector<double> w{1.0};
  for (std::size_t k = 1; k <= ring_means.size(); ++k) {
    vecs.push_back(&ring_means[k - 1]);
    const double kk = static_cast<double>(k);
    switch (method) {
      case CombineMethod::average: w.push_back(1.0); break;
      case CombineMethod::diminishing: w.push_back(1.0 / (kk + 1.0)); break;
      case CombineMethod::squared_diminishing: w.push_back(1.0 / ((kk + 1.0) * (kk + 1.0))); break;
      default: throw std::logic_error("unreachable");
    }
  }
  double wsum = 0;
  for (double x : w) wsum += x;
  std::vector<double> out(center.size(), 0.0);
  for (std::size_t i = 0; i < center.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < vecs.size(); ++j) s += w[j] * (*vecs[j])[i];
    out[i] = s / wsum;
  }
  return out;
}

Confusion brute_confusion(const std::vector<double>& probs, const std::vector<int>& labels, double threshold) {
  Confusion c;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool predicted = probs[i] >= threshold;
    const bool actual = labels[i] == 1;
    if (predicted && actual) c.tp++;
    else if (predicted && !actual) c.fp++;
    else if (!predicted && actual) c.fn++;
    else c.tn++;
  }
  const double total = static_cast<double>(c.tp + c.fp + c.fn + c.tn);
  c.accuracy = total > 0 ? (c.tp + c.tn) / total : 0.0;
  if (c.tp + c.fp == 0) c.precision_zero_div = true;
  else c.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn == 0) c.recall_zero_div = true;
  else c.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (c.precision + c.recall == 0) c.f1_zero_div = true;
  else c.f1 = 2 * c.precision * c.recall / (c.precision + c.recall);
  return c;
}

std::vector<CellId> distinct_cells(std::size_t n) {
  // res-11 cells are ~2150 m²; grow the box until enough cells fall inside
  double side = std::sqrt(static_cast<double>(n) * 2150.0) * 1.2 + 100.0;
  for (;;) {
    const LatLng c{45.0, 7.0};
    const LatLng sw = offset_m(offset_m(c, 180, side / 2), 270, side / 2);
    const LatLng ne = offset_m(offset_m(c, 0, side / 2), 90, side / 2);
    bikesite::BBox box{sw.lat, sw.lon, ne.lat, ne.lon};
    auto cells = bikesite::tessellate(bikesite::polygon_from_bbox(box), 11);
    if (cells.size() >= n) {
      cells.resize(n);
      return cells;
    }
    side *= 1.3;
  }
}

std::vector<bikesite::LabeledRegion> two_gaussians(std::size_t positives, std::size_t negatives,
                                                   std::size_t dim, double separation, std::uint64_t seed) {
  bikesite::Rng rng(seed);
  const auto cells = distinct_cells(positives + negatives);
  const double shift = separation / std::sqrt(static_cast<double>(dim));
  std::vector<bikesite::LabeledRegion> out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    bikesite::LabeledRegion r;
    r.cell = cells[i];
    r.label = i < positives ? 1 : 0;
    r.features.resize(dim);
    for (auto& v : r.features) v = rng.normal() + (r.label ? shift : 0.0);
    out.push_back(std::move(r));
  }
  return out;
}

std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(BIKESITE_FIXTURE_DIR) / rel; }

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("bikesite-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace oracle
