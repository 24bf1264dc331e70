#pragma once

// Plant graph construction: peak detection on the final plant confidence
// map, the complete graph over detected plants, and edge point sampling.
// Vertices live in full-resolution image coordinates; every map is sampled at
// halved coordinates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "rowgraph/diff/tensor.hpp"

namespace rowgraph::linegraph {

using Map = diff::Tensor<float>;  // [C,h,w]

inline constexpr double kPeakThreshold = 0.15;  // tau
inline constexpr double kPeakMinDistance = 1.0;  // delta, image pixels
inline constexpr std::size_t kDefaultSamples = 16;

struct Vec2 {
  double x = 0;
  double y = 0;
  bool operator==(const Vec2&) const = default;
};

struct Vertex {
  Vec2 position;
  double confidence = 0;
};

struct EdgeScores {
  double visual = 0;
  double vector = 0;
  double pixel = 0;
};

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;  // i < j
  EdgeScores scores;
  bool accepted = false;
};

struct PlantGraph {
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;
  std::size_t samples = kDefaultSamples;
  double tau = kPeakThreshold;
  double delta = kPeakMinDistance;
};

// Strict 4-neighbourhood maxima above tau, strongest first; a candidate
// closer than delta (image pixels) to an already kept peak is dropped.
// Out-of-bounds neighbours impose no constraint.
inline std::vector<Vertex> detect_peaks(const Map& map, double tau = kPeakThreshold,
                                        double delta = kPeakMinDistance) {
  if (map.rank() != 3) throw diff::ShapeError("detect_peaks: expected [1,h,w] map");
  const std::size_t h = map.dim(1), w = map.dim(2);
  const auto v = map.data();
  struct Candidate {
    float value;
    std::size_t y, x;
  };
  std::vector<Candidate> cands;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const float c = v[y * w + x];
      if (!(static_cast<double>(c) > tau)) continue;
      if (x > 0 && !(c > v[y * w + x - 1])) continue;
      if (x + 1 < w && !(c > v[y * w + x + 1])) continue;
      if (y > 0 && !(c > v[(y - 1) * w + x])) continue;
      if (y + 1 < h && !(c > v[(y + 1) * w + x])) continue;
      cands.push_back({c, y, x});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.value > b.value; });
  std::vector<Vertex> kept;
  for (const auto& c : cands) {
    const Vec2 p{2.0 * static_cast<double>(c.x), 2.0 * static_cast<double>(c.y)};
    const bool close = std::any_of(kept.begin(), kept.end(), [&](const Vertex& k) {
      return std::hypot(k.position.x - p.x, k.position.y - p.y) < delta;
    });
    if (!close) kept.push_back({p, static_cast<double>(c.value)});
  }
  return kept;
}

inline PlantGraph build_complete_graph(std::vector<Vertex> vertices) {
  PlantGraph g;
  g.vertices = std::move(vertices);
  const std::size_t n = g.vertices.size();
  if (n > 1) g.edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) g.edges.push_back({i, j, {}, false});
  return g;
}

// L interior points a + l/(L+1) (b - a), l = 1..L; endpoints are excluded.
inline std::vector<Vec2> sample_edge_points(const Vec2& a, const Vec2& b, std::size_t samples = kDefaultSamples) {
  if (samples < 1) throw std::invalid_argument("sample_edge_points: need at least one sample");
  if (a == b) throw std::invalid_argument("sample_edge_points: coincident endpoints");
  std::vector<Vec2> pts(samples);
  const double denom = static_cast<double>(samples + 1);
  for (std::size_t l = 1; l <= samples; ++l) {
    const double t = static_cast<double>(l) / denom;
    pts[l - 1] = {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
  }
  return pts;
}

// Bilinear value of `channel` at image point p (coordinates halved, clamped
// to the border of the half-resolution grid).
inline double sample_map(const Map& map, const Vec2& p, std::size_t channel = 0) {
  const std::size_t h = map.dim(1), w = map.dim(2);
  const double hx = std::clamp(p.x / 2, 0.0, static_cast<double>(w - 1));
  const double hy = std::clamp(p.y / 2, 0.0, static_cast<double>(h - 1));
  const auto x0 = static_cast<std::size_t>(hx), y0 = static_cast<std::size_t>(hy);
  const std::size_t x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = hx - static_cast<double>(x0), fy = hy - static_cast<double>(y0);
  const auto d = map.data();
  const std::size_t base = channel * h * w;
  const double top = (1 - fx) * d[base + y0 * w + x0] + fx * d[base + y0 * w + x1];
  const double bot = (1 - fx) * d[base + y1 * w + x0] + fx * d[base + y1 * w + x1];
  return (1 - fy) * top + fy * bot;
}

// All channels of `map` at each point, laid out [C, points] (channel-major).
template <class T>
void sample_features(const Map& map, const std::vector<Vec2>& pts, T* out) {
  const std::size_t c = map.dim(0), n = pts.size();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t l = 0; l < n; ++l) out[ch * n + l] = static_cast<T>(sample_map(map, pts[l], ch));
}

}  // namespace rowgraph::linegraph
