#pragma once

// Edge probabilities, the triple gate, line assembly and rasterization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "rowgraph/linegraph/graph.hpp"
#include "rowgraph/net/model.hpp"

namespace rowgraph::linegraph {

// Mean association weight along the edge, taken for the better of the two
// orientations and clamped to [0,1].
inline double displacement_probability(const Vec2& a, const Vec2& b, const Map& field,
                                       std::size_t samples = kDefaultSamples) {
  if (field.rank() != 3 || field.dim(0) != 2) throw diff::ShapeError("displacement_probability: expected [2,h,w] field");
  const auto pts = sample_edge_points(a, b, samples);
  const double len = std::hypot(b.x - a.x, b.y - a.y);
  const double ux = (b.x - a.x) / len, uy = (b.y - a.y) / len;
  double sum = 0;
  for (const auto& p : pts) sum += sample_map(field, p, 0) * ux + sample_map(field, p, 1) * uy;
  const double mean = sum / static_cast<double>(samples);
  return std::clamp(std::max(mean, -mean), 0.0, 1.0);
}

inline double pixel_probability(const Vec2& a, const Vec2& b, const Map& line_map,
                                std::size_t samples = kDefaultSamples) {
  const auto pts = sample_edge_points(a, b, samples);
  double sum = 0;
  for (const auto& p : pts) sum += std::clamp(sample_map(line_map, p, 0), 0.0, 1.0);
  return sum / static_cast<double>(samples);
}

// Feature tensor [C,L] for one edge, sampled from v_a towards v_b.
template <class T>
diff::Tensor<T> edge_features(const Map& features, const Vec2& a, const Vec2& b, std::size_t samples) {
  diff::Tensor<T> out({features.dim(0), samples});
  sample_features(features, sample_edge_points(a, b, samples), out.data().data());
  return out;
}

// Visual probabilities of many edges in batches through the head.
inline std::vector<double> visual_probabilities(const Map& features, const std::vector<std::pair<Vec2, Vec2>>& edges,
                                                const net::EcmHead<float>& head, std::size_t batch = 256) {
  diff::NoGradGuard guard;
  const std::size_t c = features.dim(0), l = head.samples();
  if (c != head.feature_channels())
    throw diff::ShapeError("visual_probability: head expects " + std::to_string(head.feature_channels()) +
                           " feature channels, got " + std::to_string(c));
  std::vector<double> out;
  out.reserve(edges.size());
  for (std::size_t start = 0; start < edges.size(); start += batch) {
    const std::size_t n = std::min(batch, edges.size() - start);
    diff::Tensor<float> x({n, c, l});
    for (std::size_t k = 0; k < n; ++k) {
      const auto& [a, b] = edges[start + k];
      sample_features(features, sample_edge_points(a, b, l), x.data().data() + k * c * l);
    }
    const auto p = head.forward(x);
    for (std::size_t k = 0; k < n; ++k) out.push_back(static_cast<double>(p.data()[k]));
  }
  return out;
}

inline double visual_probability(const Map& features, const Vec2& a, const Vec2& b, const net::EcmHead<float>& head) {
  return visual_probabilities(features, {{a, b}}, head).front();
}

// Which probabilities take part in the gate.
struct Gate {
  bool visual = true;
  bool vector = true;
  bool pixel = true;

  static Gate all() { return {}; }
  static Gate visual_only() { return {true, false, false}; }
  static Gate visual_vector() { return {true, true, false}; }
  static Gate visual_line() { return {true, false, true}; }
};

inline constexpr double kGateThreshold = 0.5;

inline bool classify_edge(const EdgeScores& s, const Gate& gate = Gate::all()) {
  if (gate.visual && !(s.visual > kGateThreshold)) return false;
  if (gate.vector && !(s.vector > kGateThreshold)) return false;
  if (gate.pixel && !(s.pixel > kGateThreshold)) return false;
  return true;
}

inline void apply_gate(PlantGraph& g, const Gate& gate) {
  for (auto& e : g.edges) e.accepted = classify_edge(e.scores, gate);
}

// Fills all three scores for every edge of the graph.
inline void score_edges(PlantGraph& g, const Map& features, const Map& line_map, const Map& field,
                        const net::EcmHead<float>& head) {
  std::vector<std::pair<Vec2, Vec2>> pairs;
  pairs.reserve(g.edges.size());
  for (const auto& e : g.edges) pairs.emplace_back(g.vertices[e.i].position, g.vertices[e.j].position);
  const auto vis = visual_probabilities(features, pairs, head);
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    auto& s = g.edges[k].scores;
    s.visual = vis[k];
    s.vector = displacement_probability(pairs[k].first, pairs[k].second, field, g.samples);
    s.pixel = pixel_probability(pairs[k].first, pairs[k].second, line_map, g.samples);
  }
}

struct DetectedLine {
  std::vector<std::size_t> vertices;  // ascending
  std::vector<std::size_t> edges;     // indices into PlantGraph::edges
  std::vector<std::size_t> polyline;  // vertices ordered along the principal axis
};

struct DetectedLines {
  std::vector<DetectedLine> lines;
};

inline DetectedLines assemble_lines(const PlantGraph& g) {
  const std::size_t n = g.vertices.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& e : g.edges)
    if (e.accepted) {
      const auto ri = find(e.i), rj = find(e.j);
      if (ri != rj) parent[std::max(ri, rj)] = std::min(ri, rj);
    }
  std::vector<long> slot(n, -1);
  DetectedLines out;
  for (std::size_t k = 0; k < g.edges.size(); ++k) {
    const auto& e = g.edges[k];
    if (!e.accepted) continue;
    const auto r = find(e.i);
    if (slot[r] < 0) {
      slot[r] = static_cast<long>(out.lines.size());
      out.lines.emplace_back();
    }
    out.lines[static_cast<std::size_t>(slot[r])].edges.push_back(k);
  }
  for (std::size_t v = 0; v < n; ++v) {
    const auto r = find(v);
    if (slot[r] >= 0) out.lines[static_cast<std::size_t>(slot[r])].vertices.push_back(v);
  }
  for (auto& line : out.lines) {
    double mx = 0, my = 0;
    for (auto v : line.vertices) {
      mx += g.vertices[v].position.x;
      my += g.vertices[v].position.y;
    }
    mx /= static_cast<double>(line.vertices.size());
    my /= static_cast<double>(line.vertices.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (auto v : line.vertices) {
      const double dx = g.vertices[v].position.x - mx, dy = g.vertices[v].position.y - my;
      sxx += dx * dx;
      sxy += dx * dy;
      syy += dy * dy;
    }
    const double angle = 0.5 * std::atan2(2 * sxy, sxx - syy);
    const double ax = std::cos(angle), ay = std::sin(angle);
    line.polyline = line.vertices;
    std::stable_sort(line.polyline.begin(), line.polyline.end(), [&](std::size_t p, std::size_t q) {
      return g.vertices[p].position.x * ax + g.vertices[p].position.y * ay <
             g.vertices[q].position.x * ax + g.vertices[q].position.y * ay;
    });
  }
  return out;
}

struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t h, std::size_t w) : height(h), width(w), data(h * w, 0) {}
  std::uint8_t& at(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }
};

// Integer line between rounded endpoints; points outside the mask are skipped.
inline void draw_segment(Mask& m, const Vec2& a, const Vec2& b) {
  long x0 = std::lround(a.x), y0 = std::lround(a.y);
  const long x1 = std::lround(b.x), y1 = std::lround(b.y);
  const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  for (;;) {
    if (x0 >= 0 && y0 >= 0 && x0 < static_cast<long>(m.width) && y0 < static_cast<long>(m.height))
      m.at(static_cast<std::size_t>(y0), static_cast<std::size_t>(x0)) = 1;
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

inline Mask rasterize_edges(const PlantGraph& g, std::size_t height, std::size_t width) {
  Mask m(height, width);
  for (const auto& e : g.edges)
    if (e.accepted) draw_segment(m, g.vertices[e.i].position, g.vertices[e.j].position);
  return m;
}

}  // namespace rowgraph::linegraph
