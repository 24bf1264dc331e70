#pragma once

// Detection overlay on the RGB patch: accepted edges in yellow, matched
// detections as blue dots, unmatched detections as red dots, and missed
// labeled plants as red circles of the match radius. Without labels every
// detection is drawn blue.

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "rowgraph/eval/metrics.hpp"
#include "rowgraph/fieldgen/render.hpp"
#include "rowgraph/linegraph/classify.hpp"

namespace rowgraph {

using Rgb = std::array<float, 3>;
inline constexpr Rgb kEdgeColour{1.0f, 0.9f, 0.1f};
inline constexpr Rgb kMatchColour{0.1f, 0.3f, 1.0f};
inline constexpr Rgb kMissColour{1.0f, 0.1f, 0.1f};

inline void put_pixel(fieldgen::Image& img, long x, long y, const Rgb& c) {
  const long h = static_cast<long>(img.dim(1)), w = static_cast<long>(img.dim(2));
  if (x < 0 || y < 0 || x >= w || y >= h) return;
  for (std::size_t ch = 0; ch < 3; ++ch)
    img.data()[(ch * static_cast<std::size_t>(h) + static_cast<std::size_t>(y)) * static_cast<std::size_t>(w) +
               static_cast<std::size_t>(x)] = c[ch];
}

inline void draw_dot(fieldgen::Image& img, const linegraph::Vec2& p, const Rgb& c) {
  const long cx = std::lround(p.x), cy = std::lround(p.y);
  for (long dy = -1; dy <= 1; ++dy)
    for (long dx = -1; dx <= 1; ++dx) put_pixel(img, cx + dx, cy + dy, c);
}

inline void draw_circle(fieldgen::Image& img, const linegraph::Vec2& p, double radius, const Rgb& c) {
  const int steps = std::max(16, static_cast<int>(std::ceil(8 * radius)));
  for (int k = 0; k < steps; ++k) {
    const double a = 2 * 3.14159265358979323846 * k / steps;
    put_pixel(img, std::lround(p.x + radius * std::cos(a)), std::lround(p.y + radius * std::sin(a)), c);
  }
}

inline fieldgen::Image render_overlay(const fieldgen::Image& image, const linegraph::PlantGraph& g,
                                      const std::optional<std::vector<linegraph::Vec2>>& labels,
                                      double plant_radius = eval::kPlantRadius) {
  fieldgen::Image out = image.detach();
  linegraph::Mask edges(image.dim(1), image.dim(2));
  for (const auto& e : g.edges)
    if (e.accepted) linegraph::draw_segment(edges, g.vertices[e.i].position, g.vertices[e.j].position);
  for (std::size_t y = 0; y < edges.height; ++y)
    for (std::size_t x = 0; x < edges.width; ++x)
      if (edges.at(y, x)) put_pixel(out, static_cast<long>(x), static_cast<long>(y), kEdgeColour);

  std::vector<linegraph::Vec2> pred;
  for (const auto& v : g.vertices) pred.push_back(v.position);
  if (!labels) {
    for (const auto& p : pred) draw_dot(out, p, kMatchColour);
    return out;
  }
  const auto m = eval::match_plants(pred, *labels, plant_radius);
  std::vector<bool> pred_hit(pred.size(), false), label_hit(labels->size(), false);
  for (const auto& pair : m.pairs) {
    pred_hit[pair.predicted] = true;
    label_hit[pair.labeled] = true;
  }
  for (std::size_t j = 0; j < labels->size(); ++j)
    if (!label_hit[j]) draw_circle(out, (*labels)[j], plant_radius, kMissColour);
  for (std::size_t i = 0; i < pred.size(); ++i) draw_dot(out, pred[i], pred_hit[i] ? kMatchColour : kMissColour);
  return out;
}

}  // namespace rowgraph
