#pragma once

// End-to-end detection on one patch and evaluation over patch sets.

#include <vector>

#include "rowgraph/eval/metrics.hpp"
#include "rowgraph/fieldgen/dataset.hpp"
#include "rowgraph/linegraph/classify.hpp"
#include "rowgraph/net/model.hpp"

namespace rowgraph {

struct DetectOptions {
  double tau = linegraph::kPeakThreshold;
  double delta = linegraph::kPeakMinDistance;
  linegraph::Gate gate = linegraph::Gate::all();
};

// Feature map and final-stage estimates of one image.
struct Estimates {
  linegraph::Map features;
  linegraph::Map plant;
  linegraph::Map line;
  linegraph::Map field;
};

inline Estimates estimate(const net::KemModel<float>& model, const diff::Tensor<float>& image) {
  diff::NoGradGuard guard;
  auto out = model.forward(image);
  const auto& last = out.stages.back();
  return {out.features, last.plant, last.line, last.vectors};
}

struct Detection {
  linegraph::PlantGraph graph;
  linegraph::DetectedLines lines;
};

// Peaks, complete graph and scores; no gate applied yet.
inline linegraph::PlantGraph scored_graph(const Estimates& est, const net::EcmHead<float>& head,
                                          const DetectOptions& opt) {
  auto g = linegraph::build_complete_graph(linegraph::detect_peaks(est.plant, opt.tau, opt.delta));
  g.samples = head.samples();
  g.tau = opt.tau;
  g.delta = opt.delta;
  linegraph::score_edges(g, est.features, est.line, est.field, head);
  return g;
}

inline Detection finish(linegraph::PlantGraph g, const linegraph::Gate& gate) {
  linegraph::apply_gate(g, gate);
  Detection d;
  d.lines = linegraph::assemble_lines(g);
  d.graph = std::move(g);
  return d;
}

inline Detection detect(const net::KemModel<float>& model, const net::EcmHead<float>& head,
                        const diff::Tensor<float>& image, const DetectOptions& opt = {}) {
  return finish(scored_graph(estimate(model, image), head, opt), opt.gate);
}

// Consecutive-plant segments of every labeled line, rasterized.
inline linegraph::Mask label_line_mask(const fieldgen::PlantationScene& scene) {
  linegraph::Mask m(scene.height, scene.width);
  for (const auto& line : scene.lines) {
    const auto& p = line.plants;
    if (p.size() == 1) linegraph::draw_segment(m, {p[0].x, p[0].y}, {p[0].x, p[0].y});
    for (std::size_t i = 1; i < p.size(); ++i)
      linegraph::draw_segment(m, {p[i - 1].x, p[i - 1].y}, {p[i].x, p[i].y});
  }
  return m;
}

inline std::vector<linegraph::Vec2> label_plants(const fieldgen::PlantationScene& scene) {
  std::vector<linegraph::Vec2> out;
  for (const auto& p : scene.plants()) out.push_back({p.x, p.y});
  return out;
}

inline std::vector<linegraph::Vec2> detected_plants(const linegraph::PlantGraph& g) {
  std::vector<linegraph::Vec2> out;
  for (const auto& v : g.vertices) out.push_back(v.position);
  return out;
}

struct EvalRadii {
  double plant = eval::kPlantRadius;
  double line = eval::kLinePixelRadius;
};

struct PatchEvaluation {
  eval::MatchResult plants;
  eval::PatchCounts line;
};

inline PatchEvaluation evaluate_detection(const Detection& d, const fieldgen::PlantationScene& scene,
                                          const EvalRadii& radii = {}) {
  PatchEvaluation e;
  e.plants = eval::match_plants(detected_plants(d.graph), label_plants(scene), radii.plant);
  e.line = eval::line_counts(linegraph::rasterize_edges(d.graph, scene.height, scene.width),
                             label_line_mask(scene), radii.line);
  return e;
}

struct SetEvaluation {
  eval::MetricsReport plants;
  eval::MetricsReport lines;
};

inline SetEvaluation summarize(const std::vector<PatchEvaluation>& per_patch) {
  std::vector<eval::MatchResult> m;
  std::vector<eval::PatchCounts> l;
  for (const auto& e : per_patch) {
    m.push_back(e.plants);
    l.push_back(e.line);
  }
  return {eval::plant_metrics(m), eval::aggregate(l)};
}

}  // namespace rowgraph
