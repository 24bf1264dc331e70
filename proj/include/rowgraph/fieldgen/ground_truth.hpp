#pragma once

// Training targets at half the image resolution. A half-resolution pixel
// (i, j) sits at image coordinate (2i, 2j); plant and segment geometry is
// halved before comparison.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "rowgraph/diff/tensor.hpp"
#include "rowgraph/fieldgen/scene.hpp"

namespace rowgraph::fieldgen {

using Map = diff::Tensor<float>;  // [1,h,w] confidence map or [2,h,w] vector field

inline constexpr double kSigmaMax = 3.0;
inline constexpr double kSigmaMin = 1.0;
inline constexpr double kDisplacementBand = 2.0;  // half-resolution pixels

// Equally spaced from sigma_max down to sigma_min; a single stage uses sigma_max.
inline std::vector<double> sigma_schedule(std::size_t stages, double sigma_max = kSigmaMax,
                                          double sigma_min = kSigmaMin) {
  if (stages == 0) throw std::invalid_argument("sigma_schedule: stage count must be >= 1");
  if (stages == 1) return {sigma_max};
  std::vector<double> out(stages);
  const double step = (sigma_max - sigma_min) / static_cast<double>(stages - 1);
  for (std::size_t t = 0; t < stages; ++t) out[t] = sigma_max - step * static_cast<double>(t);
  out.back() = sigma_min;
  return out;
}

struct Segment {
  Point a, b;  // half-resolution coordinates, a precedes b in traversal order
  int line_id = 0;
};

// Consecutive-plant segments in half-resolution coordinates. With
// `include_points`, single-plant lines contribute a zero-length segment.
inline std::vector<Segment> half_res_segments(const PlantationScene& scene, bool include_points) {
  std::vector<Segment> segs;
  for (const auto& line : scene.lines) {
    const auto& p = line.plants;
    if (p.size() == 1 && include_points) {
      const Point h{p[0].x / 2, p[0].y / 2};
      segs.push_back({h, h, line.id});
    }
    for (std::size_t i = 1; i < p.size(); ++i)
      segs.push_back({{p[i - 1].x / 2, p[i - 1].y / 2}, {p[i].x / 2, p[i].y / 2}, line.id});
  }
  return segs;
}

inline double point_segment_distance(const Point& p, const Point& a, const Point& b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = 0;
  if (len2 > 0) t = std::clamp(((p.x - a.x) * vx + (p.y - a.y) * vy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * vx), p.y - (a.y + t * vy));
}

inline std::size_t half_extent(std::size_t full) { return full / 2; }

// Buckets segments by the grid cells their bounding boxes touch. nearest()
// searches square rings of cells outward and stops once the ring lies farther
// away than the best hit, so results equal a scan over every segment
// (ties go to the lowest index).
class SegmentGrid {
 public:
  SegmentGrid(const std::vector<Segment>& segs, std::size_t w, std::size_t h, double cell = 8.0)
      : segs_(segs), cell_(cell) {
    nx_ = static_cast<long>(std::ceil(static_cast<double>(w) / cell)) + 1;
    ny_ = static_cast<long>(std::ceil(static_cast<double>(h) / cell)) + 1;
    cells_.resize(static_cast<std::size_t>(nx_ * ny_));
    for (std::size_t i = 0; i < segs.size(); ++i) {
      const auto& s = segs[i];
      const long x0 = clampx(std::min(s.a.x, s.b.x)), x1 = clampx(std::max(s.a.x, s.b.x));
      const long y0 = clampy(std::min(s.a.y, s.b.y)), y1 = clampy(std::max(s.a.y, s.b.y));
      for (long y = y0; y <= y1; ++y)
        for (long x = x0; x <= x1; ++x) cells_[static_cast<std::size_t>(y * nx_ + x)].push_back(i);
    }
  }

  struct Hit {
    double distance = std::numeric_limits<double>::infinity();
    const Segment* segment = nullptr;
  };

  // Point p must lie inside the grid's extent. With `squared`, dist returns
  // squared distances.
  template <class Dist>
  Hit nearest(const Point& p, Dist&& dist, bool squared = false) const {
    Hit best;
    std::size_t best_index = 0;
    const long cx = clampx(p.x), cy = clampy(p.y);
    const long rings = std::max(nx_, ny_);
    for (long k = 0; k <= rings; ++k) {
      // anything in ring k or beyond is at least (k-1) cells away
      const double reach = static_cast<double>(k - 1) * cell_;
      if (best.segment && k > 0 && best.distance < (squared ? reach * reach : reach)) break;
      for (long y = cy - k; y <= cy + k; ++y) {
        if (y < 0 || y >= ny_) continue;
        const bool edge_row = y == cy - k || y == cy + k;
        for (long x = cx - k; x <= cx + k; x += (edge_row || k == 0) ? 1 : 2 * k) {
          if (x < 0 || x >= nx_) continue;
          for (auto i : cells_[static_cast<std::size_t>(y * nx_ + x)]) {
            const double d = dist(segs_[i]);
            if (d < best.distance || (d == best.distance && best.segment && i < best_index)) {
              best = {d, &segs_[i]};
              best_index = i;
            }
          }
        }
      }
    }
    return best;
  }

 private:
  long clampx(double v) const { return std::clamp(static_cast<long>(std::floor(v / cell_)), 0L, nx_ - 1); }
  long clampy(double v) const { return std::clamp(static_cast<long>(std::floor(v / cell_)), 0L, ny_ - 1); }

  const std::vector<Segment>& segs_;
  double cell_;
  long nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

inline Map gt_plant_map(const PlantationScene& scene, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gt_plant_map: sigma must be > 0");
  const std::size_t h = half_extent(scene.height), w = half_extent(scene.width);
  Map map({1, h, w});
  auto data = map.data();
  std::vector<Segment> pts;
  for (const auto& c : scene.plants()) pts.push_back({{c.x / 2, c.y / 2}, {c.x / 2, c.y / 2}, 0});
  if (pts.empty()) return map;
  const SegmentGrid grid(pts, w, h);
  const double inv = 1.0 / (2 * sigma * sigma);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      // the largest kernel value belongs to the closest centre
      const auto hit = grid.nearest(p, [&](const Segment& s) {
        const double dx = p.x - s.a.x, dy = p.y - s.a.y;
        return dx * dx + dy * dy;
      }, true);
      data[y * w + x] = static_cast<float>(std::exp(-hit.distance * inv));
    }
  }
  return map;
}

inline Map gt_line_map(const PlantationScene& scene, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("gt_line_map: sigma must be > 0");
  const std::size_t h = half_extent(scene.height), w = half_extent(scene.width);
  Map map({1, h, w});
  auto data = map.data();
  const auto segs = half_res_segments(scene, true);
  if (segs.empty()) return map;
  const SegmentGrid grid(segs, w, h);
  const double inv = 1.0 / (2 * sigma * sigma);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      const double d = grid.nearest(p, [&](const Segment& s) { return point_segment_distance(p, s.a, s.b); }).distance;
      data[y * w + x] = static_cast<float>(std::exp(-d * d * inv));
    }
  }
  return map;
}

// Unit vectors along the nearest consecutive-plant segment for pixels within
// the band; null vectors elsewhere. Output is [2,h,w] with x then y planes.
inline Map gt_displacement_field(const PlantationScene& scene) {
  const std::size_t h = half_extent(scene.height), w = half_extent(scene.width);
  Map field({2, h, w});
  auto data = field.data();
  std::vector<Segment> segs;
  for (const auto& s : half_res_segments(scene, false))
    if (std::hypot(s.b.x - s.a.x, s.b.y - s.a.y) > 0) segs.push_back(s);
  if (segs.empty()) return field;
  const SegmentGrid grid(segs, w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Point p{static_cast<double>(x), static_cast<double>(y)};
      const auto hit = grid.nearest(p, [&](const Segment& s) { return point_segment_distance(p, s.a, s.b); });
      if (hit.distance > kDisplacementBand) continue;
      const auto* nearest = hit.segment;
      const double len = std::hypot(nearest->b.x - nearest->a.x, nearest->b.y - nearest->a.y);
      data[y * w + x] = static_cast<float>((nearest->b.x - nearest->a.x) / len);
      data[h * w + y * w + x] = static_cast<float>((nearest->b.y - nearest->a.y) / len);
    }
  }
  return field;
}

struct GroundTruthBundle {
  std::vector<Map> plant_maps;  // one per stage
  std::vector<Map> line_maps;   // one per stage
  Map displacement_field;
};

inline GroundTruthBundle make_ground_truth(const PlantationScene& scene, std::size_t stages) {
  GroundTruthBundle gt;
  for (double sigma : sigma_schedule(stages)) {
    gt.plant_maps.push_back(gt_plant_map(scene, sigma));
    gt.line_maps.push_back(gt_line_map(scene, sigma));
  }
  gt.displacement_field = gt_displacement_field(scene);
  return gt;
}

}  // namespace rowgraph::fieldgen
