#pragma once

// Procedural plantation fields: rows laid out as smooth polylines, plants
// spaced along them with jitter and random gaps, plus unlabeled weeds.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace rowgraph::fieldgen {

struct Point {
  double x = 0;
  double y = 0;
  bool operator==(const Point&) const = default;
};

struct PlantationLine {
  int id = 0;
  std::vector<Point> plants;  // traversal order
};

struct PlantationScene {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<PlantationLine> lines;
  std::vector<Point> weeds;  // rendered, never labeled as plants
  double gsd_cm_per_px = 2.0;  // informational only

  std::size_t plant_count() const {
    std::size_t n = 0;
    for (const auto& l : lines) n += l.plants.size();
    return n;
  }

  std::vector<Point> plants() const {
    std::vector<Point> all;
    for (const auto& l : lines) all.insert(all.end(), l.plants.begin(), l.plants.end());
    return all;
  }
};

struct GenConfig {
  std::size_t width = 256;
  std::size_t height = 256;
  std::size_t rows = 0;            // 0: fill the field with rows
  std::size_t plants_per_row = 0;  // 0: fill each row across the field
  double row_spacing_px = 13.0;
  double row_spacing_jitter = 0.5;   // std-dev in px
  double plant_spacing_px = 8.0;
  double plant_spacing_jitter = 1.0;  // std-dev in px
  double lateral_jitter_px = 0.5;     // std-dev of off-row displacement
  double curvature = 0.0;             // max bend amplitude in px
  double bend_wavelength_px = 400.0;
  double row_angle_deg = 0.0;         // mean row direction, 0 = along +x
  double row_angle_jitter_deg = 0.0;  // uniform +- range
  double gap_probability = 0.05;
  double weed_density = 2.0;          // weeds per 10^4 px^2
  double plant_radius_px = 3.0;
  double plant_radius_jitter = 0.2;   // relative
  double noise_level = 0.03;
  std::uint64_t seed = 1;

  void validate() const {
    auto prob = [](double p) { return p >= 0 && p <= 1; };
    if (width == 0 || height == 0) throw std::invalid_argument("gen: empty field");
    if (!(row_spacing_px > 0) || !(plant_spacing_px > 0))
      throw std::invalid_argument("gen: spacings must be positive");
    if (!prob(gap_probability)) throw std::invalid_argument("gen: gap_probability must be in [0,1]");
    if (weed_density < 0 || noise_level < 0 || plant_radius_px <= 0)
      throw std::invalid_argument("gen: densities, noise and radius must be non-negative");
    if (row_spacing_jitter < 0 || plant_spacing_jitter < 0 || lateral_jitter_px < 0 || curvature < 0)
      throw std::invalid_argument("gen: jitters must be non-negative");
  }
};

struct EmptySceneError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool inside(const Point& p, std::size_t width, std::size_t height) {
  return p.x >= 0 && p.y >= 0 && p.x <= static_cast<double>(width) - 1 &&
         p.y <= static_cast<double>(height) - 1;
}

// Row direction is kept in (-90, 90] degrees so that traversal order (and the
// displacement-field direction) always has a non-negative x component.
inline PlantationScene generate_scene(const GenConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double angle = config.row_angle_deg +
                 config.row_angle_jitter_deg * (2 * unit(rng) - 1);
  while (angle <= -90) angle += 180;
  while (angle > 90) angle -= 180;
  const double rad = angle * std::numbers::pi / 180.0;
  const Point dir{std::cos(rad), std::sin(rad)};
  const Point normal_dir{-dir.y, dir.x};
  const Point center{(static_cast<double>(config.width) - 1) / 2,
                     (static_cast<double>(config.height) - 1) / 2};
  const double half_diag =
      0.5 * std::hypot(static_cast<double>(config.width), static_cast<double>(config.height));

  std::size_t rows = config.rows;
  if (rows == 0) rows = static_cast<std::size_t>(std::ceil(2 * half_diag / config.row_spacing_px)) + 1;

  PlantationScene scene;
  scene.width = config.width;
  scene.height = config.height;

  const double row_offset0 = -0.5 * static_cast<double>(rows - 1) * config.row_spacing_px +
                             (config.rows == 0 ? config.row_spacing_px * (unit(rng) - 0.5) : 0.0);
  int next_id = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double offset = row_offset0 + static_cast<double>(r) * config.row_spacing_px +
                          config.row_spacing_jitter * normal(rng);
    const double phase = 2 * std::numbers::pi * unit(rng);

    double s;
    std::size_t count;
    if (config.plants_per_row > 0) {
      count = config.plants_per_row;
      s = -0.5 * static_cast<double>(count - 1) * config.plant_spacing_px;
    } else {
      count = static_cast<std::size_t>(std::ceil(2 * half_diag / config.plant_spacing_px)) + 2;
      s = -half_diag - config.plant_spacing_px * unit(rng);
    }

    PlantationLine line;
    line.id = next_id;
    for (std::size_t i = 0; i < count; ++i) {
      if (i > 0) {
        const double step = config.plant_spacing_px + config.plant_spacing_jitter * normal(rng);
        s += std::max(step, 0.3 * config.plant_spacing_px);
      }
      const double bend =
          config.curvature * std::sin(2 * std::numbers::pi * s / config.bend_wavelength_px + phase);
      const double lateral = offset + bend + config.lateral_jitter_px * normal(rng);
      const Point p{center.x + s * dir.x + lateral * normal_dir.x,
                    center.y + s * dir.y + lateral * normal_dir.y};
      const bool dropped = unit(rng) < config.gap_probability;
      if (dropped || !inside(p, config.width, config.height)) continue;
      line.plants.push_back(p);
    }
    if (!line.plants.empty()) {
      scene.lines.push_back(std::move(line));
      ++next_id;
    }
  }

  const double area = static_cast<double>(config.width * config.height);
  std::poisson_distribution<int> weeds(config.weed_density * area / 1e4);
  const int n_weeds = config.weed_density > 0 ? weeds(rng) : 0;
  for (int i = 0; i < n_weeds; ++i) {
    scene.weeds.push_back({unit(rng) * static_cast<double>(config.width - 1),
                           unit(rng) * static_cast<double>(config.height - 1)});
  }

  if (scene.plant_count() == 0) throw EmptySceneError("gen: configuration produced no plants");
  return scene;
}

}  // namespace rowgraph::fieldgen
