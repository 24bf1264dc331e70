#pragma once

// Synthetic RGB rendering of a scene: two-tone soil with low-frequency
// variation, green plant discs with per-plant size and colour jitter, smaller
// weed discs, and luminance-only pixel noise. Values lie in [0,1].

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "rowgraph/diff/tensor.hpp"
#include "rowgraph/fieldgen/scene.hpp"

namespace rowgraph::fieldgen {

using Image = diff::Tensor<float>;  // [3,H,W]

inline constexpr std::array<double, 3> kSoilDark{0.30, 0.22, 0.16};
inline constexpr std::array<double, 3> kSoilLight{0.55, 0.45, 0.35};
inline constexpr std::array<double, 3> kPlantGreen{0.18, 0.50, 0.12};
inline constexpr std::array<double, 3> kWeedGreen{0.28, 0.52, 0.20};

// g - (r + b) / 2
inline double greenness(double r, double g, double b) { return g - 0.5 * (r + b); }

// Upper bound of greenness over the soil palette (both tones and any mix of them).
inline double soil_max_greenness() {
  return std::max(greenness(kSoilDark[0], kSoilDark[1], kSoilDark[2]),
                  greenness(kSoilLight[0], kSoilLight[1], kSoilLight[2]));
}

namespace detail {

// Bilinearly interpolated value noise in [0,1] on a coarse lattice.
class ValueNoise {
 public:
  ValueNoise(std::size_t width, std::size_t height, double cell, std::mt19937_64& rng)
      : cell_(cell),
        gw_(static_cast<std::size_t>(static_cast<double>(width) / cell) + 2),
        gh_(static_cast<std::size_t>(static_cast<double>(height) / cell) + 2),
        lattice_(gw_ * gh_) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& v : lattice_) v = unit(rng);
  }

  double at(double x, double y) const {
    const double gx = x / cell_, gy = y / cell_;
    const auto x0 = static_cast<std::size_t>(gx), y0 = static_cast<std::size_t>(gy);
    const double fx = gx - static_cast<double>(x0), fy = gy - static_cast<double>(y0);
    const double sx = fx * fx * (3 - 2 * fx), sy = fy * fy * (3 - 2 * fy);
    auto v = [&](std::size_t ix, std::size_t iy) { return lattice_[iy * gw_ + ix]; };
    const double top = v(x0, y0) * (1 - sx) + v(x0 + 1, y0) * sx;
    const double bot = v(x0, y0 + 1) * (1 - sx) + v(x0 + 1, y0 + 1) * sx;
    return top * (1 - sy) + bot * sy;
  }

 private:
  double cell_;
  std::size_t gw_, gh_;
  std::vector<double> lattice_;
};

inline void stamp_disc(Image& img, const Point& c, double radius, const std::array<double, 3>& color) {
  const auto height = static_cast<long>(img.dim(1));
  const auto width = static_cast<long>(img.dim(2));
  const long x0 = std::max(0L, static_cast<long>(std::floor(c.x - radius - 1)));
  const long x1 = std::min(width - 1, static_cast<long>(std::ceil(c.x + radius + 1)));
  const long y0 = std::max(0L, static_cast<long>(std::floor(c.y - radius - 1)));
  const long y1 = std::min(height - 1, static_cast<long>(std::ceil(c.y + radius + 1)));
  auto data = img.data();
  const std::size_t plane = static_cast<std::size_t>(width * height);
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double d = std::hypot(static_cast<double>(x) - c.x, static_cast<double>(y) - c.y);
      const double alpha = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      if (alpha <= 0) continue;
      const double shade = 1.1 - 0.3 * std::min(d / radius, 1.0);
      const std::size_t idx = static_cast<std::size_t>(y * width + x);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        float& px = data[ch * plane + idx];
        px = static_cast<float>((1 - alpha) * px + alpha * std::clamp(color[ch] * shade, 0.0, 1.0));
      }
    }
  }
}

}  // namespace detail

inline Image render_rgb(const PlantationScene& scene, const GenConfig& config) {
  std::mt19937_64 rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t width = scene.width, height = scene.height;
  Image img({3, height, width});
  auto data = img.data();
  const std::size_t plane = width * height;

  detail::ValueNoise tone(width, height, 24.0, rng);
  detail::ValueNoise grain(width, height, 5.0, rng);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double t = std::clamp(
          0.7 * tone.at(static_cast<double>(x), static_cast<double>(y)) +
              0.3 * grain.at(static_cast<double>(x), static_cast<double>(y)),
          0.0, 1.0);
      for (std::size_t ch = 0; ch < 3; ++ch)
        data[ch * plane + y * width + x] =
            static_cast<float>((1 - t) * kSoilDark[ch] + t * kSoilLight[ch]);
    }
  }

  for (const auto& w : scene.weeds) {
    const double r = 0.5 * config.plant_radius_px * (1 + 0.3 * normal(rng));
    detail::stamp_disc(img, w, std::max(r, 0.7), kWeedGreen);
  }
  for (const auto& line : scene.lines) {
    for (const auto& p : line.plants) {
      const double r = config.plant_radius_px * (1 + config.plant_radius_jitter * normal(rng));
      std::array<double, 3> color = kPlantGreen;
      for (auto& c : color) c = std::clamp(c + 0.04 * normal(rng), 0.0, 1.0);
      // keep every plant clearly green
      color[1] = std::max(color[1], std::max(color[0], color[2]) + 0.15);
      detail::stamp_disc(img, p, std::max(r, 1.0), color);
    }
  }

  if (config.noise_level > 0) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double n = config.noise_level * normal(rng);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        float& px = data[ch * plane + i];
        px = static_cast<float>(std::clamp(static_cast<double>(px) + n, 0.0, 1.0));
      }
    }
  }
  // 8-bit levels, so an image read back from disk is the same tensor
  for (auto& px : data)
    px = static_cast<float>(std::lround(std::clamp(static_cast<double>(px), 0.0, 1.0) * 255.0)) / 255.0f;
  return img;
}

}  // namespace rowgraph::fieldgen
