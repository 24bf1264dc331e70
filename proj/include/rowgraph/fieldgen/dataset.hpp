#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rowgraph/fieldgen/render.hpp"
#include "rowgraph/fieldgen/scene.hpp"

namespace rowgraph::fieldgen {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Patch {
  std::string id;
  PlantationScene scene;  // coordinates relative to the patch
  Image image;            // [3,P,P]
};

using PatchSet = std::vector<Patch>;

// Cuts a rendered field into non-overlapping patch_size x patch_size tiles.
// Lines keep their ids; plants falling outside a tile are dropped from it.
inline PatchSet make_patches(const PlantationScene& field, const Image& image, std::size_t patch_size,
                             const std::string& id_prefix) {
  if (patch_size == 0 || patch_size > field.width || patch_size > field.height)
    throw std::invalid_argument("make_patches: patch larger than field");
  PatchSet out;
  const std::size_t nx = field.width / patch_size, ny = field.height / patch_size;
  const std::size_t plane = field.width * field.height;
  for (std::size_t ty = 0; ty < ny; ++ty) {
    for (std::size_t tx = 0; tx < nx; ++tx) {
      const double ox = static_cast<double>(tx * patch_size);
      const double oy = static_cast<double>(ty * patch_size);
      Patch p;
      p.id = id_prefix + "_" + std::to_string(ty) + "_" + std::to_string(tx);
      p.scene.width = p.scene.height = patch_size;
      p.scene.gsd_cm_per_px = field.gsd_cm_per_px;
      for (const auto& line : field.lines) {
        PlantationLine sub{line.id, {}};
        for (const auto& pt : line.plants) {
          const Point local{pt.x - ox, pt.y - oy};
          if (inside(local, patch_size, patch_size)) sub.plants.push_back(local);
        }
        if (!sub.plants.empty()) p.scene.lines.push_back(std::move(sub));
      }
      for (const auto& wd : field.weeds) {
        const Point local{wd.x - ox, wd.y - oy};
        if (inside(local, patch_size, patch_size)) p.scene.weeds.push_back(local);
      }
      p.image = Image({3, patch_size, patch_size});
      auto dst = p.image.data();
      const auto src = image.data();
      for (std::size_t ch = 0; ch < 3; ++ch)
        for (std::size_t y = 0; y < patch_size; ++y)
          for (std::size_t x = 0; x < patch_size; ++x)
            dst[(ch * patch_size + y) * patch_size + x] =
                src[ch * plane + (ty * patch_size + y) * field.width + tx * patch_size + x];
      out.push_back(std::move(p));
    }
  }
  return out;
}

// Generates fields of 2x2 patches until `count` patches exist. Field i uses
// the seed splitmix64(config.seed + i).
inline PatchSet generate_patches(const GenConfig& config, std::size_t count, std::size_t patch_size) {
  PatchSet out;
  for (std::size_t i = 0; out.size() < count; ++i) {
    GenConfig fc = config;
    fc.width = fc.height = 2 * patch_size;
    fc.seed = splitmix64(config.seed + i);
    PlantationScene field;
    try {
      field = generate_scene(fc);
    } catch (const EmptySceneError&) {
      if (i > 16 && out.empty()) throw;
      continue;
    }
    const Image img = render_rgb(field, fc);
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "f%04zu", i);
    for (auto& p : make_patches(field, img, patch_size, prefix)) {
      if (out.size() == count) break;
      if (p.scene.plant_count() == 0) continue;
      out.push_back(std::move(p));
    }
  }
  return out;
}

struct Split {
  std::vector<std::size_t> train, val, test;
};

// Largest-remainder allocation of `total` items over the ratios; leftover
// units go to the largest fractional parts, earliest index first on ties.
inline std::array<std::size_t, 3> split_counts(std::size_t total, std::array<double, 3> ratios) {
  const double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split: ratios must sum to 1");
  for (double r : ratios)
    if (r < 0) throw std::invalid_argument("split: ratios must be non-negative");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b] + 1e-12; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[order[k % 3]];
  return counts;
}

inline Split split_dataset(std::size_t total, std::array<double, 3> ratios, std::uint64_t seed) {
  if (total < 3) throw std::invalid_argument("split: need at least 3 patches");
  const auto counts = split_counts(total, ratios);
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle.
  for (std::size_t i = total - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
  Split s;
  s.train.assign(idx.begin(), idx.begin() + static_cast<long>(counts[0]));
  s.val.assign(idx.begin() + static_cast<long>(counts[0]),
               idx.begin() + static_cast<long>(counts[0] + counts[1]));
  s.test.assign(idx.begin() + static_cast<long>(counts[0] + counts[1]), idx.end());
  return s;
}

}  // namespace rowgraph::fieldgen
