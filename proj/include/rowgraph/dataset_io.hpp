#pragma once

// On-disk dataset layout:
//   manifest.json             patch size, seed, counts, split id lists
//   train.txt val.txt test.txt  one patch id per line
//   patches/<id>.json         scene (plants by line, weeds)
//   patches/<id>.ppm          RGB image
//   patches/<id>_plant.pgm    final-stage plant confidence map (half resolution)
//   patches/<id>_line.pgm     final-stage line confidence map
//   patches/<id>_field.rgvf   displacement field

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rowgraph/config.hpp"
#include "rowgraph/fieldgen/dataset.hpp"
#include "rowgraph/fieldgen/ground_truth.hpp"
#include "rowgraph/fieldgen/io.hpp"

namespace rowgraph {

namespace fs = std::filesystem;

inline void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw diff::IoError("cannot create directory '" + p.string() + "'");
}

struct DatasetSummary {
  std::size_t train = 0, val = 0, test = 0;
};

inline DatasetSummary write_dataset(const fs::path& dir, const Settings& s) {
  validate(s);
  make_dirs(dir / "patches");
  auto gen = s.gen;
  gen.seed = s.seed;
  const auto patches = fieldgen::generate_patches(gen, s.patches, s.patch_size);
  const auto split = fieldgen::split_dataset(patches.size(), {s.train_ratio, s.val_ratio, s.test_ratio}, s.seed);
  const double sigma = fieldgen::sigma_schedule(s.stages).back();
  for (const auto& p : patches) {
    const fs::path base = dir / "patches" / p.id;
    fieldgen::write_scene(base.string() + ".json", p.scene);
    fieldgen::write_ppm(base.string() + ".ppm", p.image);
    fieldgen::write_pgm(base.string() + "_plant.pgm", fieldgen::gt_plant_map(p.scene, sigma));
    fieldgen::write_pgm(base.string() + "_line.pgm", fieldgen::gt_line_map(p.scene, sigma));
    fieldgen::write_rgvf(base.string() + "_field.rgvf", fieldgen::gt_displacement_field(p.scene));
  }
  nlohmann::json m;
  m["patch_size"] = s.patch_size;
  m["seed"] = s.seed;
  m["count"] = patches.size();
  m["ground_truth_sigma"] = sigma;
  const auto ids = [&](const std::vector<std::size_t>& idx) {
    std::vector<std::string> out;
    std::string text;
    for (auto i : idx) {
      out.push_back(patches[i].id);
      text += patches[i].id + "\n";
    }
    return std::make_pair(out, text);
  };
  const std::pair<const char*, const std::vector<std::size_t>*> parts[] = {
      {"train", &split.train}, {"val", &split.val}, {"test", &split.test}};
  for (const auto& [name, idx] : parts) {
    auto [list, text] = ids(*idx);
    m[name] = list;
    fieldgen::write_file((dir / (std::string(name) + ".txt")).string(), text);
  }
  fieldgen::write_file((dir / "manifest.json").string(), m.dump(1) + "\n");
  return {split.train.size(), split.val.size(), split.test.size()};
}

inline std::vector<std::string> read_split(const fs::path& dir, const std::string& split) {
  const auto text = fieldgen::read_file((dir / (split + ".txt")).string());
  std::vector<std::string> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    auto id = trim(text.substr(pos, end - pos));
    if (!id.empty()) ids.push_back(id);
    pos = end + 1;
  }
  return ids;
}

inline fieldgen::Patch read_patch(const fs::path& dir, const std::string& id) {
  const fs::path base = dir / "patches" / id;
  fieldgen::Patch p;
  p.id = id;
  p.scene = fieldgen::read_scene(base.string() + ".json");
  p.image = fieldgen::read_ppm(base.string() + ".ppm");
  if (p.image.dim(1) != p.scene.height || p.image.dim(2) != p.scene.width)
    throw diff::IoError("patch '" + id + "': image size does not match its scene");
  return p;
}

inline fieldgen::PatchSet read_patches(const fs::path& dir, const std::string& split) {
  fieldgen::PatchSet out;
  for (const auto& id : read_split(dir, split)) out.push_back(read_patch(dir, id));
  return out;
}

}  // namespace rowgraph
