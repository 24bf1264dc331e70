#pragma once

// Run settings read from plain-text key=value files. '#' starts a comment;
// unknown keys are rejected so that typos do not silently fall back to
// defaults.

#include <cstdint>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rowgraph/fieldgen/io.hpp"
#include "rowgraph/fieldgen/scene.hpp"
#include "rowgraph/net/checkpoint.hpp"
#include "rowgraph/net/train.hpp"

namespace rowgraph {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using KeyValues = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline KeyValues parse_key_values(const std::string& text, const std::string& origin = "config") {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(no) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

struct Settings {
  // model
  std::size_t stages = 2;
  double width_scale = 1.0;
  bool shared_trunk = false;
  std::size_t samples = 16;  // L
  double tau = 0.15;
  double delta = 1.0;
  // optimisation
  double lr = 0.001;
  double lr_ecm = 0.001;
  double momentum = 0.9;
  std::size_t batch = 4;
  double clip_norm = 0;
  double output_gain = 1.0;
  std::size_t epochs_kem = 100;
  std::size_t epochs_ecm = 50;
  double negative_ratio = 3.0;
  // data
  std::size_t patches = 564;
  std::size_t patch_size = 256;
  double train_ratio = 0.6, val_ratio = 0.2, test_ratio = 0.2;
  fieldgen::GenConfig gen;
  // evaluation
  double plant_radius = 8.0;
  double line_radius = 5.0;

  std::uint64_t seed = 1;

  net::RunMeta meta() const {
    return {stages, samples, width_scale, tau, delta, shared_trunk};
  }

  net::TrainConfig kem_train() const {
    net::TrainConfig c;
    c.sgd = {lr, momentum, batch, clip_norm};
    c.epochs = epochs_kem;
    c.seed = seed;
    return c;
  }

  net::EcmTrainConfig ecm_train() const {
    net::EcmTrainConfig c;
    c.train.sgd = {lr_ecm, momentum, batch, 0};
    c.train.epochs = epochs_ecm;
    c.train.seed = seed;
    c.negative_ratio = negative_ratio;
    return c;
  }
};

namespace detail {

template <class V>
V parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  V v{};
  if constexpr (std::is_same_v<V, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("config: '" + key + "' expects true/false, got '" + text + "'");
  } else {
    in >> v;
    if (!in || !(in >> std::ws).eof()) throw ConfigError("config: bad value for '" + key + "': '" + text + "'");
    if constexpr (std::is_unsigned_v<V>)
      if (text.find('-') != std::string::npos) throw ConfigError("config: '" + key + "' must be non-negative");
  }
  return v;
}

}  // namespace detail

inline void apply_settings(Settings& s, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    bool known = true;
    auto set = [&](auto& field) { field = detail::parse_value<std::decay_t<decltype(field)>>(key, value); };
    if (key == "stages") set(s.stages);
    else if (key == "width_scale") set(s.width_scale);
    else if (key == "shared_trunk") set(s.shared_trunk);
    else if (key == "L") set(s.samples);
    else if (key == "tau") set(s.tau);
    else if (key == "delta") set(s.delta);
    else if (key == "lr") set(s.lr);
    else if (key == "lr_ecm") set(s.lr_ecm);
    else if (key == "momentum") set(s.momentum);
    else if (key == "batch") set(s.batch);
    else if (key == "clip_norm") set(s.clip_norm);
    else if (key == "output_gain") set(s.output_gain);
    else if (key == "epochs_kem") set(s.epochs_kem);
    else if (key == "epochs_ecm") set(s.epochs_ecm);
    else if (key == "negative_ratio") set(s.negative_ratio);
    else if (key == "patches") set(s.patches);
    else if (key == "patch_size") set(s.patch_size);
    else if (key == "train_ratio") set(s.train_ratio);
    else if (key == "val_ratio") set(s.val_ratio);
    else if (key == "test_ratio") set(s.test_ratio);
    else if (key == "plant_radius") set(s.plant_radius);
    else if (key == "line_radius") set(s.line_radius);
    else if (key == "seed") set(s.seed);
    else if (key == "rows") set(s.gen.rows);
    else if (key == "plants_per_row") set(s.gen.plants_per_row);
    else if (key == "row_spacing") set(s.gen.row_spacing_px);
    else if (key == "row_spacing_jitter") set(s.gen.row_spacing_jitter);
    else if (key == "plant_spacing") set(s.gen.plant_spacing_px);
    else if (key == "plant_spacing_jitter") set(s.gen.plant_spacing_jitter);
    else if (key == "lateral_jitter") set(s.gen.lateral_jitter_px);
    else if (key == "curvature") set(s.gen.curvature);
    else if (key == "bend_wavelength") set(s.gen.bend_wavelength_px);
    else if (key == "row_angle") set(s.gen.row_angle_deg);
    else if (key == "row_angle_jitter") set(s.gen.row_angle_jitter_deg);
    else if (key == "gap_probability") set(s.gen.gap_probability);
    else if (key == "weed_density") set(s.gen.weed_density);
    else if (key == "plant_radius_px") set(s.gen.plant_radius_px);
    else if (key == "plant_radius_jitter") set(s.gen.plant_radius_jitter);
    else if (key == "noise") set(s.gen.noise_level);
    else known = false;
    if (!known) throw ConfigError("config: unknown key '" + key + "'");
  }
  s.gen.seed = s.seed;
}

inline void validate(const Settings& s) {
  if (s.stages < 1) throw ConfigError("config: stages must be >= 1");
  if (!(s.width_scale > 0 && s.width_scale <= 1)) throw ConfigError("config: width_scale must be in (0,1]");
  if (s.samples < 1) throw ConfigError("config: L must be >= 1");
  if (s.patch_size % 4 != 0 || s.patch_size == 0) throw ConfigError("config: patch_size must be a positive multiple of 4");
  if (!(s.plant_radius >= 0) || !(s.line_radius >= 0)) throw ConfigError("config: radii must be non-negative");
  if (!(s.output_gain > 0)) throw ConfigError("config: output_gain must be positive");
  if (s.negative_ratio < 0) throw ConfigError("config: negative_ratio must be non-negative");
  s.gen.validate();
}

inline Settings load_settings(const std::string& path) {
  Settings s;
  if (!path.empty()) apply_settings(s, parse_key_values(fieldgen::read_file(path), path));
  return s;
}

}  // namespace rowgraph
