#pragma once

// Weight files for the map model and the edge head, with the run settings
// they were trained under stored alongside the parameters.

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "rowgraph/linegraph/graph.hpp"
#include "rowgraph/net/model.hpp"

namespace rowgraph::net {

struct RunMeta {
  std::size_t stages = 2;
  std::size_t samples = linegraph::kDefaultSamples;
  double width_scale = 1.0;
  double tau = linegraph::kPeakThreshold;
  double delta = linegraph::kPeakMinDistance;
  bool shared_trunk = false;
};

inline std::vector<diff::WeightRecord> meta_records(const RunMeta& m, bool with_samples) {
  std::vector<diff::WeightRecord> r{
      diff::meta_record("stages", static_cast<float>(m.stages)),
      diff::meta_record("width_scale", static_cast<float>(m.width_scale)),
      diff::meta_record("tau", static_cast<float>(m.tau)),
      diff::meta_record("delta", static_cast<float>(m.delta)),
      diff::meta_record("shared_trunk", m.shared_trunk ? 1.0f : 0.0f),
  };
  if (with_samples) r.push_back(diff::meta_record("samples", static_cast<float>(m.samples)));
  return r;
}

inline float require_meta(const std::map<std::string, float>& meta, const std::string& key, const std::string& path) {
  auto it = meta.find(key);
  if (it == meta.end()) throw diff::IoError("weights '" + path + "': missing header field '" + key + "'");
  return it->second;
}

inline RunMeta parse_meta(const std::vector<diff::WeightRecord>& records, const std::string& path) {
  const auto meta = diff::weight_metadata(records);
  RunMeta m;
  m.stages = static_cast<std::size_t>(require_meta(meta, "stages", path));
  m.width_scale = require_meta(meta, "width_scale", path);
  m.tau = require_meta(meta, "tau", path);
  m.delta = require_meta(meta, "delta", path);
  m.shared_trunk = require_meta(meta, "shared_trunk", path) != 0;
  if (meta.count("samples")) m.samples = static_cast<std::size_t>(meta.at("samples"));
  return m;
}

struct MetaMismatch {
  std::string field;
  std::string have;
  std::string want;
};

// Fields compared as stored (single precision).
inline std::vector<MetaMismatch> compare_meta(const RunMeta& have, const RunMeta& want, bool with_samples) {
  std::vector<MetaMismatch> out;
  const auto num = [&](const char* f, double a, double b) {
    if (static_cast<float>(a) != static_cast<float>(b))
      out.push_back({f, std::to_string(static_cast<float>(a)), std::to_string(static_cast<float>(b))});
  };
  num("stages", static_cast<double>(have.stages), static_cast<double>(want.stages));
  num("width_scale", have.width_scale, want.width_scale);
  num("tau", have.tau, want.tau);
  num("delta", have.delta, want.delta);
  if (have.shared_trunk != want.shared_trunk)
    out.push_back({"shared_trunk", have.shared_trunk ? "1" : "0", want.shared_trunk ? "1" : "0"});
  if (with_samples) num("samples", static_cast<double>(have.samples), static_cast<double>(want.samples));
  return out;
}

inline BackboneConfig backbone_config(const RunMeta& m) {
  BackboneConfig c;
  c.width_scale = m.width_scale;
  return c;
}

inline KemConfig kem_config(const RunMeta& m) {
  KemConfig c;
  c.stages = m.stages;
  c.width_scale = m.width_scale;
  c.shared_trunk = m.shared_trunk;
  return c;
}

inline EcmConfig ecm_config(const RunMeta& m) {
  EcmConfig c;
  c.samples = m.samples;
  c.width_scale = m.width_scale;
  return c;
}

inline void save_kem(const std::string& path, const KemModel<float>& model, const RunMeta& meta) {
  auto records = meta_records(meta, false);
  append_records(model.params(), records);
  diff::write_weights(path, records);
}

struct LoadedKem {
  RunMeta meta;
  std::unique_ptr<KemModel<float>> model;
};

inline LoadedKem load_kem(const std::string& path) {
  const auto records = diff::read_weights(path);
  LoadedKem out{parse_meta(records, path), nullptr};
  out.model = std::make_unique<KemModel<float>>(backbone_config(out.meta), kem_config(out.meta));
  load_records(out.model->params(), records);
  return out;
}

inline void save_ecm(const std::string& path, const EcmHead<float>& head, const RunMeta& meta) {
  auto records = meta_records(meta, true);
  append_records(head_params(head), records);
  diff::write_weights(path, records);
}

struct LoadedEcm {
  RunMeta meta;
  std::unique_ptr<EcmHead<float>> head;
};

inline LoadedEcm load_ecm(const std::string& path) {
  const auto records = diff::read_weights(path);
  LoadedEcm out{parse_meta(records, path), nullptr};
  const BackboneConfig bb = backbone_config(out.meta);
  bb.validate();
  out.head = std::make_unique<EcmHead<float>>(ecm_config(out.meta), bb.feature_channels());
  load_records(head_params(*out.head), records);
  return out;
}

}  // namespace rowgraph::net
