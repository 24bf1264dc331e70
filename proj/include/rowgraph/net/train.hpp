#pragma once

// Training loops: the map-regression stage (backbone + estimation module)
// and the edge head on frozen features.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rowgraph/fieldgen/dataset.hpp"
#include "rowgraph/fieldgen/ground_truth.hpp"
#include "rowgraph/linegraph/graph.hpp"
#include "rowgraph/net/model.hpp"

namespace rowgraph::net {

struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  diff::SgdConfig sgd;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  double grad_norm = 0;  // mean pre-clipping gradient norm over the epoch's steps
  std::size_t steps = 0;  // optimizer steps taken
};

struct History {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// In-place Fisher-Yates with an explicit draw.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

template <class T>
std::vector<std::vector<T>> snapshot(const std::vector<Param<T>*>& params) {
  std::vector<std::vector<T>> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(p->tensor.values());
  return out;
}

template <class T>
void restore(const std::vector<Param<T>*>& params, const std::vector<std::vector<T>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->tensor.values() = values[i];
}

inline void check_finite(double loss, std::size_t epoch, const char* what) {
  if (!std::isfinite(loss))
    throw DivergenceError(std::string(what) + ": non-finite loss in epoch " + std::to_string(epoch) +
                          "; lower the learning rate");
}

// ---------------------------------------------------------------------------
// Map regression

struct KemSample {
  diff::Tensor<float> image;
  std::vector<diff::Tensor<float>> plant_gt;  // per stage
  std::vector<diff::Tensor<float>> line_gt;   // per stage
  diff::Tensor<float> field;
};

inline KemSample make_kem_sample(const fieldgen::Patch& patch, std::size_t stages) {
  auto gt = fieldgen::make_ground_truth(patch.scene, stages);
  return {patch.image, std::move(gt.plant_maps), std::move(gt.line_maps), std::move(gt.displacement_field)};
}

template <class T>
double kem_sample_loss(const KemModel<T>& model, const KemSample& s) {
  diff::NoGradGuard guard;
  const auto out = model.forward(s.image);
  return static_cast<double>(kem_loss(out.stages, s.plant_gt, s.line_gt, s.field).item());
}

template <class T>
double kem_mean_loss(const KemModel<T>& model, const std::vector<KemSample>& set) {
  double sum = 0;
  for (const auto& s : set) sum += kem_sample_loss(model, s);
  return set.empty() ? 0.0 : sum / static_cast<double>(set.size());
}

// Mini-batch SGD; each step descends the mean over the batch of per-patch
// losses. Weights with the lowest validation loss are restored at the end
// (the final epoch's when there is no validation set).
template <class T>
History train_kem(KemModel<T>& model, const std::vector<KemSample>& train, const std::vector<KemSample>& val,
                  const TrainConfig& config, const EpochCallback& on_epoch = {}) {
  if (train.empty()) throw std::invalid_argument("train_kem: empty training set");
  config.sgd.validate();
  auto params = model.params();
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  History h;
  std::vector<std::vector<T>> best;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double sum = 0, norms = 0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.sgd.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.sgd.batch_size);
      const T inv = T{1} / static_cast<T>(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train[order[k]];
        const auto out = model.forward(s.image);
        const auto loss = kem_loss(out.stages, s.plant_gt, s.line_gt, s.field);
        check_finite(loss.item(), epoch, "train_kem");
        sum += static_cast<double>(loss.item());
        diff::backward(diff::scale(loss, inv));
      }
      norms += diff::sgd_step(params, config.sgd);
      ++steps;
    }
    EpochRecord rec{epoch, sum / static_cast<double>(train.size()), 0.0, norms / static_cast<double>(steps), steps};
    rec.val_loss = val.empty() ? rec.train_loss : kem_mean_loss(model, val);
    check_finite(rec.val_loss, epoch, "train_kem");
    h.epochs.push_back(rec);
    if (val.empty() || rec.val_loss < h.best_val_loss) {
      h.best_val_loss = rec.val_loss;
      h.best_epoch = epoch;
      best = snapshot(params);
    }
    if (on_epoch) on_epoch(rec);
  }
  if (!best.empty()) restore(params, best);
  return h;
}

// ---------------------------------------------------------------------------
// Edge head

struct EdgeExample {
  linegraph::Vec2 a, b;
  bool positive = false;
};

// All plant pairs of a ground-truth scene; positive when both plants lie on
// the same line. Scenes with fewer than two plants give no edges.
inline std::vector<EdgeExample> label_edges(const fieldgen::PlantationScene& scene) {
  std::vector<std::pair<linegraph::Vec2, int>> plants;
  for (const auto& line : scene.lines)
    for (const auto& p : line.plants) plants.push_back({{p.x, p.y}, line.id});
  std::vector<EdgeExample> out;
  for (std::size_t i = 0; i < plants.size(); ++i)
    for (std::size_t j = i + 1; j < plants.size(); ++j) {
      if (plants[i].first == plants[j].first) continue;
      out.push_back({plants[i].first, plants[j].first, plants[i].second == plants[j].second});
    }
  return out;
}

// Keeps every positive and up to ratio x positives negatives, drawn without
// replacement.
inline std::vector<EdgeExample> subsample_negatives(const std::vector<EdgeExample>& edges, double ratio,
                                                    std::mt19937_64& rng) {
  std::vector<EdgeExample> out;
  std::vector<std::size_t> neg;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].positive) out.push_back(edges[i]);
    else neg.push_back(i);
  }
  const auto keep = std::min(neg.size(), static_cast<std::size_t>(std::floor(ratio * static_cast<double>(out.size()))));
  // partial Fisher-Yates, then restore the original order of the chosen ones
  for (std::size_t i = 0; i < keep; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (neg.size() - i));
    std::swap(neg[i], neg[j]);
  }
  neg.resize(keep);
  std::sort(neg.begin(), neg.end());
  for (auto i : neg) out.push_back(edges[i]);
  return out;
}

struct EcmSample {
  diff::Tensor<float> features;  // frozen backbone output [C,h,w]
  std::vector<EdgeExample> edges;
};

template <class T>
EcmSample make_ecm_sample(const KemModel<T>& kem, const fieldgen::Patch& patch) {
  diff::NoGradGuard guard;
  return {kem.backbone().forward(patch.image).detach(), label_edges(patch.scene)};
}

struct EcmTrainConfig {
  TrainConfig train;
  double negative_ratio = 3.0;
};

// [B,C,L] features and labels for a list of (sample, edge) references.
inline std::pair<diff::Tensor<float>, std::vector<float>> edge_batch(
    const std::vector<std::pair<const EcmSample*, EdgeExample>>& items, std::size_t samples) {
  const std::size_t c = items.front().first->features.dim(0);
  diff::Tensor<float> x({items.size(), c, samples});
  std::vector<float> y(items.size());
  for (std::size_t k = 0; k < items.size(); ++k) {
    const auto& [s, e] = items[k];
    linegraph::sample_features(s->features, linegraph::sample_edge_points(e.a, e.b, samples),
                               x.data().data() + k * c * samples);
    y[k] = e.positive ? 1.0f : 0.0f;
  }
  return {std::move(x), std::move(y)};
}

// Mean BCE over a fixed subsample of the set's edges (seeded).
inline double ecm_mean_loss(const EcmHead<float>& head, const std::vector<EcmSample>& set, double ratio,
                            std::uint64_t seed) {
  diff::NoGradGuard guard;
  std::mt19937_64 rng(seed);
  double sum = 0;
  std::size_t n = 0;
  for (const auto& s : set) {
    const auto edges = subsample_negatives(s.edges, ratio, rng);
    if (edges.empty()) continue;
    std::vector<std::pair<const EcmSample*, EdgeExample>> items;
    for (const auto& e : edges) items.emplace_back(&s, e);
    auto [x, y] = edge_batch(items, head.samples());
    sum += static_cast<double>(diff::bce_loss(head.forward(x), y).item()) * static_cast<double>(edges.size());
    n += edges.size();
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// One step per group of batch_size patches; the step's loss is the mean BCE
// over all kept edges of those patches. Negatives are redrawn every epoch.
inline History train_ecm(EcmHead<float>& head, const std::vector<EcmSample>& train, const std::vector<EcmSample>& val,
                         const EcmTrainConfig& config, const EpochCallback& on_epoch = {}) {
  if (train.empty()) throw std::invalid_argument("train_ecm: empty training set");
  config.train.sgd.validate();
  auto params = head_params(head);
  std::mt19937_64 rng(config.train.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  History h;
  std::vector<std::vector<float>> best;
  const std::uint64_t val_seed = fieldgen::splitmix64(config.train.seed ^ 0x5EEDULL);
  for (std::size_t epoch = 1; epoch <= config.train.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double sum = 0, norms = 0;
    std::size_t count = 0, steps = 0;
    for (std::size_t start = 0; start < order.size(); start += config.train.sgd.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.train.sgd.batch_size);
      std::vector<std::pair<const EcmSample*, EdgeExample>> items;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train[order[k]];
        for (const auto& e : subsample_negatives(s.edges, config.negative_ratio, rng)) items.emplace_back(&s, e);
      }
      if (items.empty()) continue;
      auto [x, y] = edge_batch(items, head.samples());
      const auto loss = diff::bce_loss(head.forward(x), y);
      check_finite(loss.item(), epoch, "train_ecm");
      sum += static_cast<double>(loss.item()) * static_cast<double>(items.size());
      count += items.size();
      diff::backward(loss);
      norms += diff::sgd_step(params, config.train.sgd);
      ++steps;
    }
    EpochRecord rec{epoch, count ? sum / static_cast<double>(count) : 0.0, 0.0,
                    steps ? norms / static_cast<double>(steps) : 0.0, steps};
    rec.val_loss = val.empty() ? rec.train_loss : ecm_mean_loss(head, val, config.negative_ratio, val_seed);
    check_finite(rec.val_loss, epoch, "train_ecm");
    h.epochs.push_back(rec);
    if (val.empty() || rec.val_loss < h.best_val_loss) {
      h.best_val_loss = rec.val_loss;
      h.best_epoch = epoch;
      best = snapshot(params);
    }
    if (on_epoch) on_epoch(rec);
  }
  if (!best.empty()) restore(params, best);
  return h;
}

}  // namespace rowgraph::net
