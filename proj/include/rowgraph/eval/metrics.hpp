#pragma once

// Plant and line-pixel detection metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "rowgraph/linegraph/classify.hpp"

namespace rowgraph::eval {

using linegraph::Mask;
using linegraph::Vec2;

inline constexpr double kPlantRadius = 8.0;
inline constexpr double kLinePixelRadius = 5.0;

struct MatchPair {
  std::size_t predicted = 0;
  std::size_t labeled = 0;
  double distance = 0;
};

struct MatchResult {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::vector<MatchPair> pairs;  // sorted by predicted index
};

// One-to-one matching of predictions to labels closer than `radius`. Pairs
// are taken greedily by ascending distance, then augmenting paths complete
// the matching to maximum cardinality.
inline MatchResult match_plants(const std::vector<Vec2>& predicted, const std::vector<Vec2>& labeled,
                                double radius = kPlantRadius) {
  const std::size_t np = predicted.size(), nl = labeled.size();
  std::vector<std::tuple<double, std::size_t, std::size_t>> cand;
  std::vector<std::vector<std::size_t>> adj(np);
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < nl; ++j) {
      const double d = std::hypot(predicted[i].x - labeled[j].x, predicted[i].y - labeled[j].y);
      if (d == 0 || d < radius) {
        cand.emplace_back(d, i, j);
        adj[i].push_back(j);
      }
    }
  std::sort(cand.begin(), cand.end());
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> of_pred(np, none), of_label(nl, none);
  for (const auto& [d, i, j] : cand)
    if (of_pred[i] == none && of_label[j] == none) {
      of_pred[i] = j;
      of_label[j] = i;
    }

  std::vector<std::size_t> seen(nl, none);
  const auto augment = [&](auto&& self, std::size_t i, std::size_t stamp) -> bool {
    for (std::size_t j : adj[i]) {
      if (seen[j] == stamp) continue;
      seen[j] = stamp;
      if (of_label[j] == none || self(self, of_label[j], stamp)) {
        of_pred[i] = j;
        of_label[j] = i;
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < np; ++i)
    if (of_pred[i] == none) augment(augment, i, i);

  MatchResult r;
  for (std::size_t i = 0; i < np; ++i)
    if (of_pred[i] != none) {
      const auto j = of_pred[i];
      r.pairs.push_back({i, j, std::hypot(predicted[i].x - labeled[j].x, predicted[i].y - labeled[j].y)});
    }
  r.tp = r.pairs.size();
  r.fp = np - r.tp;
  r.fn = nl - r.tp;
  return r;
}

struct Rates {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool f1_undefined = false;
};

// Undefined ratios (zero denominators) are reported as 0 and flagged.
inline Rates rates(std::size_t tp, std::size_t fp, std::size_t fn) {
  Rates r;
  const auto t = static_cast<double>(tp);
  if (tp + fp == 0) r.precision_undefined = true;
  else r.precision = t / static_cast<double>(tp + fp);
  if (tp + fn == 0) r.recall_undefined = true;
  else r.recall = t / static_cast<double>(tp + fn);
  if (r.precision + r.recall == 0) r.f1_undefined = true;
  else r.f1 = 2 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

struct MeanSd {
  double mean = 0;
  double sd = 0;
  std::size_t count = 0;
};

// Population standard deviation over the defined values.
inline MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd m;
  m.count = v.size();
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.sd += (x - m.mean) * (x - m.mean);
  m.sd = std::sqrt(m.sd / static_cast<double>(v.size()));
  return m;
}

struct PatchCounts {
  std::size_t tp = 0, fp = 0, fn = 0;
  std::size_t labeled = 0;   // n_i
  std::size_t detected = 0;  // m_i
  Rates rates;
};

struct MetricsReport {
  std::vector<PatchCounts> patches;
  std::size_t tp = 0, fp = 0, fn = 0;
  double mae = 0;
  Rates pooled;
  MeanSd precision, recall, f1;  // per-patch, undefined entries excluded
};

inline MetricsReport aggregate(std::vector<PatchCounts> patches) {
  if (patches.empty()) throw std::invalid_argument("metrics: need at least one patch");
  MetricsReport r;
  std::vector<double> p, rc, f;
  for (auto& c : patches) {
    c.rates = rates(c.tp, c.fp, c.fn);
    r.tp += c.tp;
    r.fp += c.fp;
    r.fn += c.fn;
    r.mae += std::abs(static_cast<double>(c.labeled) - static_cast<double>(c.detected));
    if (!c.rates.precision_undefined) p.push_back(c.rates.precision);
    if (!c.rates.recall_undefined) rc.push_back(c.rates.recall);
    if (!c.rates.f1_undefined) f.push_back(c.rates.f1);
  }
  r.mae /= static_cast<double>(patches.size());
  r.pooled = rates(r.tp, r.fp, r.fn);
  r.precision = mean_sd(p);
  r.recall = mean_sd(rc);
  r.f1 = mean_sd(f);
  r.patches = std::move(patches);
  return r;
}

inline PatchCounts plant_counts(const MatchResult& m) {
  return {m.tp, m.fp, m.fn, m.tp + m.fn, m.tp + m.fp, {}};
}

inline MetricsReport plant_metrics(const std::vector<MatchResult>& per_patch) {
  std::vector<PatchCounts> c;
  c.reserve(per_patch.size());
  for (const auto& m : per_patch) c.push_back(plant_counts(m));
  return aggregate(std::move(c));
}

// Exact squared Euclidean distance transform (lower envelope of parabolas),
// distances to the nearest set pixel; infinity when the mask is empty.
inline std::vector<double> squared_distance_transform(const Mask& m) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t h = m.height, w = m.width;
  std::vector<double> d(h * w);
  for (std::size_t i = 0; i < h * w; ++i) d[i] = m.data[i] ? 0.0 : inf;
  const std::size_t n = std::max(h, w);
  std::vector<double> f(n), out(n), z(n + 1);
  std::vector<std::size_t> v(n);
  const auto pass = [&](std::size_t len) {
    std::size_t k = 0;
    bool any = false;
    for (std::size_t q = 0; q < len; ++q) {
      if (f[q] == inf) continue;
      if (!any) {
        v[0] = q;
        z[0] = -inf;
        z[1] = inf;
        any = true;
        continue;
      }
      double s;
      for (;;) {
        const auto p = static_cast<double>(v[k]), qq = static_cast<double>(q);
        s = ((f[q] + qq * qq) - (f[v[k]] + p * p)) / (2 * qq - 2 * p);
        if (s <= z[k] && k > 0) --k;
        else break;
      }
      if (s <= z[k]) {  // k == 0 and the new parabola dominates
        v[0] = q;
        z[0] = -inf;
        z[1] = inf;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
    }
    if (!any) {
      std::fill(out.begin(), out.begin() + static_cast<long>(len), inf);
      return;
    }
    k = 0;
    for (std::size_t q = 0; q < len; ++q) {
      while (z[k + 1] < static_cast<double>(q)) ++k;
      const double dq = static_cast<double>(q) - static_cast<double>(v[k]);
      out[q] = dq * dq + f[v[k]];
    }
  };
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) f[y] = d[y * w + x];
    pass(h);
    for (std::size_t y = 0; y < h; ++y) d[y * w + x] = out[y];
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) f[x] = d[y * w + x];
    pass(w);
    for (std::size_t x = 0; x < w; ++x) d[y * w + x] = out[x];
  }
  return d;
}

// A pixel counts as matched when the nearest pixel of the other mask is
// closer than `radius`; coincident pixels always match.
inline PatchCounts line_counts(const Mask& predicted, const Mask& labeled, double radius = kLinePixelRadius) {
  if (predicted.height != labeled.height || predicted.width != labeled.width)
    throw std::invalid_argument("line_metrics: mask shapes differ");
  const auto to_label = squared_distance_transform(labeled);
  const auto to_pred = squared_distance_transform(predicted);
  const double r2 = radius * radius;
  const auto hit = [&](double d2) { return d2 == 0 || d2 < r2; };
  PatchCounts c;
  for (std::size_t i = 0; i < predicted.data.size(); ++i) {
    if (predicted.data[i]) {
      ++c.detected;
      hit(to_label[i]) ? ++c.tp : ++c.fp;
    }
    if (labeled.data[i]) {
      ++c.labeled;
      if (!hit(to_pred[i])) ++c.fn;
    }
  }
  return c;
}

inline MetricsReport line_metrics(const std::vector<std::pair<Mask, Mask>>& per_patch,
                                  double radius = kLinePixelRadius) {
  std::vector<PatchCounts> c;
  c.reserve(per_patch.size());
  for (const auto& [pred, label] : per_patch) c.push_back(line_counts(pred, label, radius));
  return aggregate(std::move(c));
}

}  // namespace rowgraph::eval
