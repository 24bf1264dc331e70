#pragma once

// Finite-difference verification of every differentiable primitive and of the
// composed first-stage estimation graph, in double precision.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rowgraph/diff/gradcheck.hpp"
#include "rowgraph/diff/ops.hpp"
#include "rowgraph/net/model.hpp"

namespace rowgraph {

inline constexpr double kGradTolerance = 1e-4;
// More skipped (kink-straddling) elements than this fraction fails the check.
inline constexpr double kMaxSkippedFraction = 0.1;

struct PrimitiveReport {
  std::string name;
  double max_relative_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::size_t seeds = 0;
  bool passed = false;
};

namespace detail {

using DT = diff::Tensor<double>;

inline DT random_tensor(diff::Shape shape, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  DT t(std::move(shape));
  for (auto& v : t.data()) v = u(rng);
  return t;
}

inline std::vector<double> random_weights(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> w(n);
  for (auto& v : w) v = u(rng);
  return w;
}

// Builds (inputs, scalar function) for one seed.
using CaseBuilder = std::function<std::pair<std::vector<DT>, std::function<DT()>>(std::mt19937_64&)>;

// Scalarizes `op` with fixed random weights drawn after the inputs.
template <class Op>
std::pair<std::vector<DT>, std::function<DT()>> weighted(std::vector<DT> inputs, Op op, std::mt19937_64& rng) {
  const auto probe = [&] {
    diff::NoGradGuard g;
    return op(inputs).size();
  }();
  auto w = random_weights(probe, rng);
  auto f = [inputs, op, w]() { return diff::weighted_sum(op(inputs), w); };
  return {inputs, f};
}

inline std::vector<std::pair<std::string, CaseBuilder>> primitive_cases() {
  using V = std::vector<DT>;
  std::vector<std::pair<std::string, CaseBuilder>> c;
  c.emplace_back("conv2d", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 5, 6}, r), random_tensor({3, 2, 3, 3}, r), random_tensor({3}, r)},
                    [](const V& v) { return diff::conv2d(v[0], v[1], v[2]); }, r);
  });
  c.emplace_back("conv2d_1x1", [](std::mt19937_64& r) {
    return weighted({random_tensor({3, 4, 4}, r), random_tensor({2, 3, 1, 1}, r), random_tensor({2}, r)},
                    [](const V& v) { return diff::conv2d(v[0], v[1], v[2]); }, r);
  });
  c.emplace_back("conv1d", [](std::mt19937_64& r) {
    return weighted({random_tensor({3, 7}, r), random_tensor({4, 3, 3}, r), random_tensor({4}, r)},
                    [](const V& v) { return diff::conv1d(v[0], v[1], v[2]); }, r);
  });
  c.emplace_back("conv1d_batched", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 3, 5}, r), random_tensor({2, 3, 3}, r), random_tensor({2}, r)},
                    [](const V& v) { return diff::conv1d(v[0], v[1], v[2]); }, r);
  });
  c.emplace_back("maxpool2", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 6, 4}, r)}, [](const V& v) { return diff::maxpool2(v[0]); }, r);
  });
  c.emplace_back("upsample_bilinear2", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 3, 4}, r)}, [](const V& v) { return diff::upsample_bilinear2(v[0]); }, r);
  });
  c.emplace_back("relu", [](std::mt19937_64& r) {
    return weighted({random_tensor({4, 5}, r)}, [](const V& v) { return diff::relu(v[0]); }, r);
  });
  c.emplace_back("sigmoid", [](std::mt19937_64& r) {
    return weighted({random_tensor({4, 5}, r, -4, 4)}, [](const V& v) { return diff::sigmoid(v[0]); }, r);
  });
  c.emplace_back("concat_channels", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 3, 3}, r), random_tensor({1, 3, 3}, r)},
                    [](const V& v) { return diff::concat_channels<double>({v[0], v[1]}); }, r);
  });
  c.emplace_back("slice_channels", [](std::mt19937_64& r) {
    return weighted({random_tensor({4, 2, 3}, r)}, [](const V& v) { return diff::slice_channels(v[0], 1, 2); }, r);
  });
  c.emplace_back("dense", [](std::mt19937_64& r) {
    return weighted({random_tensor({6}, r), random_tensor({3, 6}, r), random_tensor({3}, r)},
                    [](const V& v) { return diff::dense(v[0], v[1], v[2]); }, r);
  });
  c.emplace_back("dense_batched", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 5}, r), random_tensor({3, 5}, r), random_tensor({3}, r)},
                    [](const V& v) { return diff::dense(v[0], v[1], v[2]); }, r);
  });
  c.emplace_back("reshape", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 3, 2}, r)}, [](const V& v) { return diff::reshape(v[0], {3, 4}); }, r);
  });
  c.emplace_back("add", [](std::mt19937_64& r) {
    return weighted({random_tensor({3, 4}, r), random_tensor({3, 4}, r)},
                    [](const V& v) { return diff::add(v[0], v[1]); }, r);
  });
  c.emplace_back("scale", [](std::mt19937_64& r) {
    return weighted({random_tensor({3, 4}, r)}, [](const V& v) { return diff::scale(v[0], 1.7); }, r);
  });
  c.emplace_back("mse_loss", [](std::mt19937_64& r) {
    return weighted({random_tensor({2, 3, 3}, r), random_tensor({2, 3, 3}, r)},
                    [](const V& v) { return diff::mse_loss(v[0], v[1]); }, r);
  });
  c.emplace_back("bce_loss", [](std::mt19937_64& r) {
    std::uniform_int_distribution<int> bit(0, 1);
    std::vector<double> labels(6);
    for (auto& y : labels) y = bit(r);
    return weighted({random_tensor({6}, r, 0.05, 0.95)},
                    [labels](const V& v) { return diff::bce_loss(v[0], labels); }, r);
  });
  c.emplace_back("weighted_sum", [](std::mt19937_64& r) {
    auto w = random_weights(5, r);
    return weighted({random_tensor({5}, r)}, [w](const V& v) { return diff::weighted_sum(v[0], w); }, r);
  });
  return c;
}

// Backbone + first stage at tiny width on an 8x8 image; every parameter and
// the image are checked against the summed stage-1 loss.
inline std::pair<std::vector<DT>, std::function<DT()>> kem_stage1_case(std::mt19937_64& r) {
  net::BackboneConfig bb;
  bb.channel_widths = {3, 3, 4, 4, 4, 4, 4, 4, 4, 8};
  net::KemConfig kc;
  kc.stages = 1;
  kc.first_widths = {3, 3, 3, 4};
  auto model = std::make_shared<net::KemModel<double>>(bb, kc);
  model->init(r());
  std::vector<DT> inputs{random_tensor({3, 8, 8}, r, 0, 1)};
  for (auto* p : model->params()) inputs.push_back(p->tensor);
  auto plant = random_tensor({1, 4, 4}, r, 0, 1);
  auto line = random_tensor({1, 4, 4}, r, 0, 1);
  auto field = random_tensor({2, 4, 4}, r);
  auto f = [model, image = inputs[0], plant, line, field]() {
    const auto out = model->forward(image);
    return net::kem_loss(out.stages, {plant}, {line}, field);
  };
  return {inputs, f};
}

inline PrimitiveReport run_case(const std::string& name, const CaseBuilder& build, std::size_t seeds,
                                std::uint64_t base_seed) {
  PrimitiveReport rep{name, 0, 0, 0, seeds, false};
  for (std::size_t s = 0; s < seeds; ++s) {
    std::mt19937_64 rng(base_seed + 1000003ULL * s);
    auto [inputs, f] = build(rng);
    const auto res = diff::grad_check(f, inputs);
    rep.max_relative_error = std::max(rep.max_relative_error, res.max_relative_error);
    rep.checked += res.checked;
    rep.skipped += res.skipped;
  }
  const double total = static_cast<double>(rep.checked + rep.skipped);
  rep.passed = rep.checked > 0 && rep.max_relative_error < kGradTolerance &&
               static_cast<double>(rep.skipped) <= kMaxSkippedFraction * total;
  return rep;
}

}  // namespace detail

inline std::vector<PrimitiveReport> run_gradcheck_suite(std::size_t seeds = 20, std::uint64_t base_seed = 1) {
  std::vector<PrimitiveReport> out;
  for (const auto& [name, build] : detail::primitive_cases()) out.push_back(detail::run_case(name, build, seeds, base_seed));
  out.push_back(detail::run_case("kem_stage1", detail::kem_stage1_case, seeds, base_seed));
  return out;
}

}  // namespace rowgraph
