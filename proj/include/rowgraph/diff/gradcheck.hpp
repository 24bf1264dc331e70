#pragma once

// Central finite-difference verification of reverse-mode gradients (64-bit).

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rowgraph/diff/tensor.hpp"

namespace rowgraph::diff {

struct GradCheckOptions {
  double eps = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-3;
  // An element whose central differences at eps and eps/4 disagree by more
  // than this (relative) straddles a kink (relu, maxpool switch) and is skipped.
  double kink_tolerance = 1e-6;
  // A point sitting exactly on a kink fools the symmetric test. There the
  // gap between one-sided slopes stays put as the step shrinks, while on a
  // smooth function it shrinks with the step.
  double one_sided_tolerance = 1e-3;
};

struct GradCheckResult {
  double max_relative_error = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// `f` rebuilds a scalar from the current values of `inputs`. Every element of
// every input is perturbed in turn and restored afterwards.
template <class F>
GradCheckResult grad_check(F&& f, std::vector<Tensor<double>> inputs,
                           const GradCheckOptions& options = {}) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  {
    Tensor<double> out = f();
    backward(out);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) {
    analytic.emplace_back(in.size(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.back().begin());
  }

  NoGradGuard no_grad;
  auto eval = [&] { return f().item(); };
  auto central = [&](double& slot, double h) {
    const double saved = slot;
    slot = saved + h;
    const double up = eval();
    slot = saved - h;
    const double down = eval();
    slot = saved;
    return (up - down) / (2 * h);
  };
  auto one_sided_gap = [&](double& slot, double h) {
    const double saved = slot;
    const double mid = eval();
    slot = saved + h;
    const double up = eval();
    slot = saved - h;
    const double down = eval();
    slot = saved;
    return std::abs((up - mid) - (mid - down)) / h;
  };

  GradCheckResult result;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    auto values = inputs[t].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double coarse = central(values[i], options.eps);
      const double fine = central(values[i], options.eps / 4);
      const double scale = std::max({std::abs(coarse), std::abs(fine), options.floor});
      if (std::abs(coarse - fine) / scale > options.kink_tolerance ||
          (one_sided_gap(values[i], options.eps) / scale > options.one_sided_tolerance &&
           one_sided_gap(values[i], options.eps / 4) > 0.5 * one_sided_gap(values[i], options.eps))) {
        ++result.skipped;
        continue;
      }
      const double a = analytic[t][i];
      const double denom = std::max({std::abs(a), std::abs(coarse), options.floor});
      result.max_relative_error = std::max(result.max_relative_error, std::abs(a - coarse) / denom);
      ++result.checked;
    }
  }
  for (auto& in : inputs) in.zero_grad();
  return result;
}

}  // namespace rowgraph::diff
