#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rowgraph/diff/tensor.hpp"

namespace rowgraph::diff {

template <class T>
struct Param {
  std::string name;
  Tensor<T> tensor;
  std::vector<T> momentum;  // same length as tensor

  Param() = default;
  Param(std::string n, Shape shape)
      : name(std::move(n)), tensor(std::move(shape), T{0}, true), momentum(tensor.size(), T{0}) {}
};

struct SgdConfig {
  double learning_rate = 0.001;
  double momentum = 0.9;
  std::size_t batch_size = 4;
  // When > 0, the gradient is rescaled so its global L2 norm is at most this.
  double clip_norm = 0;

  void validate() const {
    if (!(learning_rate > 0)) throw std::invalid_argument("sgd: learning_rate must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("sgd: momentum must be in [0,1)");
    if (batch_size < 1) throw std::invalid_argument("sgd: batch_size must be >= 1");
    if (clip_norm < 0) throw std::invalid_argument("sgd: clip_norm must be >= 0");
  }
};

// buffer <- momentum * buffer + grad; w <- w - lr * buffer; then grads are
// cleared. Returns the global gradient norm before clipping.
template <class T>
double sgd_step(std::vector<Param<T>*> params, const SgdConfig& config) {
  config.validate();
  double sq = 0;
  for (const auto* p : params) {
    if (!p->tensor.has_grad())
      throw std::logic_error("sgd_step: parameter '" + p->name + "' has no gradient");
    for (T g : p->tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  const double norm = std::sqrt(sq);
  const T factor = config.clip_norm > 0 && norm > config.clip_norm ? static_cast<T>(config.clip_norm / norm) : T{1};
  const T lr = static_cast<T>(config.learning_rate);
  const T mu = static_cast<T>(config.momentum);
  for (auto* p : params) {
    auto w = p->tensor.data();
    auto g = p->tensor.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      p->momentum[i] = mu * p->momentum[i] + factor * g[i];
      w[i] -= lr * p->momentum[i];
    }
    p->tensor.zero_grad();
  }
  return norm;
}

// He-style fan-in normal initialization; biases start at zero.
template <class T>
void he_init(Param<T>& p, std::size_t fan_in, std::mt19937_64& rng, double gain = 1.0) {
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : p.tensor.data()) v = static_cast<T>(dist(rng));
}

}  // namespace rowgraph::diff
