#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "rowgraph/diff/ops.hpp"
#include "rowgraph/diff/optim.hpp"
#include "rowgraph/diff/weights_io.hpp"

namespace rowgraph::net {

using diff::Param;
using diff::Shape;
using diff::Tensor;

template <class T>
struct Conv2dLayer {
  Param<T> weight;
  Param<T> bias;
  bool relu = true;

  Conv2dLayer(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k, bool with_relu)
      : weight(name + ".weight", {cout, cin, k, k}), bias(name + ".bias", {cout}), relu(with_relu) {}

  std::size_t in_channels() const { return weight.tensor.dim(1); }
  std::size_t out_channels() const { return weight.tensor.dim(0); }
  std::size_t kernel() const { return weight.tensor.dim(2); }
  std::size_t fan_in() const { return in_channels() * kernel() * kernel(); }

  Tensor<T> operator()(const Tensor<T>& x) const {
    auto y = diff::conv2d(x, weight.tensor, bias.tensor);
    return relu ? diff::relu(y) : y;
  }
};

template <class T>
struct Conv1dLayer {
  Param<T> weight;
  Param<T> bias;

  Conv1dLayer(const std::string& name, std::size_t cin, std::size_t cout, std::size_t k)
      : weight(name + ".weight", {cout, cin, k}), bias(name + ".bias", {cout}) {}

  std::size_t fan_in() const { return weight.tensor.dim(1) * weight.tensor.dim(2); }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return diff::relu(diff::conv1d(x, weight.tensor, bias.tensor));
  }
};

template <class T>
struct DenseLayer {
  Param<T> weight;
  Param<T> bias;

  DenseLayer(const std::string& name, std::size_t in, std::size_t out)
      : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}) {}

  Tensor<T> operator()(const Tensor<T>& x) const { return diff::dense(x, weight.tensor, bias.tensor); }
};

inline std::size_t scaled_width(std::size_t width, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(width) * scale)));
}

// Copies parameter values into float records (training precision is float).
template <class T>
void append_records(const std::vector<const Param<T>*>& params, std::vector<diff::WeightRecord>& out) {
  for (const auto* p : params) {
    diff::WeightRecord r{p->name, p->tensor.shape(), {}};
    r.values.reserve(p->tensor.size());
    for (T v : p->tensor.data()) r.values.push_back(static_cast<float>(v));
    out.push_back(std::move(r));
  }
}

// Loads records by name; every parameter must be present with a matching shape.
template <class T>
void load_records(const std::vector<Param<T>*>& params, const std::vector<diff::WeightRecord>& records) {
  for (auto* p : params) {
    auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.name == p->name; });
    if (it == records.end()) throw diff::IoError("weights: missing parameter '" + p->name + "'");
    if (it->shape != p->tensor.shape())
      throw diff::IoError("weights: parameter '" + p->name + "' has shape " + diff::to_string(it->shape) +
                          ", model expects " + diff::to_string(p->tensor.shape()));
    auto dst = p->tensor.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(it->values[i]);
    std::fill(p->momentum.begin(), p->momentum.end(), T{0});
    p->tensor.zero_grad();
  }
}

}  // namespace rowgraph::net
