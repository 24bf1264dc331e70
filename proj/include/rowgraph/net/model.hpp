#pragma once

// Backbone (truncated VGG-style stack with one bilinear 2x upsampling), the
// three-branch multi-stage knowledge estimation module, and the 1-D
// convolutional edge head.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "rowgraph/net/layers.hpp"

namespace rowgraph::net {

struct BackboneConfig {
  // conv,conv | pool | conv x6 | pool | upsample | conv,conv
  std::vector<std::size_t> channel_widths{64, 64, 128, 128, 256, 256, 256, 256, 256, 128};
  double width_scale = 1.0;

  std::size_t width(std::size_t i) const { return scaled_width(channel_widths.at(i), width_scale); }
  std::size_t feature_channels() const { return width(channel_widths.size() - 1); }

  void validate() const {
    if (channel_widths.size() != 10) throw std::invalid_argument("backbone: expected 10 channel widths");
    if (!(width_scale > 0 && width_scale <= 1)) throw std::invalid_argument("backbone: width_scale must be in (0,1]");
    if (feature_channels() < 8)
      throw std::invalid_argument("backbone: feature channels " + std::to_string(feature_channels()) +
                                  " below the minimum of 8");
  }
};

struct KemConfig {
  std::size_t stages = 2;
  std::vector<std::size_t> first_widths{128, 128, 128, 512};  // three 3x3 then one 1x1
  std::vector<std::size_t> refine_widths{128, 128, 128, 128, 128, 128};  // five 7x7 then one 1x1
  std::size_t first_kernel = 3;
  std::size_t refine_kernel = 7;
  double width_scale = 1.0;
  // false: one conv stack per branch (plants, lines, vectors) and stage.
  // true: the three heads share one stack per stage.
  bool shared_trunk = false;

  void validate() const {
    if (stages < 1) throw std::invalid_argument("kem: stage count must be >= 1");
    if (first_widths.size() != 4 || refine_widths.size() != 6)
      throw std::invalid_argument("kem: unexpected layer recipe length");
  }
};

struct EcmConfig {
  std::vector<std::size_t> widths{128, 256, 512};
  std::size_t kernel = 3;
  std::size_t samples = 16;  // L
  double width_scale = 1.0;
};

inline constexpr std::size_t kBranchChannels[3] = {1, 1, 2};  // plants, lines, vectors
inline constexpr const char* kBranchNames[3] = {"plant", "line", "vector"};

template <class T>
struct StageOutputs {
  Tensor<T> plant;    // [1,h,w]
  Tensor<T> line;     // [1,h,w]
  Tensor<T> vectors;  // [2,h,w]
};

template <class T>
class Backbone {
 public:
  explicit Backbone(BackboneConfig config) : config_(std::move(config)) {
    config_.validate();
    std::size_t cin = 3;
    for (std::size_t i = 0; i < config_.channel_widths.size(); ++i) {
      const std::size_t cout = config_.width(i);
      layers_.emplace_back("backbone.conv" + std::to_string(i), cin, cout, 3, true);
      cin = cout;
    }
  }

  const BackboneConfig& config() const { return config_; }
  std::size_t feature_channels() const { return config_.feature_channels(); }

  // [3,H,W] -> [C,H/2,W/2]
  Tensor<T> forward(const Tensor<T>& image) const {
    if (image.rank() != 3 || image.dim(0) != 3)
      throw diff::ShapeError("backbone: image must be [3,H,W], got " + diff::to_string(image.shape()));
    if (image.dim(1) % 4 != 0 || image.dim(2) % 4 != 0)
      throw diff::ShapeError("backbone: image extents must be divisible by 4, got " +
                             diff::to_string(image.shape()));
    auto x = layers_[0](image);
    x = layers_[1](x);
    x = diff::maxpool2(x);
    for (std::size_t i = 2; i < 8; ++i) x = layers_[i](x);
    x = diff::maxpool2(x);
    x = diff::upsample_bilinear2(x);
    x = layers_[8](x);
    return layers_[9](x);
  }

  std::vector<Conv2dLayer<T>>& layers() { return layers_; }
  const std::vector<Conv2dLayer<T>>& layers() const { return layers_; }

 private:
  BackboneConfig config_;
  std::vector<Conv2dLayer<T>> layers_;
};

template <class T>
class Kem {
 public:
  Kem(KemConfig config, std::size_t feature_channels) : config_(std::move(config)), c_(feature_channels) {
    config_.validate();
    const auto w = [&](std::size_t v) { return scaled_width(v, config_.width_scale); };
    const std::size_t n_stacks = config_.shared_trunk ? 1 : 3;
    for (std::size_t s = 0; s < config_.stages; ++s) {
      for (std::size_t b = 0; b < n_stacks; ++b) {
        const std::string prefix = "kem.s" + std::to_string(s + 1) + "." +
                                   (config_.shared_trunk ? std::string("shared") : kBranchNames[b]);
        std::vector<Conv2dLayer<T>> stack;
        const std::size_t head = config_.shared_trunk ? 4 : kBranchChannels[b];
        std::size_t cin = s == 0 ? c_ : c_ + 4;
        const auto& widths = s == 0 ? config_.first_widths : config_.refine_widths;
        const std::size_t k = s == 0 ? config_.first_kernel : config_.refine_kernel;
        for (std::size_t i = 0; i < widths.size(); ++i) {
          const bool last_body = i + 1 == widths.size();
          const std::size_t cout = w(widths[i]);
          stack.emplace_back(prefix + ".conv" + std::to_string(i), cin, cout, last_body ? 1 : k, true);
          cin = cout;
        }
        stack.emplace_back(prefix + ".head", cin, head, 1, false);
        stacks_.push_back(std::move(stack));
      }
    }
  }

  const KemConfig& config() const { return config_; }
  std::size_t stages() const { return config_.stages; }

  // Input channels seen by stage s (0-based).
  std::size_t stage_input_channels(std::size_t s) const { return s == 0 ? c_ : c_ + 4; }

  std::vector<StageOutputs<T>> forward(const Tensor<T>& features) const {
    if (features.rank() != 3 || features.dim(0) != c_)
      throw diff::ShapeError("kem: expected " + std::to_string(c_) + " feature channels, got " +
                             diff::to_string(features.shape()));
    std::vector<StageOutputs<T>> outs;
    const std::size_t n_stacks = config_.shared_trunk ? 1 : 3;
    for (std::size_t s = 0; s < config_.stages; ++s) {
      Tensor<T> input = features;
      if (s > 0) {
        const auto& prev = outs.back();
        input = diff::concat_channels<T>({features, prev.plant, prev.line, prev.vectors});
      }
      std::vector<Tensor<T>> heads;
      for (std::size_t b = 0; b < n_stacks; ++b) {
        Tensor<T> x = input;
        for (const auto& layer : stacks_[s * n_stacks + b]) x = layer(x);
        heads.push_back(x);
      }
      if (config_.shared_trunk) {
        outs.push_back({diff::slice_channels(heads[0], 0, 1), diff::slice_channels(heads[0], 1, 1),
                        diff::slice_channels(heads[0], 2, 2)});
      } else {
        outs.push_back({heads[0], heads[1], heads[2]});
      }
    }
    return outs;
  }

  std::vector<std::vector<Conv2dLayer<T>>>& stacks() { return stacks_; }
  const std::vector<std::vector<Conv2dLayer<T>>>& stacks() const { return stacks_; }

 private:
  KemConfig config_;
  std::size_t c_;
  std::vector<std::vector<Conv2dLayer<T>>> stacks_;  // stage-major, then branch
};

// Sum over stages of the summed squared errors of the three estimates.
template <class T>
Tensor<T> kem_loss(const std::vector<StageOutputs<T>>& outputs, const std::vector<Tensor<T>>& plant_gt,
                   const std::vector<Tensor<T>>& line_gt, const Tensor<T>& vector_gt) {
  if (outputs.size() != plant_gt.size() || outputs.size() != line_gt.size())
    throw std::invalid_argument("kem_loss: " + std::to_string(outputs.size()) + " stage outputs but " +
                                std::to_string(plant_gt.size()) + " ground-truth stages");
  Tensor<T> total;
  for (std::size_t t = 0; t < outputs.size(); ++t) {
    auto stage = diff::add(diff::add(diff::mse_loss(outputs[t].plant, plant_gt[t]),
                                     diff::mse_loss(outputs[t].line, line_gt[t])),
                           diff::mse_loss(outputs[t].vectors, vector_gt));
    total = t == 0 ? stage : diff::add(total, stage);
  }
  return total;
}

template <class T>
class EcmHead {
 public:
  EcmHead(EcmConfig config, std::size_t feature_channels) : config_(std::move(config)), c_(feature_channels) {
    if (config_.samples < 1) throw std::invalid_argument("ecm: sample count must be >= 1");
    if (config_.kernel % 2 == 0) throw std::invalid_argument("ecm: kernel must be odd");
    std::size_t cin = c_;
    for (std::size_t i = 0; i < config_.widths.size(); ++i) {
      const std::size_t cout = scaled_width(config_.widths[i], config_.width_scale);
      convs_.emplace_back("ecm.conv" + std::to_string(i), cin, cout, config_.kernel);
      cin = cout;
    }
    dense_.emplace_back("ecm.dense", cin * config_.samples, 1);
  }

  const EcmConfig& config() const { return config_; }
  std::size_t samples() const { return config_.samples; }
  std::size_t feature_channels() const { return c_; }

  // [C,L] -> [1] or [B,C,L] -> [B,1]; outputs are probabilities.
  Tensor<T> forward(const Tensor<T>& features) const {
    const bool batched = features.rank() == 3;
    const std::size_t len = features.dim(batched ? 2 : 1);
    if (len != config_.samples)
      throw diff::ShapeError("ecm: expected " + std::to_string(config_.samples) + " samples per edge, got " +
                             std::to_string(len));
    Tensor<T> x = features;
    for (const auto& c : convs_) x = c(x);
    const std::size_t flat = x.dim(batched ? 1 : 0) * len;  // channel-major flatten
    x = batched ? diff::reshape(x, {features.dim(0), flat}) : diff::reshape(x, {flat});
    return diff::sigmoid(dense_[0](x));
  }

  std::vector<Conv1dLayer<T>>& convs() { return convs_; }
  DenseLayer<T>& dense() { return dense_[0]; }
  const std::vector<Conv1dLayer<T>>& convs() const { return convs_; }
  const DenseLayer<T>& dense() const { return dense_[0]; }

 private:
  EcmConfig config_;
  std::size_t c_;
  std::vector<Conv1dLayer<T>> convs_;
  std::vector<DenseLayer<T>> dense_;
};

// Backbone plus estimation module; the part trained with the map losses.
template <class T>
class KemModel {
 public:
  KemModel(BackboneConfig bb, KemConfig kem) : backbone_(std::move(bb)), kem_(std::move(kem), backbone_.feature_channels()) {}

  Backbone<T>& backbone() { return backbone_; }
  const Backbone<T>& backbone() const { return backbone_; }
  Kem<T>& kem() { return kem_; }
  const Kem<T>& kem() const { return kem_; }

  struct Output {
    Tensor<T> features;
    std::vector<StageOutputs<T>> stages;
  };

  Output forward(const Tensor<T>& image) const {
    Output out;
    out.features = backbone_.forward(image);
    out.stages = kem_.forward(out.features);
    return out;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : backbone_.layers()) out.insert(out.end(), {&l.weight, &l.bias});
    for (auto& stack : kem_.stacks())
      for (auto& l : stack) out.insert(out.end(), {&l.weight, &l.bias});
    return out;
  }

  std::vector<const Param<T>*> params() const {
    std::vector<const Param<T>*> out;
    for (const auto& l : backbone_.layers()) out.insert(out.end(), {&l.weight, &l.bias});
    for (const auto& stack : kem_.stacks())
      for (const auto& l : stack) out.insert(out.end(), {&l.weight, &l.bias});
    return out;
  }

  // output_gain shrinks the last layer of every estimation stack; small
  // values start all maps near zero.
  void init(std::uint64_t seed, double output_gain = 1.0) {
    std::mt19937_64 rng(seed);
    for (auto& l : backbone_.layers()) init_layer(l, rng);
    for (auto& stack : kem_.stacks()) {
      for (auto& l : stack) init_layer(l, rng);
      for (auto& v : stack.back().weight.tensor.data()) v = static_cast<T>(v * output_gain);
    }
  }

 private:
  static void init_layer(Conv2dLayer<T>& l, std::mt19937_64& rng) {
    // linear heads use unit gain, rectified layers He gain
    diff::he_init(l.weight, l.fan_in(), rng, l.relu ? 1.0 : std::sqrt(0.5));
    std::fill(l.bias.tensor.data().begin(), l.bias.tensor.data().end(), T{0});
  }

  Backbone<T> backbone_;
  Kem<T> kem_;
};

template <class T>
std::vector<Param<T>*> head_params(EcmHead<T>& head) {
  std::vector<Param<T>*> out;
  for (auto& c : head.convs()) out.insert(out.end(), {&c.weight, &c.bias});
  out.insert(out.end(), {&head.dense().weight, &head.dense().bias});
  return out;
}

template <class T>
std::vector<const Param<T>*> head_params(const EcmHead<T>& head) {
  std::vector<const Param<T>*> out;
  for (const auto& c : head.convs()) out.insert(out.end(), {&c.weight, &c.bias});
  out.insert(out.end(), {&head.dense().weight, &head.dense().bias});
  return out;
}

template <class T>
void init_head(EcmHead<T>& head, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& c : head.convs()) {
    diff::he_init(c.weight, c.fan_in(), rng);
    std::fill(c.bias.tensor.data().begin(), c.bias.tensor.data().end(), T{0});
  }
  diff::he_init(head.dense().weight, head.dense().weight.tensor.dim(1), rng, std::sqrt(0.5));
  std::fill(head.dense().bias.tensor.data().begin(), head.dense().bias.tensor.data().end(), T{0});
}

}  // namespace rowgraph::net
