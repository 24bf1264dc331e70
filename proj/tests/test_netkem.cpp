#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rowgraph/diff/gradcheck.hpp"
#include "rowgraph/eval/metrics.hpp"
#include "rowgraph/fieldgen/render.hpp"
#include "rowgraph/linegraph/graph.hpp"
#include "rowgraph/net/train.hpp"

using namespace rowgraph;
using namespace rowgraph::net;
using diff::Shape;

namespace {

BackboneConfig tiny_backbone() {
  BackboneConfig b;
  b.width_scale = 0.0625;  // 8 feature channels
  return b;
}

KemConfig tiny_kem(std::size_t stages, bool shared = false) {
  KemConfig k;
  k.stages = stages;
  k.width_scale = 0.0625;
  k.shared_trunk = shared;
  return k;
}

fieldgen::Patch small_patch(std::uint64_t seed, std::size_t size = 32) {
  fieldgen::GenConfig c;
  c.width = c.height = size;
  c.rows = 2;
  c.plants_per_row = size / 10;
  c.row_spacing_px = 14;
  c.plant_spacing_px = 10;
  c.gap_probability = 0;
  c.weed_density = 0;
  c.seed = seed;
  fieldgen::Patch p;
  p.id = "p" + std::to_string(seed);
  p.scene = fieldgen::generate_scene(c);
  p.image = fieldgen::render_rgb(p.scene, c);
  return p;
}

template <class M>
void zero_all(M& model) {
  for (auto* p : model.params()) std::fill(p->tensor.data().begin(), p->tensor.data().end(), 0.0f);
}

}  // namespace

TEST(Backbone, ResolutionAndChannels) {
  Backbone<float> full(BackboneConfig{});
  EXPECT_EQ(full.feature_channels(), 128u);
  Backbone<float> quarter([] {
    BackboneConfig b;
    b.width_scale = 0.25;
    return b;
  }());
  EXPECT_EQ(quarter.feature_channels(), 32u);
  Backbone<float> tiny(tiny_backbone());
  EXPECT_EQ(tiny.forward(fieldgen::Image({3, 64, 64})).shape(), (Shape{8, 32, 32}));
  EXPECT_EQ(tiny.forward(fieldgen::Image({3, 20, 12})).shape(), (Shape{8, 10, 6}));
  EXPECT_THROW(tiny.forward(fieldgen::Image({3, 18, 16})), diff::ShapeError);
  EXPECT_THROW(tiny.forward(fieldgen::Image({1, 16, 16})), diff::ShapeError);
  BackboneConfig bad;
  bad.width_scale = 0.03;
  EXPECT_THROW(Backbone<float>{bad}, std::invalid_argument);
}

TEST(Backbone, FullWidthOn256) {
  BackboneConfig b;
  KemModel<float> m(b, KemConfig{});
  // shape only; weights are zero so this is cheap enough to keep
  EXPECT_EQ(m.backbone().config().feature_channels(), 128u);
  EXPECT_EQ(m.kem().stage_input_channels(1), 132u);
}

TEST(Kem, StageCountsShapesAndChannels) {
  for (std::size_t T : {1u, 2u, 3u}) {
    for (bool shared : {false, true}) {
      KemModel<float> m(tiny_backbone(), tiny_kem(T, shared));
      m.init(1);
      const auto out = m.forward(fieldgen::Image({3, 24, 16}, 0.3f));
      ASSERT_EQ(out.stages.size(), T);
      for (const auto& s : out.stages) {
        EXPECT_EQ(s.plant.shape(), (Shape{1, 12, 8}));
        EXPECT_EQ(s.line.shape(), (Shape{1, 12, 8}));
        EXPECT_EQ(s.vectors.shape(), (Shape{2, 12, 8}));
      }
      for (std::size_t t = 1; t < T; ++t) EXPECT_EQ(m.kem().stage_input_channels(t), 8u + 4u);
      const std::size_t per_stage = shared ? 1 : 3;
      EXPECT_EQ(m.kem().stacks().size(), T * per_stage);
      if (T > 1) EXPECT_EQ(m.kem().stacks()[per_stage].front().in_channels(), 12u);
    }
  }
}

TEST(Kem, ZeroWeightsGiveZeroOutputs) {
  KemModel<float> m(tiny_backbone(), tiny_kem(2));
  zero_all(m);
  const auto out = m.forward(fieldgen::Image({3, 16, 16}, 0.7f));
  for (const auto& s : out.stages)
    for (const auto* t : {&s.plant, &s.line, &s.vectors})
      for (float v : t->data()) EXPECT_EQ(v, 0.0f);
}

TEST(KemLoss, ZeroAdditiveAndQuadratic) {
  const auto p = small_patch(3);
  const auto s = make_kem_sample(p, 2);
  KemModel<float> m(tiny_backbone(), tiny_kem(2));
  m.init(4);
  const auto out = m.forward(p.image);

  std::vector<StageOutputs<float>> exact;
  for (std::size_t t = 0; t < 2; ++t) exact.push_back({s.plant_gt[t], s.line_gt[t], s.field});
  EXPECT_EQ(kem_loss(exact, s.plant_gt, s.line_gt, s.field).item(), 0.0f);

  const double total = kem_loss(out.stages, s.plant_gt, s.line_gt, s.field).item();
  double parts = 0;
  for (std::size_t t = 0; t < 2; ++t)
    parts += kem_loss<float>({out.stages[t]}, {s.plant_gt[t]}, {s.line_gt[t]}, s.field).item();
  EXPECT_NEAR(total, parts, 1e-4 * total);

  // gt + 2 * (pred - gt) doubles every residual
  std::vector<StageOutputs<float>> doubled;
  for (std::size_t t = 0; t < 2; ++t) {
    auto twice = [](const diff::Tensor<float>& pred, const diff::Tensor<float>& gt) {
      diff::Tensor<float> r(pred.shape());
      for (std::size_t i = 0; i < r.size(); ++i) r[i] = gt[i] + 2 * (pred[i] - gt[i]);
      return r;
    };
    doubled.push_back({twice(out.stages[t].plant, s.plant_gt[t]), twice(out.stages[t].line, s.line_gt[t]),
                       twice(out.stages[t].vectors, s.field)});
  }
  EXPECT_NEAR(kem_loss(doubled, s.plant_gt, s.line_gt, s.field).item(), 4 * total, 1e-3 * total);
  EXPECT_THROW(kem_loss<float>({out.stages[0]}, s.plant_gt, s.line_gt, s.field), std::invalid_argument);
}

TEST(KemLoss, GradientMatchesFiniteDifferences) {
  BackboneConfig b;
  b.channel_widths = {3, 3, 4, 4, 4, 4, 4, 4, 4, 8};
  KemConfig k;
  k.stages = 2;
  k.first_widths = {3, 3, 3, 4};
  k.refine_widths = {3, 3, 3, 3, 3, 3};
  k.refine_kernel = 3;
  KemModel<double> m(b, k);
  m.init(9);
  const auto p = small_patch(5, 16);
  const auto gt = fieldgen::make_ground_truth(p.scene, 2);
  auto cast = [](const diff::Tensor<float>& t) {
    diff::Tensor<double> d(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) d[i] = t[i];
    return d;
  };
  const std::vector<diff::Tensor<double>> pg{cast(gt.plant_maps[0]), cast(gt.plant_maps[1])},
      lg{cast(gt.line_maps[0]), cast(gt.line_maps[1])};
  const auto vg = cast(gt.displacement_field);
  // noise image: flat rendered soil makes max-pool ties everywhere
  diff::Tensor<double> img(p.image.shape());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (auto& v : img.data()) v = u(rng);
  // only the stage-2 head and one backbone layer to keep runtime small
  std::vector<diff::Tensor<double>> inputs{m.kem().stacks().back().back().weight.tensor,
                                           m.backbone().layers()[9].weight.tensor};
  const auto r = diff::grad_check(
      [&] { return kem_loss(m.forward(img).stages, pg, lg, vg); }, inputs);
  EXPECT_LT(r.max_relative_error, 1e-4);
  EXPECT_LE(r.skipped * 10, r.checked + r.skipped);
}

TEST(TrainKem, TwoStepsPerEpochOnEightPatches) {
  std::vector<KemSample> set;
  for (std::uint64_t s = 0; s < 8; ++s) set.push_back(make_kem_sample(small_patch(s, 16), 1));
  KemModel<float> m(tiny_backbone(), tiny_kem(1));
  m.init(1);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.sgd.learning_rate = 1e-4;
  const auto h = train_kem(m, set, {}, cfg);
  ASSERT_EQ(h.epochs.size(), 1u);
  EXPECT_EQ(h.epochs[0].steps, 2u);
  EXPECT_THROW(train_kem(m, {}, {}, cfg), std::invalid_argument);
}

TEST(TrainKem, SeededHistoryAndWeightsReproduce) {
  std::vector<KemSample> set;
  for (std::uint64_t s = 0; s < 5; ++s) set.push_back(make_kem_sample(small_patch(s, 16), 2));
  auto run = [&] {
    KemModel<float> m(tiny_backbone(), tiny_kem(2));
    m.init(2);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.sgd.learning_rate = 1e-4;
    cfg.sgd.clip_norm = 100;
    const auto h = train_kem(m, set, {set[0]}, cfg);
    std::vector<double> out;
    for (const auto& e : h.epochs) out.insert(out.end(), {e.train_loss, e.val_loss, e.grad_norm});
    for (const auto* p : m.params()) out.insert(out.end(), p->tensor.data().begin(), p->tensor.data().end());
    return out;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]) << "index " << i;
}

TEST(TrainKem, DivergenceIsReported) {
  std::vector<KemSample> set{make_kem_sample(small_patch(1, 16), 1)};
  KemModel<float> m(tiny_backbone(), tiny_kem(1));
  m.init(1);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.sgd.learning_rate = 0.9;
  cfg.sgd.momentum = 0.9;
  EXPECT_THROW(train_kem(m, set, {}, cfg), DivergenceError);
}

TEST(TrainKem, RepeatedPatchLossNonIncreasing) {
  std::vector<KemSample> set{make_kem_sample(small_patch(2, 16), 1)};
  KemModel<float> m(tiny_backbone(), tiny_kem(1));
  m.init(3);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.sgd.learning_rate = 1e-3;
  cfg.sgd.momentum = 0;
  cfg.sgd.clip_norm = 1;
  const auto h = train_kem(m, set, {}, cfg);
  for (std::size_t i = 1; i < h.epochs.size(); ++i)
    EXPECT_LE(h.epochs[i].train_loss, h.epochs[i - 1].train_loss * (1 + 1e-6)) << i;
  EXPECT_LT(h.epochs.back().train_loss, h.epochs.front().train_loss);
}

TEST(TrainKem, OverfitsOnePatch) {
  const auto p = small_patch(11, 32);
  std::vector<KemSample> set{make_kem_sample(p, 1)};
  KemModel<float> m(tiny_backbone(), tiny_kem(1));
  m.init(5);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.sgd.learning_rate = 2e-3;
  cfg.sgd.clip_norm = 10;
  train_kem(m, set, {}, cfg);
  diff::NoGradGuard g;
  const auto plant = m.forward(p.image).stages.back().plant;
  std::vector<linegraph::Vec2> pred, lab;
  for (const auto& v : linegraph::detect_peaks(plant)) pred.push_back(v.position);
  for (const auto& q : p.scene.plants()) lab.push_back({q.x, q.y});
  const auto match = eval::match_plants(pred, lab);
  EXPECT_GE(static_cast<double>(match.tp), 0.9 * static_cast<double>(lab.size()));
}

TEST(EcmHead, RangeZeroAndWrongLength) {
  EcmConfig cfg;
  cfg.width_scale = 0.0625;
  cfg.samples = 6;
  EcmHead<float> head(cfg, 8);
  EXPECT_EQ(head.forward(diff::Tensor<float>({8, 6}, 3.0f)).item(), 0.5f);
  init_head(head, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<float> n(0, 5);
  diff::Tensor<float> x({5, 8, 6});
  for (auto& v : x.data()) v = n(rng);
  const auto p = head.forward(x);
  EXPECT_EQ(p.shape(), (Shape{5, 1}));
  for (float v : p.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  EXPECT_THROW(head.forward(diff::Tensor<float>({8, 5})), diff::ShapeError);
  EXPECT_THROW(EcmHead<float>([] {
                 EcmConfig c;
                 c.samples = 0;
                 return c;
               }(), 8),
               std::invalid_argument);
}

TEST(EcmHead, GradientMatchesFiniteDifferences) {
  EcmConfig cfg;
  cfg.widths = {4, 5, 6};
  cfg.samples = 4;
  EcmHead<double> head(cfg, 3);
  init_head(head, 7);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  diff::Tensor<double> x({2, 3, 4});
  for (auto& v : x.data()) v = u(rng);
  std::vector<diff::Tensor<double>> inputs{x};
  for (auto* p : head_params(head)) inputs.push_back(p->tensor);
  const auto r = diff::grad_check([&] { return diff::bce_loss(head.forward(inputs[0]), {1.0, 0.0}); }, inputs);
  EXPECT_LT(r.max_relative_error, 1e-4);
}

TEST(EdgeLabels, Examples) {
  fieldgen::PlantationScene one;
  one.width = one.height = 64;
  one.lines.push_back({0, {{1, 1}, {10, 1}, {20, 1}}});
  auto e = label_edges(one);
  ASSERT_EQ(e.size(), 3u);
  for (const auto& x : e) EXPECT_TRUE(x.positive);

  fieldgen::PlantationScene two;
  two.width = two.height = 64;
  two.lines.push_back({0, {{1, 1}, {10, 1}}});
  two.lines.push_back({1, {{1, 20}, {10, 20}}});
  e = label_edges(two);
  ASSERT_EQ(e.size(), 6u);
  EXPECT_EQ(std::count_if(e.begin(), e.end(), [](const EdgeExample& x) { return x.positive; }), 2);

  fieldgen::PlantationScene single;
  single.lines.push_back({0, {{3, 3}}});
  EXPECT_TRUE(label_edges(single).empty());
}

TEST(EdgeLabels, NegativeSubsampling) {
  std::vector<EdgeExample> edges;
  for (int k = 0; k < 4; ++k) edges.push_back({{0, 0}, {1, double(k)}, true});
  for (int k = 0; k < 40; ++k) edges.push_back({{0, 0}, {2, double(k)}, false});
  std::mt19937_64 rng(1);
  const auto kept = subsample_negatives(edges, 3, rng);
  EXPECT_EQ(kept.size(), 16u);
  EXPECT_EQ(std::count_if(kept.begin(), kept.end(), [](const EdgeExample& x) { return x.positive; }), 4);
  std::mt19937_64 a(9), b(9);
  const auto ka = subsample_negatives(edges, 3, a), kb = subsample_negatives(edges, 3, b);
  for (std::size_t i = 0; i < ka.size(); ++i) EXPECT_EQ(ka[i].b, kb[i].b);
  std::mt19937_64 c(1);
  EXPECT_EQ(subsample_negatives(edges, 100, c).size(), 44u);  // capped by what exists
}

TEST(TrainEcm, KemStaysFrozenAndLossDrops) {
  KemModel<float> kem(tiny_backbone(), tiny_kem(1));
  kem.init(1);
  std::vector<fieldgen::Patch> patches;
  for (std::uint64_t s = 0; s < 4; ++s) patches.push_back(small_patch(20 + s, 32));
  std::vector<std::vector<float>> before;
  for (const auto* p : kem.params()) before.push_back(p->tensor.values());
  std::vector<EcmSample> set;
  for (const auto& p : patches) set.push_back(make_ecm_sample(kem, p));
  EcmConfig cfg;
  cfg.width_scale = 0.0625;
  cfg.samples = 8;
  EcmHead<float> head(cfg, 8);
  init_head(head, 1);
  EcmTrainConfig tc;
  tc.train.epochs = 15;
  tc.train.sgd.learning_rate = 1e-2;
  const auto h = train_ecm(head, set, set, tc);
  EXPECT_EQ(h.epochs[0].steps, 1u);
  EXPECT_LT(h.best_val_loss, h.epochs.front().val_loss);
  std::size_t i = 0;
  for (const auto* p : kem.params()) EXPECT_EQ(p->tensor.values(), before[i++]);
  // nothing on the tape reaches the frozen features
  EXPECT_FALSE(set[0].features.requires_grad());
}
