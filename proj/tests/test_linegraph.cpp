#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "rowgraph/linegraph/classify.hpp"
#include "rowgraph/linegraph/graph.hpp"
#include "oracles.hpp"

using namespace rowgraph;
using namespace rowgraph::linegraph;

namespace {

Map gaussian_map(std::size_t h, std::size_t w, const std::vector<std::pair<double, double>>& centers, double sigma) {
  Map m({1, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double v = 0;
      for (auto [cx, cy] : centers)
        v = std::max(v, std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2 * sigma * sigma)));
      m[y * w + x] = static_cast<float>(v);
    }
  return m;
}

}  // namespace

TEST(Peaks, SingleGaussianGivesOneVertexAtDoubledPosition) {
  const auto m = gaussian_map(32, 40, {{13, 9}}, 2.0);
  const auto v = detect_peaks(m);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].position, (Vec2{26, 18}));
  EXPECT_DOUBLE_EQ(v[0].confidence, 1.0);
}

TEST(Peaks, UniformMapHasNone) {
  EXPECT_TRUE(detect_peaks(Map({1, 8, 8}, 0.9f)).empty());
  EXPECT_TRUE(detect_peaks(Map({1, 8, 8}, 0.0f)).empty());
  EXPECT_THROW(detect_peaks(Map({8, 8})), diff::ShapeError);
}

TEST(Peaks, TwoGaussiansMatchScanOracle) {
  const auto m = gaussian_map(40, 64, {{10, 20}, {50, 20}}, 2.0);
  const auto v = detect_peaks(m, 0.15, 1.0);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(oracle::peak_set(v), oracle::scan_peaks(m, 0.15, 1.0));
}

TEST(Peaks, RandomMapsMatchScanOracle) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    Map m({1, 12 + trial % 7, 9 + trial % 5});
    for (auto& x : m.data()) x = u(rng);
    // some plateaus: strict maxima must reject equal neighbours
    if (trial % 3 == 0) m[5] = m[6] = 0.99f;
    for (double delta : {1.0, 3.0, 7.0})
      EXPECT_EQ(oracle::peak_set(detect_peaks(m, 0.15, delta)), oracle::scan_peaks(m, 0.15, delta)) << trial;
  }
}

TEST(Peaks, OrderedStrongestFirstAndSeparated) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  Map m({1, 30, 30});
  for (auto& x : m.data()) x = u(rng);
  const auto v = detect_peaks(m, 0.15, 5.0);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_GE(v[i - 1].confidence, v[i].confidence);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_GT(v[i].confidence, 0.15);
    for (std::size_t j = i + 1; j < v.size(); ++j)
      EXPECT_GE(std::hypot(v[i].position.x - v[j].position.x, v[i].position.y - v[j].position.y), 5.0);
  }
}

TEST(Graph, CompleteEdgeCounts) {
  for (auto [n, e] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 0}, {3, 3}, {10, 45}, {0, 0}}) {
    const auto g = build_complete_graph(std::vector<Vertex>(n));
    EXPECT_EQ(g.edges.size(), e);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& ed : g.edges) {
      EXPECT_LT(ed.i, ed.j);
      EXPECT_TRUE(seen.insert({ed.i, ed.j}).second);
    }
  }
}

TEST(Sampling, EdgePoints) {
  const auto mid = sample_edge_points({2, 4}, {6, 10}, 1);
  ASSERT_EQ(mid.size(), 1u);
  EXPECT_EQ(mid[0], (Vec2{4, 7}));
  const auto col = sample_edge_points({0, 0}, {0, 17}, 16);
  for (std::size_t l = 0; l < 16; ++l) {
    EXPECT_DOUBLE_EQ(col[l].x, 0.0);
    EXPECT_NEAR(col[l].y, static_cast<double>(l + 1), 1e-12);
  }
  EXPECT_THROW(sample_edge_points({0, 0}, {1, 1}, 0), std::invalid_argument);
  EXPECT_THROW(sample_edge_points({1, 1}, {1, 1}, 4), std::invalid_argument);
}

TEST(Sampling, BilinearMap) {
  Map c({1, 5, 5}, 0.3f);
  EXPECT_NEAR(sample_map(c, {3.7, 1.1}), 0.3, 1e-7);
  Map m({1, 2, 2}, std::vector<float>{0, 1, 0.25f, 0.5f});
  EXPECT_DOUBLE_EQ(sample_map(m, {2, 0}), 1.0);   // even coordinates hit stored cells
  EXPECT_DOUBLE_EQ(sample_map(m, {0, 2}), 0.25);
  EXPECT_DOUBLE_EQ(sample_map(m, {1, 0}), 0.5);   // midpoint of 0 and 1
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-3, 12);
  Map r({2, 6, 5});
  for (auto& v : r.data()) v = static_cast<float>(u(rng));
  for (int k = 0; k < 200; ++k) {
    const Vec2 p{u(rng), u(rng)};
    for (std::size_t ch : {0u, 1u}) EXPECT_NEAR(sample_map(r, p, ch), oracle::bilinear(r, p.x, p.y, ch), 1e-9);
  }
}

TEST(Displacement, AlignedPerpendicularAndZero) {
  // uniform unit field along +x
  Map f({2, 20, 20}, 0.0f);
  for (std::size_t i = 0; i < 400; ++i) f[i] = 1.0f;
  EXPECT_NEAR(displacement_probability({4, 10}, {30, 10}, f), 1.0, 1e-6);
  EXPECT_NEAR(displacement_probability({30, 10}, {4, 10}, f), 1.0, 1e-6);  // either orientation
  EXPECT_NEAR(displacement_probability({10, 4}, {10, 30}, f), 0.0, 1e-9);
  EXPECT_EQ(displacement_probability({4, 10}, {30, 20}, Map({2, 20, 20})), 0.0);
  EXPECT_THROW(displacement_probability({0, 0}, {2, 2}, Map({1, 4, 4})), diff::ShapeError);
}

TEST(Displacement, MatchesBruteForceOnRandomFields) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-1, 1), pos(0, 60);
  for (int k = 0; k < 100; ++k) {
    Map f({2, 32, 32});
    for (auto& v : f.data()) v = static_cast<float>(u(rng));
    const Vec2 a{pos(rng), pos(rng)}, b{pos(rng), pos(rng)};
    const std::size_t L = 1 + k % 20;
    EXPECT_NEAR(displacement_probability(a, b, f, L), oracle::displacement_probability(f, a, b, L), 1e-9);
  }
}

TEST(PixelProbability, RidgeZeroAndBruteForce) {
  EXPECT_NEAR(pixel_probability({0, 0}, {30, 30}, Map({1, 20, 20}, 1.0f)), 1.0, 1e-12);
  EXPECT_EQ(pixel_probability({0, 0}, {30, 30}, Map({1, 20, 20})), 0.0);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(-0.2, 1.2), pos(-5, 70);
  for (int k = 0; k < 100; ++k) {
    Map m({1, 32, 32});
    for (auto& v : m.data()) v = static_cast<float>(u(rng));
    const Vec2 a{pos(rng), pos(rng)}, b{pos(rng), pos(rng)};
    const std::size_t L = 1 + k % 20;
    EXPECT_NEAR(pixel_probability(a, b, m, L), oracle::pixel_probability(m, a, b, L), 1e-9);
  }
}

TEST(Visual, ZeroHeadIsHalfAndDeterministic) {
  net::EcmConfig cfg;
  cfg.width_scale = 0.0625;
  cfg.samples = 8;
  net::EcmHead<float> head(cfg, 8);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(-2, 2);
  Map feats({8, 16, 16});
  for (auto& v : feats.data()) v = u(rng);
  EXPECT_DOUBLE_EQ(visual_probability(feats, {1, 2}, {20, 25}, head), 0.5);
  net::init_head(head, 3);
  const double p = visual_probability(feats, {1, 2}, {20, 25}, head);
  EXPECT_GT(p, 0.0);
  EXPECT_LT(p, 1.0);
  EXPECT_EQ(visual_probability(feats, {1, 2}, {20, 25}, head), p);
  // batched path agrees with the single-edge path bit for bit
  const auto many = visual_probabilities(feats, {{{3, 3}, {9, 1}}, {{1, 2}, {20, 25}}}, head, 1);
  EXPECT_EQ(many[1], p);
  EXPECT_THROW(visual_probability(Map({4, 16, 16}), {1, 2}, {20, 25}, head), diff::ShapeError);
}

TEST(Gate, TruthTable) {
  EXPECT_TRUE(classify_edge({0.6, 0.6, 0.6}));
  EXPECT_FALSE(classify_edge({0.6, 0.6, 0.4}));
  EXPECT_FALSE(classify_edge({0.5, 0.9, 0.9}));
  EXPECT_FALSE(classify_edge({0.9, 0.5, 0.9}));
  EXPECT_FALSE(classify_edge({0.9, 0.9, 0.5}));
  EXPECT_TRUE(classify_edge({0.6, 0.1, 0.1}, Gate::visual_only()));
  EXPECT_TRUE(classify_edge({0.6, 0.6, 0.1}, Gate::visual_vector()));
  EXPECT_FALSE(classify_edge({0.6, 0.1, 0.6}, Gate::visual_vector()));
  EXPECT_TRUE(classify_edge({0.6, 0.1, 0.6}, Gate::visual_line()));
}

TEST(Gate, MonotoneInEveryScore) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 2000; ++k) {
    EdgeScores s{u(rng), u(rng), u(rng)};
    if (!classify_edge(s)) continue;
    EdgeScores up = s;
    up.visual = std::min(1.0, up.visual + u(rng));
    up.vector = std::min(1.0, up.vector + u(rng));
    up.pixel = std::min(1.0, up.pixel + u(rng));
    EXPECT_TRUE(classify_edge(up));
  }
}

TEST(Lines, Assembly) {
  auto g = build_complete_graph(std::vector<Vertex>(5));
  EXPECT_TRUE(assemble_lines(g).lines.empty());
  for (std::size_t k = 0; k < 5; ++k) g.vertices[k].position = {static_cast<double>(10 * k), 3.0};
  for (auto& e : g.edges)
    e.accepted = (e.i == 0 && e.j == 1) || (e.i == 1 && e.j == 2) || (e.i == 3 && e.j == 4);
  const auto lines = assemble_lines(g).lines;
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0].vertices, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(lines[1].vertices, (std::vector<std::size_t>{3, 4}));
  // vertices of a component are disjoint from other lines, isolated vertex 3/4 excluded elsewhere
  std::set<std::size_t> all;
  for (const auto& l : lines)
    for (auto v : l.vertices) EXPECT_TRUE(all.insert(v).second);
}

TEST(Lines, ComponentsMatchEdgeConnectivityOracle) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = build_complete_graph(std::vector<Vertex>(9));
    for (std::size_t k = 0; k < 9; ++k) g.vertices[k].position = {u(rng) * 100, u(rng) * 100};
    for (auto& e : g.edges) e.accepted = u(rng) < 0.12;
    const auto lines = assemble_lines(g).lines;
    const auto want = oracle::components(g);
    std::set<std::vector<std::size_t>> got(want.begin(), want.end());
    std::set<std::vector<std::size_t>> have;
    for (const auto& l : lines) have.insert(l.vertices);
    EXPECT_EQ(have, got);
  }
}

TEST(Raster, BresenhamCases) {
  Mask m(8, 8);
  draw_segment(m, {0, 0}, {0, 5});
  EXPECT_EQ(m.count(), 6u);
  for (std::size_t y = 0; y <= 5; ++y) EXPECT_EQ(m.at(y, 0), 1);
  Mask d(8, 8);
  draw_segment(d, {0, 0}, {3, 3});
  EXPECT_EQ(d.count(), 4u);
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(d.at(k, k), 1);
  EXPECT_EQ(rasterize_edges(build_complete_graph(std::vector<Vertex>(4)), 8, 8).count(), 0u);
  Mask o(4, 4);
  draw_segment(o, {-3, 1}, {10, 1});  // clipped, not crashing
  EXPECT_EQ(o.count(), 4u);
}

TEST(Raster, EightConnectedAndEndpointsIncluded) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> u(0, 39);
  for (int k = 0; k < 200; ++k) {
    const Vec2 a{double(u(rng)), double(u(rng))}, b{double(u(rng)), double(u(rng))};
    Mask m(40, 40);
    draw_segment(m, a, b);
    EXPECT_EQ(m.at(std::size_t(a.y), std::size_t(a.x)), 1);
    EXPECT_EQ(m.at(std::size_t(b.y), std::size_t(b.x)), 1);
    EXPECT_EQ(m.count(), static_cast<std::size_t>(std::max(std::abs(a.x - b.x), std::abs(a.y - b.y))) + 1);
  }
}
