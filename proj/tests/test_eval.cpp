#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "rowgraph/eval/ablation.hpp"
#include "rowgraph/eval/metrics.hpp"
#include "oracles.hpp"

using namespace rowgraph;
using namespace rowgraph::eval;
using linegraph::Mask;
using linegraph::Vec2;

namespace {

std::vector<Vec2> random_points(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<double> u(0, extent);
  std::vector<Vec2> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng)};
  return pts;
}

Mask random_mask(std::mt19937_64& rng, std::size_t h, std::size_t w, double density) {
  std::bernoulli_distribution b(density);
  Mask m(h, w);
  for (auto& v : m.data) v = b(rng) ? 1 : 0;
  return m;
}

double brute_d2(const Mask& m, std::size_t y, std::size_t x) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t yy = 0; yy < m.height; ++yy)
    for (std::size_t xx = 0; xx < m.width; ++xx)
      if (m.at(yy, xx)) {
        const double dy = double(yy) - double(y), dx = double(xx) - double(x);
        best = std::min(best, dx * dx + dy * dy);
      }
  return best;
}

}  // namespace

TEST(Matching, Examples) {
  const std::vector<Vec2> pts{{1, 1}, {20, 5}, {40, 40}};
  auto m = match_plants(pts, pts);
  EXPECT_EQ(m.tp, 3u);
  EXPECT_EQ(m.fp + m.fn, 0u);

  m = match_plants({{10, 0}}, {{0, 0}});
  EXPECT_EQ(m.tp, 0u);
  EXPECT_EQ(m.fp, 1u);
  EXPECT_EQ(m.fn, 1u);

  // labels 6 px apart, prediction between them but nearer the first
  m = match_plants({{2.5, 0}}, {{0, 0}, {6, 0}});
  EXPECT_EQ(m.tp, 1u);
  EXPECT_EQ(m.fn, 1u);
  ASSERT_EQ(m.pairs.size(), 1u);
  EXPECT_EQ(m.pairs[0].labeled, 0u);

  m = match_plants({}, {});
  EXPECT_EQ(m.tp + m.fp + m.fn, 0u);
}

TEST(Matching, RadiusIsStrictExceptCoincident) {
  EXPECT_EQ(match_plants({{8, 0}}, {{0, 0}}).tp, 0u);
  EXPECT_EQ(match_plants({{7.999, 0}}, {{0, 0}}).tp, 1u);
  EXPECT_EQ(match_plants({{3, 3}}, {{3, 3}}, 0.0).tp, 1u);
}

TEST(Matching, EqualsExhaustiveOptimumOnSmallInstances) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t np = rng() % 9, nl = rng() % 9;
    // a tight extent forces contention between nearby points
    const auto pred = random_points(rng, np, 24), lab = random_points(rng, nl, 24);
    const auto m = match_plants(pred, lab);
    EXPECT_EQ(m.tp, oracle::best_matching(pred, lab, kPlantRadius)) << seed;
    EXPECT_EQ(m.tp + m.fp, np);
    EXPECT_EQ(m.tp + m.fn, nl);
    std::vector<int> used(nl, 0);
    for (const auto& p : m.pairs) {
      EXPECT_LT(p.distance, kPlantRadius);
      EXPECT_EQ(used[p.labeled]++, 0);
    }
  }
}

TEST(Matching, SwappingSetsSwapsPrecisionAndRecall) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const auto a = random_points(rng, 1 + rng() % 12, 60), b = random_points(rng, 1 + rng() % 12, 60);
    const auto ab = match_plants(a, b), ba = match_plants(b, a);
    const auto r1 = rates(ab.tp, ab.fp, ab.fn), r2 = rates(ba.tp, ba.fp, ba.fn);
    EXPECT_DOUBLE_EQ(r1.precision, r2.recall);
    EXPECT_DOUBLE_EQ(r1.recall, r2.precision);
  }
}

TEST(Rates, FormulaCases) {
  const auto r = rates(9, 1, 1);
  EXPECT_NEAR(r.precision, 0.9, 1e-12);
  EXPECT_NEAR(r.recall, 0.9, 1e-12);
  EXPECT_NEAR(r.f1, 0.9, 1e-12);
  const auto e = rates(0, 0, 4);
  EXPECT_TRUE(e.precision_undefined);
  EXPECT_EQ(e.precision, 0.0);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_FALSE(e.recall_undefined);
  std::mt19937_64 rng(2);
  for (int k = 0; k < 100; ++k) {
    const auto q = rates(1 + rng() % 50, rng() % 50, rng() % 50);
    EXPECT_NEAR(q.f1, 2 * q.precision * q.recall / (q.precision + q.recall), 1e-12);
  }
}

TEST(Aggregate, MaeAndPerfectDetection) {
  std::vector<PatchCounts> c{{8, 0, 2, 10, 8, {}}, {5, 1, 0, 5, 6, {}}};
  EXPECT_NEAR(aggregate(c).mae, 1.5, 1e-12);
  std::vector<PatchCounts> perfect{{4, 0, 0, 4, 4, {}}, {7, 0, 0, 7, 7, {}}};
  const auto r = aggregate(perfect);
  EXPECT_EQ(r.mae, 0.0);
  EXPECT_EQ(r.pooled.f1, 1.0);
  EXPECT_EQ(r.f1.mean, 1.0);
  EXPECT_EQ(r.f1.sd, 0.0);
  EXPECT_THROW(aggregate({}), std::invalid_argument);
}

TEST(Aggregate, PooledAndPerPatchDiffer) {
  std::vector<PatchCounts> c{{1, 0, 0, 1, 1, {}}, {0, 0, 9, 9, 0, {}}};
  const auto r = aggregate(c);
  EXPECT_NEAR(r.pooled.recall, 0.1, 1e-12);
  EXPECT_NEAR(r.recall.mean, 0.5, 1e-12);
  EXPECT_NEAR(r.recall.sd, 0.5, 1e-12);
  EXPECT_EQ(r.precision.count, 1u);  // second patch has undefined precision
}

TEST(Distance, TransformEqualsBruteForce) {
  std::mt19937_64 rng(13);
  for (int k = 0; k < 30; ++k) {
    const std::size_t h = 1 + rng() % 17, w = 1 + rng() % 19;
    const auto m = random_mask(rng, h, w, k % 5 == 0 ? 0.01 : 0.08);
    const auto d = squared_distance_transform(m);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) EXPECT_EQ(d[y * w + x], brute_d2(m, y, x)) << k;
  }
}

TEST(LineMetrics, Examples) {
  Mask a(20, 20), b(20, 20);
  linegraph::draw_segment(a, {2, 5}, {17, 5});
  const auto same = line_counts(a, a);
  EXPECT_EQ(rates(same.tp, same.fp, same.fn).f1, 1.0);

  linegraph::draw_segment(b, {2, 8}, {17, 8});  // 3 px below, equal length
  const auto off = line_counts(b, a);
  const auto r = rates(off.tp, off.fp, off.fn);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);

  const auto empty = line_counts(Mask(20, 20), a);
  const auto e = rates(empty.tp, empty.fp, empty.fn);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_TRUE(e.precision_undefined);
  EXPECT_EQ(e.precision, 0.0);
  EXPECT_THROW(line_counts(Mask(3, 3), Mask(3, 4)), std::invalid_argument);
}

TEST(LineMetrics, RadiusZeroIsExactComparisonAndCountsMatchBruteForce) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 20; ++k) {
    const auto p = random_mask(rng, 15, 13, 0.1), l = random_mask(rng, 15, 13, 0.1);
    const auto z = line_counts(p, l, 0.0);
    std::size_t both = 0, only_p = 0, only_l = 0;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      both += p.data[i] && l.data[i];
      only_p += p.data[i] && !l.data[i];
      only_l += !p.data[i] && l.data[i];
    }
    EXPECT_EQ(z.tp, both);
    EXPECT_EQ(z.fp, only_p);
    EXPECT_EQ(z.fn, only_l);

    const auto c = line_counts(p, l, 2.5);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t y = 0; y < 15; ++y)
      for (std::size_t x = 0; x < 13; ++x) {
        if (p.at(y, x)) brute_d2(l, y, x) < 6.25 ? ++tp : ++fp;
        if (l.at(y, x) && !(brute_d2(p, y, x) < 6.25)) ++fn;
      }
    EXPECT_EQ(c.tp, tp);
    EXPECT_EQ(c.fp, fp);
    EXPECT_EQ(c.fn, fn);
  }
}

TEST(Ablation, TablesAndAbsentCells) {
  const auto f = empty_table(Grid::Features);
  ASSERT_EQ(f.rows.size(), 4u);
  EXPECT_EQ(f.rows[0].label, "visual");
  EXPECT_DOUBLE_EQ(f.rows[0].reference->f1, 90.7);
  EXPECT_DOUBLE_EQ(f.rows[3].reference->f1, 95.1);
  EXPECT_EQ(empty_table(Grid::Stages).rows.size(), 2u);
  EXPECT_EQ(empty_table(Grid::Samples).rows.size(), 3u);
  EXPECT_FALSE(parse_grid("bogus"));

  auto t = empty_table(Grid::Samples);
  t.rows[0].note = "missing ecm_T2_L4.rgw";
  t.rows[2].metrics = aggregate({{9, 1, 1, 10, 10, {}}});
  const auto j = table_json(t);
  EXPECT_EQ(j["rows"][0]["status"], "absent");
  EXPECT_FALSE(j["rows"][0].contains("result"));
  EXPECT_EQ(j["rows"][2]["status"], "ok");
  const auto csv = table_csv(t);
  EXPECT_NE(csv.find("L=4,absent,,,,,,,,,,,52.4,11.2,16.8\n"), std::string::npos);
  EXPECT_NE(csv.find("L=16,ok,90.0,0.0,90.0,0.0,90.0,0.0,90.0,90.0,90.0,0.000,98.7,91.9,95.1\n"), std::string::npos);
}
