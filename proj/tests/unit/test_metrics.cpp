#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lwdepth/error.hpp"
#include "lwdepth/metrics.hpp"
#include "lwdepth/rng.hpp"
#include "oracles.hpp"

using namespace lwdepth;

TEST(Metrics, IdentityPrediction) {
  std::vector<float> g{1.0f, 2.0f, 3.5f, 0.7f};
  std::vector<std::uint8_t> m(4, 1);
  auto r = evaluate(g, g, m);
  EXPECT_EQ(r.rmse, 0.0);
  EXPECT_EQ(r.rel, 0.0);
  EXPECT_EQ(r.delta1, 1.0);
  EXPECT_EQ(r.n_valid, 4u);
}

TEST(Metrics, UniformOverestimate) {
  std::vector<float> g{1.0f, 2.0f, 4.0f}, p;
  for (float v : g) p.push_back(1.3f * v);
  std::vector<std::uint8_t> m(3, 1);
  auto r = evaluate(p, g, m);
  EXPECT_NEAR(r.rel, 0.3, 1e-6);
  EXPECT_EQ(r.delta1, 0.0);
  EXPECT_EQ(r.delta2, 1.0);
  EXPECT_EQ(r.delta3, 1.0);
}

TEST(Metrics, EmptyMaskIsAnError) {
  std::vector<float> g{1.0f, 2.0f};
  std::vector<std::uint8_t> m(2, 0);
  EXPECT_THROW(evaluate(g, g, m), ContractError);
  EXPECT_THROW(MetricAccumulator{}.report(), ContractError);
}

TEST(Metrics, NonPositivePredictionNeverCounts) {
  std::vector<float> g{1.0f, 1.0f}, p{-1.0f, 0.0f};
  std::vector<std::uint8_t> m(2, 1);
  auto r = evaluate(p, g, m);
  EXPECT_EQ(r.delta3, 0.0);
}

TEST(Metrics, MatchesNaiveLoopOn8x8) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<float> p(64), g(64);
    std::vector<std::uint8_t> m(64);
    for (int i = 0; i < 64; ++i) {
      g[i] = static_cast<float>(rng.uniform(0.1, 10.0));
      p[i] = static_cast<float>(rng.uniform(-0.5, 12.0));
      m[i] = rng.uniform() < 0.8;
    }
    m[5] = 1;
    auto r = evaluate(p, g, m);
    auto o = oracle::metrics(p, g, m);
    ASSERT_NEAR(r.rmse, o.rmse, 1e-9);
    ASSERT_NEAR(r.rel, o.rel, 1e-9);
    ASSERT_NEAR(r.delta1, o.d[0], 1e-9);
    ASSERT_NEAR(r.delta2, o.d[1], 1e-9);
    ASSERT_NEAR(r.delta3, o.d[2], 1e-9);
    ASSERT_EQ(r.n_valid, o.n);
    ASSERT_LE(r.delta1, r.delta2);
    ASSERT_LE(r.delta2, r.delta3);
  }
}

TEST(Metrics, ScaleInvariance) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    // powers of two keep the scaled floats exact
    const float c = std::ldexp(1.0f, static_cast<int>(rng.below(7)) - 3);
    std::vector<float> p(64), g(64), ps(64), gs(64);
    std::vector<std::uint8_t> m(64, 1);
    for (int i = 0; i < 64; ++i) {
      g[i] = static_cast<float>(rng.uniform(0.5, 5.0));
      p[i] = static_cast<float>(rng.uniform(0.3, 6.0));
      ps[i] = c * p[i];
      gs[i] = c * g[i];
    }
    auto a = evaluate(p, g, m), b = evaluate(ps, gs, m);
    EXPECT_NEAR(b.rel, a.rel, 1e-12);
    EXPECT_EQ(b.delta1, a.delta1);
    EXPECT_EQ(b.delta2, a.delta2);
    EXPECT_EQ(b.delta3, a.delta3);
    EXPECT_NEAR(b.rmse, c * a.rmse, 1e-9 * (1 + b.rmse));
  }
}

TEST(Metrics, AccumulatorMergesPools) {
  std::vector<float> p1{1.0f, 2.0f}, g1{1.5f, 2.0f}, p2{3.0f}, g2{2.0f};
  std::vector<std::uint8_t> m1(2, 1), m2(1, 1);
  MetricAccumulator acc;
  acc.add(p1, g1, m1);
  acc.add(p2, g2, m2);
  std::vector<float> p{1.0f, 2.0f, 3.0f}, g{1.5f, 2.0f, 2.0f};
  std::vector<std::uint8_t> m(3, 1);
  auto a = acc.report(), b = evaluate(p, g, m);
  EXPECT_DOUBLE_EQ(a.rmse, b.rmse);
  EXPECT_DOUBLE_EQ(a.rel, b.rel);
  EXPECT_DOUBLE_EQ(a.delta1, b.delta1);
}

TEST(Metrics, ReportJsonKeys) {
  MetricReport r{0.5, 0.1, 0.8, 0.9, 0.95, 42};
  nlohmann::json j = r;
  for (const char* k : {"rmse", "rel", "delta1", "delta2", "delta3", "n_valid"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j.get<MetricReport>().n_valid, 42u);
}

TEST(Histogram, ConstantSampleFillsOneBin) {
  std::vector<Image> d{Image(4, 4, 1, 2.5f)};
  std::vector<Mask> m{Mask(4, 4, true)};
  auto h = depth_histogram(d, m, 50, 0.0, 10.0);
  EXPECT_EQ(h.mass.size(), 50u);
  EXPECT_EQ(h.bin_edges.size(), 51u);
  EXPECT_EQ(h.mass[12], 1.0);
  EXPECT_EQ(h.argmax(), 12u);
}

TEST(Histogram, TwoDisjointSamplesSplitMass) {
  std::vector<Image> d{Image(3, 3, 1, 1.1f), Image(3, 3, 1, 7.3f)};
  std::vector<Mask> m{Mask(3, 3, true), Mask(3, 3, true)};
  auto h = depth_histogram(d, m, 10, 0.0, 10.0);
  EXPECT_DOUBLE_EQ(h.mass[1], 0.5);
  EXPECT_DOUBLE_EQ(h.mass[7], 0.5);
  double sum = 0;
  for (double v : h.mass) sum += v;
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Histogram, OutOfRangeClampsToEndBins) {
  std::vector<Image> d{Image(1, 2, 1)};
  d[0].pixels = {25.0f, 0.01f};
  std::vector<Mask> m{Mask(1, 2, true)};
  auto h = depth_histogram(d, m, 5, 1.0, 10.0);
  EXPECT_DOUBLE_EQ(h.mass.front(), 0.5);
  EXPECT_DOUBLE_EQ(h.mass.back(), 0.5);
}

TEST(Histogram, UnlabeledDatasetRejected) {
  auto d = make_domains(2, 2, 0, 1);
  EXPECT_NO_THROW(depth_histogram(d.original));
  EXPECT_THROW(depth_histogram(d.aux_unlabeled), ContractError);
}

TEST(Similarity, Examples) {
  DepthHistogram a, b, c;
  a.bin_edges = b.bin_edges = c.bin_edges = {0, 1, 2, 3};
  a.mass = {0.5, 0.5, 0.0};
  b.mass = {0.5, 0.0, 0.5};
  c.mass = {0.0, 0.0, 1.0};
  EXPECT_DOUBLE_EQ(histogram_similarity(a, b), 0.5);
  EXPECT_DOUBLE_EQ(histogram_similarity(a, a), 1.0);
  EXPECT_DOUBLE_EQ(histogram_similarity(a, c), 0.0);
  EXPECT_DOUBLE_EQ(histogram_similarity(a, b), histogram_similarity(b, a));
  DepthHistogram d;
  d.bin_edges = {0, 1, 2};
  d.mass = {0.5, 0.5};
  EXPECT_THROW(histogram_similarity(a, d), DimensionError);
}
