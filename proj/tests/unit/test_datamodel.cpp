#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "lwdepth/datamodel.hpp"
#include "lwdepth/error.hpp"
#include "lwdepth/metrics.hpp"
#include "lwdepth/rng.hpp"

using namespace lwdepth;

TEST(Resize, ConstantStaysConstant) {
  Image img(7, 5, 3, 0.7f);
  for (Size2 t : {Size2{1, 1}, Size2{3, 11}, Size2{14, 10}, Size2{7, 5}}) {
    Image out = resize_bilinear(img, t);
    EXPECT_EQ(out.size(), t);
    for (float v : out.pixels) EXPECT_EQ(v, 0.7f);
  }
}

TEST(Resize, TwoByTwoToOne) {
  Image img(2, 2, 1);
  img.at(0, 1) = 1.0f;
  img.at(1, 1) = 1.0f;
  EXPECT_FLOAT_EQ(resize_bilinear(img, {1, 1}).at(0, 0), 0.5f);
}

TEST(Resize, ConvexCombination) {
  Image img(9, 13, 1);
  Rng rng(3);
  for (auto& v : img.pixels) v = static_cast<float>(rng.uniform());
  Image out = resize_bilinear(img, {4, 29});
  const auto [lo, hi] = std::minmax_element(img.pixels.begin(), img.pixels.end());
  for (float v : out.pixels) {
    EXPECT_GE(v, *lo);
    EXPECT_LE(v, *hi);
  }
}

TEST(Resize, HalvingAveragesPairs) {
  // align-corners off: output pixel i samples source position 2i + 0.5
  Image img(1, 4, 1);
  img.pixels = {0.0f, 1.0f, 2.0f, 4.0f};
  Image out = resize_bilinear(img, {1, 2});
  EXPECT_FLOAT_EQ(out.pixels[0], 0.5f);
  EXPECT_FLOAT_EQ(out.pixels[1], 3.0f);
}

TEST(Resize, ErrorsOnEmpty) {
  EXPECT_THROW(resize_bilinear(Image{}, {2, 2}), DimensionError);
  EXPECT_THROW(resize_bilinear(Image(2, 2, 1), {0, 2}), DimensionError);
}

TEST(Resize, NearestMaskKeepsBinaryValues) {
  Mask m(5, 5, true);
  m.valid[12] = 0;
  Mask out = resize_nearest(m, {10, 10});
  for (auto v : out.valid) EXPECT_TRUE(v == 0 || v == 1);
  EXPECT_EQ(out.count(), 96u);
}

TEST(Crop, OffsetsUseFloor) {
  Image img(240, 320, 1);
  for (int y = 0; y < 240; ++y)
    for (int x = 0; x < 320; ++x) img.at(y, x) = static_cast<float>(y * 1000 + x);
  Image c = center_crop(img, {228, 304});
  EXPECT_EQ(c.at(0, 0), 6 * 1000 + 8);
  Image odd(5, 4, 1);
  for (int i = 0; i < 20; ++i) odd.pixels[i] = static_cast<float>(i);
  EXPECT_EQ(center_crop(odd, {2, 1}).at(0, 0), odd.at(1, 1));
}

TEST(Crop, IdentityAndCenter) {
  Image img(3, 3, 2);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<float>(i);
  EXPECT_EQ(center_crop(img, {3, 3}), img);
  Image c = center_crop(img, {1, 1});
  EXPECT_EQ(c.at(0, 0, 0), img.at(1, 1, 0));
  EXPECT_EQ(c.at(0, 0, 1), img.at(1, 1, 1));
  EXPECT_THROW(center_crop(img, {4, 3}), DimensionError);
}

TEST(Preprocess, FullPipelineDims) {
  DepthSample s;
  s.rgb = Image(480, 640, 3, 0.3f);
  s.depth = Image(480, 640, 1, 2.0f);
  s.valid_mask = Mask(480, 640, true);
  DepthSample p = preprocess(s);
  EXPECT_EQ(p.rgb.size(), (Size2{228, 304}));
  EXPECT_EQ(p.rgb.channels, 3);
  EXPECT_EQ(p.depth.size(), (Size2{114, 152}));
  EXPECT_EQ(p.valid_mask.size(), (Size2{114, 152}));
  EXPECT_EQ(p.valid_mask.count(), 114u * 152u);
  DepthSample again = preprocess(p);
  EXPECT_EQ(again.rgb, p.rgb);
  EXPECT_EQ(again.depth, p.depth);
}

TEST(Preprocess, AnyLargeInputGivesTargetDims) {
  for (Size2 sz : {Size2{240, 320}, Size2{300, 401}, Size2{777, 1023}}) {
    DepthSample s;
    s.rgb = Image(sz.height, sz.width, 3, 0.5f);
    s.depth = Image(sz.height, sz.width, 1, 1.5f);
    s.valid_mask = Mask(sz.height, sz.width, true);
    DepthSample p = preprocess(s);
    EXPECT_EQ(p.rgb.size(), (Size2{228, 304}));
    EXPECT_EQ(p.depth.size(), (Size2{114, 152}));
  }
}

TEST(Preprocess, InvalidatesNonPositiveDepth) {
  DepthSample s;
  s.rgb = Image(480, 640, 3, 0.3f);
  s.depth = Image(480, 640, 1, 2.0f);
  s.valid_mask = Mask(480, 640, true);
  for (int y = 0; y < 480; ++y)
    for (int x = 0; x < 320; ++x) {
      s.depth.at(y, x) = 0.0f;
      s.valid_mask.valid[y * 640 + x] = 0;
    }
  DepthSample p = preprocess(s);
  for (int y = 0; y < 114; ++y)
    for (int x = 0; x < 152; ++x) {
      if (p.valid_mask.at(y, x)) EXPECT_GT(p.depth.at(y, x), 0.0f);
    }
  EXPECT_GT(p.valid_mask.count(), 0u);
  EXPECT_LT(p.valid_mask.count(), 114u * 152u);
}

TEST(Scene, DeterministicAndSeedSensitive) {
  SceneRecipe r;
  r.n_boxes = 3;
  auto a = generate_scene(r, 42);
  auto b = generate_scene(r, 42);
  auto c = generate_scene(r, 43);
  EXPECT_EQ(a.rgb, b.rgb);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.valid_mask, b.valid_mask);
  EXPECT_NE(a.rgb, c.rgb);
}

TEST(Scene, EmptySceneHasConstantDepth) {
  SceneRecipe r;
  r.n_boxes = 0;
  r.wall_distance = 3.0;
  r.scale_factor = 1.5;
  auto s = generate_scene(r, 7);
  for (float v : s.depth.pixels) EXPECT_FLOAT_EQ(v, 4.5f);
  r.wall_distance = 9.0;  // 13.5 clipped to 10 * 1.5
  s = generate_scene(r, 7);
  for (float v : s.depth.pixels) EXPECT_FLOAT_EQ(v, 13.5f);
  r.scale_factor = 1.0;
  r.wall_distance = 12.0;
  s = generate_scene(r, 7);
  for (float v : s.depth.pixels) EXPECT_FLOAT_EQ(v, 10.0f);
}

TEST(Scene, DepthWithinScaledRangeAndRgbInUnitInterval) {
  for (double scale : {0.8, 1.0, 6.5}) {
    SceneRecipe r;
    r.n_boxes = 4;
    r.scale_factor = scale;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto s = generate_scene(r, seed);
      EXPECT_NO_THROW(validate_sample(s));
      for (float v : s.depth.pixels) {
        EXPECT_GE(v, 0.5 * scale - 1e-5);
        EXPECT_LE(v, 10.0 * scale + 1e-5);
      }
      for (float v : s.rgb.pixels) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
      }
    }
  }
}

TEST(Scene, ScaleFiveShiftsHistogramMode) {
  std::vector<Image> d1, d5;
  std::vector<Mask> m1, m5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneRecipe r;
    r.n_boxes = 1;
    r.wall_distance = 1.5;
    auto a = generate_scene(r, seed);
    r.scale_factor = 5.0;
    auto b = generate_scene(r, seed);
    d1.push_back(a.depth);
    m1.push_back(a.valid_mask);
    d5.push_back(b.depth);
    m5.push_back(b.valid_mask);
  }
  auto h1 = depth_histogram(d1, m1, 50, 0.0, 10.0);
  auto h5 = depth_histogram(d5, m5, 50, 0.0, 10.0);
  const double c1 = (h1.bin_edges[h1.argmax()] + h1.bin_edges[h1.argmax() + 1]) / 2;
  const double c5 = (h5.bin_edges[h5.argmax()] + h5.bin_edges[h5.argmax() + 1]) / 2;
  EXPECT_NEAR(c5, 5 * c1, 0.2 * 5);
  EXPECT_NEAR(c1, 1.5, 0.2);
}

TEST(Scene, RecipeValidation) {
  SceneRecipe r;
  r.depth_range.min_m = 0;
  EXPECT_THROW(validate_recipe(r), ConfigError);
  r = SceneRecipe{};
  r.depth_range.max_m = 0.4;
  EXPECT_THROW(validate_recipe(r), ConfigError);
  r = SceneRecipe{};
  r.scale_factor = -1;
  EXPECT_THROW(validate_recipe(r), ConfigError);
}

TEST(Dataset, UnlabeledRefusesGroundTruth) {
  auto d = make_domains(3, 2, 2, 5);
  EXPECT_NO_THROW(d.original.depth(0));
  EXPECT_NO_THROW(d.aux_unlabeled.rgb(1));
  EXPECT_THROW(d.aux_unlabeled.depth(0), ContractError);
  EXPECT_THROW(d.aux_unlabeled.valid_mask(0), ContractError);
  EXPECT_THROW(d.aux_unlabeled.sample(0), ContractError);
  EXPECT_THROW(d.ood_unlabeled.depth(0), ContractError);
  EXPECT_THROW(d.original.unlabeled().depth(0), ContractError);
  EXPECT_THROW(d.original.rgb(3), DimensionError);
}

TEST(Dataset, DomainsStructure) {
  auto d = make_domains(6, 4, 3, 11);
  EXPECT_EQ(d.original.size(), 6u);
  EXPECT_EQ(d.aux_unlabeled.size(), 4u);
  EXPECT_EQ(d.aux_labeled.size(), 4u);
  EXPECT_EQ(d.ood_unlabeled.size(), 3u);
  EXPECT_TRUE(d.original.labeled());
  EXPECT_TRUE(d.aux_labeled.labeled());
  EXPECT_FALSE(d.aux_unlabeled.labeled());
  EXPECT_FALSE(d.ood_unlabeled.labeled());
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(d.aux_unlabeled.rgb(i), d.aux_labeled.rgb(i));
  std::set<std::uint64_t> seeds;
  for (int stream = 0; stream < 3; ++stream)
    for (std::size_t i = 0; i < 100; ++i) seeds.insert(domain_sample_seed(11, stream, i));
  EXPECT_EQ(seeds.size(), 300u);
  auto empty = make_domains(2, 0, 0, 1);
  EXPECT_TRUE(empty.aux_unlabeled.empty());
}

TEST(Dataset, MatchedAuxIsCloserThanOod) {
  auto d = make_domains(150, 150, 150, 3);
  auto hx = depth_histogram(d.original);
  auto hu = depth_histogram(d.aux_labeled);
  // the OOD images are unlabeled; regenerate their depth from the same recipes
  std::vector<Image> depths;
  std::vector<Mask> masks;
  DomainOptions opts;
  for (std::size_t i = 0; i < 150; ++i) {
    const std::uint64_t seed = domain_sample_seed(3, 2, i);
    auto s = generate_scene(draw_recipe(opts, true, seed), seed);
    depths.push_back(s.depth);
    masks.push_back(s.valid_mask);
    EXPECT_EQ(s.rgb, d.ood_unlabeled.rgb(i));
    EXPECT_EQ(s.depth, d.ood_labeled.depth(i));
  }
  auto ho = depth_histogram(depths, masks, kDefaultHistogramBins, 0.0, kDefaultHistogramMax);
  EXPECT_GT(histogram_similarity(hx, hu), histogram_similarity(hx, ho));
  EXPECT_GT(histogram_similarity(hx, hu), 0.8);
}

TEST(Dataset, OrderIsPureFunctionOfSeedAndEpoch) {
  auto d = make_domains(40, 0, 0, 9).original;
  auto a = d.order(0), b = d.order(0), c = d.order(1);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_NE(d.with_seed(10).order(0), a);
}

TEST(Dataset, SplitIsDisjointAndSized) {
  auto d = make_domains(50, 0, 0, 2).original;
  auto [train, test] = d.split(0.2, 4);
  EXPECT_EQ(test.size(), 10u);
  EXPECT_EQ(train.size(), 40u);
  for (std::size_t i = 0; i < test.size(); ++i)
    for (std::size_t j = 0; j < train.size(); ++j) EXPECT_NE(test.rgb(i), train.rgb(j));
  auto [t2, s2] = d.split(0.2, 4);
  EXPECT_EQ(s2.rgb(0), test.rgb(0));
  EXPECT_THROW(d.split(1.5, 0), ContractError);
}
