#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "minkloc/model/checkpoint.hpp"
#include "minkloc/model/minkloc3d.hpp"

using namespace minkloc;

namespace {

ModelConfig small_config(Pooling pooling = Pooling::GeM) {
  ModelConfig c;
  c.conv0_channels = 4;
  c.conv1_channels = 4;
  c.conv2_channels = 8;
  c.conv3_channels = 8;
  c.descriptor_dim = 16;
  c.pooling = pooling;
  return c;
}

PointCloud random_cloud(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) pc.points.push_back({u(rng), u(rng), u(rng)});
  return pc;
}

SparseTensor<double> column(std::vector<double> vals) {
  std::vector<VoxelCoord> coords;
  for (std::size_t i = 0; i < vals.size(); ++i) coords.push_back({0, static_cast<int>(i), 0, 0});
  Matrix<double> f(static_cast<Eigen::Index>(vals.size()), 1);
  for (std::size_t i = 0; i < vals.size(); ++i) f(static_cast<Eigen::Index>(i), 0) = vals[i];
  return SparseTensor<double>(std::make_shared<const CoordinateSet>(std::move(coords), 1), std::move(f));
}

nn::Parameter<double> p_param(double p) {
  nn::Parameter<double> q;
  q.name = "gem.p";
  q.shape = {1};
  q.value = Matrix<double>::Constant(1, 1, p);
  return q;
}

double gem1(std::vector<double> vals, double p) {
  nn::Context<double> ctx;
  return gem_pool(ctx, column(std::move(vals)), p_param(p), 1).values(0, 0);
}


}  // namespace

TEST(GemPool, Examples) {
  EXPECT_DOUBLE_EQ(gem1({1, 3}, 1.0), 2.0);
  EXPECT_NEAR(gem1({1, 2}, 3.0), std::cbrt(4.5), 1e-12);
  EXPECT_NEAR(gem1({1, 3}, 100.0), 3.0, 0.03);
  EXPECT_NEAR(gem1({5}, 3.0), 5.0, 1e-12);
}

TEST(GemPool, ClampsSmallAndNegativeFeatures) {
  EXPECT_NEAR(gem1({-4, 0}, 3.0), kGemClampEps, 1e-15);
  EXPECT_DOUBLE_EQ(gem1({-1, 2}, 1.0), (kGemClampEps + 2.0) / 2);
}

TEST(GemPool, ExponentBelowOneActsAsMean) { EXPECT_DOUBLE_EQ(gem1({1, 3}, 0.25), 2.0); }

TEST(GemPool, BoundedByMeanAndMaxAndMonotoneInP) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(1 + rng() % 20);
    for (double& x : v) x = u(rng);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    const double mx = *std::max_element(v.begin(), v.end());
    double prev = 0;
    for (double p : {1.0, 1.5, 3.0, 8.0, 40.0}) {
      const double g = gem1(v, p);
      EXPECT_GE(g, mean - 1e-9);
      EXPECT_LE(g, mx + 1e-9);
      EXPECT_GE(g, prev - 1e-9);
      prev = g;
    }
  }
}

TEST(GemPool, PerBatchItem) {
  std::vector<VoxelCoord> coords{{0, 0, 0, 0}, {1, 0, 0, 0}, {1, 1, 0, 0}};
  Matrix<double> f(3, 1);
  f << 7, 1, 3;
  SparseTensor<double> t(std::make_shared<const CoordinateSet>(coords, 1), f);
  nn::Context<double> ctx;
  const auto g = gem_pool(ctx, t, p_param(1.0), 2);
  EXPECT_DOUBLE_EQ(g.values(0, 0), 7.0);
  EXPECT_DOUBLE_EQ(g.values(1, 0), 2.0);
  EXPECT_THROW(gem_pool(ctx, t, p_param(1.0), 3), EmptyInput);
}

TEST(MacPool, Example) {
  std::vector<VoxelCoord> coords{{0, 0, 0, 0}, {0, 1, 0, 0}};
  Matrix<double> f(2, 2);
  f << 1, 5, 3, 2;
  SparseTensor<double> t(std::make_shared<const CoordinateSet>(coords, 1), f);
  nn::Context<double> ctx;
  const auto g = mac_pool(ctx, t, 1);
  EXPECT_EQ(g.values(0, 0), 3.0);
  EXPECT_EQ(g.values(0, 1), 5.0);
}

TEST(Model, DescriptorShapeAndFiniteness) {
  std::mt19937_64 rng(2);
  for (Pooling pool : {Pooling::GeM, Pooling::MAC}) {
    MinkLoc3D<double> model(small_config(pool), 3);
    const Descriptor d = compute_descriptor(random_cloud(rng, 300), model);
    ASSERT_EQ(d.dim(), 16u);
    for (double v : d.values) EXPECT_TRUE(std::isfinite(v));
  }
}

TEST(Model, DefaultDescriptorDim) {
  MinkLoc3D<float> model;
  PointCloud pc;
  pc.points = {{0, 0, 0}, {0.1, 0.1, 0.1}};
  EXPECT_EQ(compute_descriptor(pc, model).dim(), 256u);
}

TEST(Model, SingleVoxelGivesStrideFourMap) {
  MinkLoc3D<double> model(small_config(), 1);
  PointCloud pc;
  pc.points = {{0.0, 0.0, 0.0}};
  const auto input = quantize<double>(pc, 0.01);
  nn::Context<double> ctx;
  const auto f = model.features(ctx, input);
  EXPECT_EQ(f.stride(), 4);
  EXPECT_EQ(f.channels(), 16);
  EXPECT_GE(f.size(), 1u);
}

TEST(Model, OutputLatticeMatchesCoordinateOracle) {
  std::mt19937_64 rng(4);
  MinkLoc3D<double> model(small_config(), 1);
  for (int t = 0; t < 5; ++t) {
    const auto input = quantize<double>(random_cloud(rng, 200), 0.01);
    std::set<VoxelCoord> want;
    for (const VoxelCoord& c : input.coordinates().coords()) {
      want.insert({c.batch, align_down(c.x, 4), align_down(c.y, 4), align_down(c.z, 4)});
      const VoxelCoord c8{c.batch, align_down(c.x, 8), align_down(c.y, 8), align_down(c.z, 8)};
      for (int dx : {0, 4}) {
        for (int dy : {0, 4}) {
          for (int dz : {0, 4}) want.insert({c8.batch, c8.x + dx, c8.y + dy, c8.z + dz});
        }
      }
    }
    nn::Context<double> ctx;
    const auto f = model.features(ctx, input);
    const std::set<VoxelCoord> got(f.coordinates().coords().begin(), f.coordinates().coords().end());
    EXPECT_EQ(got, want);
  }
}

TEST(Model, PermutationAndDuplicationInvariance) {
  std::mt19937_64 rng(5);
  for (Pooling pool : {Pooling::GeM, Pooling::MAC}) {
    MinkLoc3D<double> model(small_config(pool), 7);
    for (int t = 0; t < 5; ++t) {
      PointCloud pc = random_cloud(rng, 400);
      const Descriptor base = compute_descriptor(pc, model);
      PointCloud perm = pc;
      std::shuffle(perm.points.begin(), perm.points.end(), rng);
      EXPECT_EQ(base.values, compute_descriptor(perm, model).values);
      PointCloud dup = pc;
      for (std::size_t i = 0; i < pc.size(); i += 3) dup.points.push_back(pc.points[i]);
      EXPECT_EQ(base.values, compute_descriptor(dup, model).values);
    }
  }
}

TEST(Model, BatchedEvalMatchesSingleClouds) {
  std::mt19937_64 rng(6);
  MinkLoc3D<double> model(small_config(), 8);
  const PointCloud a = random_cloud(rng, 300), b = random_cloud(rng, 300);
  const auto batch = concatenate<double>({quantize<double>(a, 0.01, 0), quantize<double>(b, 0.01, 1)});
  nn::Context<double> ctx;
  const auto e = model.forward(ctx, batch, 2);
  const Descriptor da = compute_descriptor(a, model), db = compute_descriptor(b, model);
  for (Eigen::Index k = 0; k < 16; ++k) {
    EXPECT_NEAR(e.values(0, k), da.values[static_cast<std::size_t>(k)], 1e-9);
    EXPECT_NEAR(e.values(1, k), db.values[static_cast<std::size_t>(k)], 1e-9);
  }
}

TEST(Model, SeedDeterminesWeights) {
  std::mt19937_64 rng(7);
  const PointCloud pc = random_cloud(rng, 200);
  MinkLoc3D<double> a(small_config(), 1), b(small_config(), 1), c(small_config(), 2);
  EXPECT_EQ(compute_descriptor(pc, a).values, compute_descriptor(pc, b).values);
  EXPECT_NE(compute_descriptor(pc, a).values, compute_descriptor(pc, c).values);
}

TEST(Model, RejectsBadInput) {
  MinkLoc3D<double> model(small_config(), 1);
  nn::Context<double> ctx;
  std::vector<VoxelCoord> coords{{0, 0, 0, 0}};
  SparseTensor<double> two(std::make_shared<const CoordinateSet>(coords, 1), Matrix<double>::Ones(1, 2));
  EXPECT_THROW(model.features(ctx, two), ShapeError);
}

TEST(Checkpoint, RoundTripReproducesDescriptors) {
  std::mt19937_64 rng(8);
  MinkLoc3D<float> model(small_config(), 9);
  const auto path = std::filesystem::temp_directory_path() / "minkloc_test_model.ckpt";
  save_checkpoint(model, path);
  const MinkLoc3D<float> loaded = load_checkpoint<float>(path);
  EXPECT_EQ(loaded.config().descriptor_dim, 16);
  const PointCloud pc = random_cloud(rng, 300);
  EXPECT_EQ(compute_descriptor(pc, model).values, compute_descriptor(pc, loaded).values);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptionIsAFormatError) {
  MinkLoc3D<float> model(small_config(), 9);
  const std::string bytes = encode_checkpoint(make_checkpoint(model));
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), FormatError);
  EXPECT_THROW(decode_checkpoint(""), FormatError);
}

TEST(Checkpoint, MissingTensorIsAFormatError) {
  MinkLoc3D<float> model(small_config(), 9);
  Checkpoint ck = make_checkpoint(model);
  ck.tensors.erase(ck.tensors.begin());
  EXPECT_THROW(model_from_checkpoint<float>(ck), FormatError);
}
