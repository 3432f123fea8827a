#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "minkloc/binary_io.hpp"
#include "minkloc/data/cloud_io.hpp"
#include "minkloc/data/dataset.hpp"
#include "minkloc/data/synth.hpp"

using namespace minkloc;

namespace {

std::string raw_points(const std::vector<double>& xyz) {
  ByteWriter w;
  for (double v : xyz) w.f64(v);
  return std::move(w).str();
}

PointCloudRecord rec(RecordId id, double n, double e, Split s = Split::Train) {
  PointCloudRecord r;
  r.id = id;
  r.path = "c/" + std::to_string(id) + ".bin";
  r.northing = n;
  r.easting = e;
  r.split = s;
  return r;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("minkloc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST(CloudIo, DecodesBenchmarkSizedFile) {
  std::vector<double> xyz(3 * 4096, 0.25);
  const std::string bytes = raw_points(xyz);
  ASSERT_EQ(bytes.size(), 98304u);
  Diagnostics diag;
  const PointCloud pc = decode_cloud(bytes, "a.bin", {.expected_points = kBenchmarkPointCount}, &diag);
  EXPECT_EQ(pc.size(), 4096u);
  EXPECT_EQ(pc.points[17], (Point3{0.25, 0.25, 0.25}));
  EXPECT_TRUE(diag.empty());
}

TEST(CloudIo, OutOfRangeWarnsButLoads) {
  Diagnostics diag;
  const PointCloud pc = decode_cloud(raw_points({1.5, 0, 0}), "a.bin", {}, &diag);
  EXPECT_EQ(pc.points[0].x, 1.5);
  EXPECT_EQ(diag.warnings.size(), 1u);
}

TEST(CloudIo, Errors) {
  const std::string bytes = raw_points({0, 0, 0, 1, 1, 1});
  EXPECT_THROW(decode_cloud(bytes.substr(0, 40), "t"), FormatError);
  EXPECT_THROW(decode_cloud("", "t"), EmptyInput);
  EXPECT_THROW(decode_cloud(bytes, "t", {.expected_points = 3}), FormatError);
  EXPECT_THROW(decode_cloud(raw_points({0, std::nan(""), 0}), "t"), FormatError);
  EXPECT_THROW(load_cloud("/nonexistent/minkloc.bin"), Error);
}

TEST(CloudIo, RoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  PointCloud pc;
  for (int i = 0; i < 100; ++i) pc.points.push_back({u(rng), u(rng), u(rng)});
  const auto dir = scratch("cloud");
  save_cloud(pc, dir / "x.bin");
  EXPECT_EQ(load_cloud(dir / "x.bin").points, pc.points);
  std::filesystem::remove_all(dir);
}

TEST(IndexCsv, ParsesAndRoundTrips) {
  const std::string text = "id,path,northing,easting,split\n3,a.bin,10.5,-2,train\r\n\n7,b.bin,0,0,test\n";
  const auto records = parse_index_csv(text, "idx");
  ASSERT_EQ(records.size(), 2u);
  EXPECT_EQ(records[0].id, 3);
  EXPECT_EQ(records[0].northing, 10.5);
  EXPECT_EQ(records[1].split, Split::Test);
  const auto again = parse_index_csv(format_index_csv(records), "idx");
  EXPECT_EQ(again[1].path, "b.bin");
  EXPECT_EQ(again[0].easting, -2.0);
}

TEST(IndexCsv, Errors) {
  const std::string h = "id,path,northing,easting,split\n";
  EXPECT_THROW(parse_index_csv("", "i"), FormatError);
  EXPECT_THROW(parse_index_csv("id,path\n", "i"), FormatError);
  EXPECT_THROW(parse_index_csv(h + "1,a,1,2\n", "i"), FormatError);
  EXPECT_THROW(parse_index_csv(h + "x,a,1,2,train\n", "i"), FormatError);
  EXPECT_THROW(parse_index_csv(h + "1,a,1,2,val\n", "i"), FormatError);
  EXPECT_THROW(parse_index_csv(h + "1,a,1,2,train\n1,b,1,2,train\n", "i"), FormatError);
  EXPECT_THROW(parse_index_csv(h + "1,a,inf,2,train\n", "i"), FormatError);
}

TEST(IndexCsv, MissingFileNamesPath) {
  try {
    load_index_csv("/nonexistent/dir/index.csv");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/index.csv"), std::string::npos);
  }
}

TEST(Tuples, RadiiExamples) {
  const auto t = build_tuples({rec(0, 0, 0), rec(1, 5, 0), rec(2, 30, 0), rec(3, 60, 0)});
  const TrainingTuple& a = t.at(0);
  EXPECT_TRUE(a.positives.count(1));
  EXPECT_TRUE(a.non_negatives.count(1));
  EXPECT_FALSE(a.positives.count(2));
  EXPECT_TRUE(a.non_negatives.count(2));
  EXPECT_FALSE(a.non_negatives.count(3));
  EXPECT_FALSE(a.positives.count(0));
  EXPECT_FALSE(a.non_negatives.count(0));
}

TEST(Tuples, BoundariesAreInclusiveForPositivesExclusiveForNegatives) {
  const auto t = build_tuples({rec(0, 0, 0), rec(1, 10, 0), rec(2, 0, 50)});
  EXPECT_TRUE(t.at(0).positives.count(1));
  EXPECT_FALSE(t.at(0).non_negatives.count(2));
}

TEST(Tuples, MatchBruteForceAndAreSymmetric) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 300);
  std::vector<PointCloudRecord> recs;
  for (int i = 0; i < 200; ++i) recs.push_back(rec(i, u(rng), u(rng)));
  const auto t = build_tuples(recs);
  for (const auto& a : recs) {
    for (const auto& b : recs) {
      if (a.id == b.id) continue;
      const double d = std::hypot(a.northing - b.northing, a.easting - b.easting);
      EXPECT_EQ(t.at(a.id).positives.count(b.id) == 1, d <= 10.0);
      EXPECT_EQ(t.at(a.id).non_negatives.count(b.id) == 1, d < 50.0);
      EXPECT_EQ(t.at(a.id).positives.count(b.id), t.at(b.id).positives.count(a.id));
    }
  }
}

TEST(Tuples, Errors) {
  EXPECT_THROW(build_tuples({rec(0, 0, 0), rec(0, 1, 1)}), DatasetError);
  EXPECT_THROW(build_tuples({rec(0, 0, 0)}, {.positive = 20, .negative = 10}), DatasetError);
  const Dataset ds = Dataset::make("/", {rec(0, 0, 0)});
  EXPECT_THROW(ds.record(9), KeyError);
}

TEST(DatasetLoad, FiltersSplit) {
  const auto dir = scratch("ds");
  save_index_csv({rec(0, 0, 0), rec(1, 0, 0, Split::Test), rec(2, 1, 0)}, dir / "index.csv");
  EXPECT_EQ(Dataset::load(dir, "index.csv").records.size(), 2u);
  EXPECT_EQ(Dataset::load(dir, "index.csv", Split::Test).records.size(), 1u);
  EXPECT_EQ(Dataset::load(dir, "index.csv", std::nullopt).records.size(), 3u);
  save_index_csv({rec(1, 0, 0, Split::Test)}, dir / "only_test.csv");
  EXPECT_THROW(Dataset::load(dir, "only_test.csv"), DatasetError);
  std::filesystem::remove_all(dir);
}

TEST(Synth, RevisitsArePositivesAndPlacesAreNegatives) {
  SynthConfig cfg;
  cfg.n_places = 6;
  cfg.n_revisits = 4;
  const SynthDataset ds = synth_records(cfg);
  ASSERT_EQ(ds.records.size(), 24u);
  ASSERT_EQ(ds.runs.size(), 4u);
  const auto tuples = build_tuples(ds.records);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    for (std::size_t j = 0; j < ds.records.size(); ++j) {
      if (i == j) continue;
      const bool same = ds.place_of[i] == ds.place_of[j];
      const auto& t = tuples.at(ds.records[i].id);
      EXPECT_EQ(t.positives.count(ds.records[j].id) == 1, same);
      EXPECT_EQ(t.non_negatives.count(ds.records[j].id) == 1, same);
    }
  }
}

TEST(Synth, CloudsAreDeterministicNormalisedAndSized) {
  SynthConfig cfg;
  cfg.points_per_cloud = 512;
  const PointCloud a = synth_revisit(cfg, 3, 1);
  EXPECT_EQ(a.points, synth_revisit(cfg, 3, 1).points);
  EXPECT_NE(a.points, synth_revisit(cfg, 3, 2).points);
  EXPECT_EQ(a.size(), 512u);
  for (const Point3& p : a.points) {
    EXPECT_LE(std::abs(p.x), 1.0);
    EXPECT_LE(std::abs(p.y), 1.0);
    EXPECT_LE(std::abs(p.z), 1.0);
  }
}

TEST(Synth, WritesDatasetTree) {
  const auto dir = scratch("synth");
  SynthConfig cfg;
  cfg.n_places = 3;
  cfg.n_revisits = 2;
  cfg.points_per_cloud = 64;
  cfg.test_places = 1;
  synth_dataset(cfg, dir);
  EXPECT_TRUE(std::filesystem::exists(dir / "run_0.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "run_1.csv"));
  const Dataset train = Dataset::load(dir, "index.csv");
  EXPECT_EQ(train.records.size(), 4u);
  EXPECT_EQ(load_cloud(train.cloud_path(0)).size(), 64u);
  std::filesystem::remove_all(dir);
}

TEST(Synth, Errors) {
  SynthConfig cfg;
  cfg.n_places = 1;
  EXPECT_THROW(synth_records(cfg), DatasetError);
  cfg.n_places = 4;
  cfg.place_spacing_m = 40;
  EXPECT_THROW(synth_records(cfg), DatasetError);
}
