#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "minkloc/data/synth.hpp"
#include "minkloc/eval/embed.hpp"
#include "minkloc/eval/recall.hpp"
#include "protocol_fixture.hpp"

using namespace minkloc;

namespace {

DescriptorDatabase random_db(std::mt19937_64& rng, std::size_t n, std::size_t dim, RecordId first_id = 0,
                             bool coarse = false) {
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(0, 500);
  DescriptorDatabase db;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> d(dim);
    for (double& v : d) v = coarse ? std::round(g(rng)) : g(rng);
    db.add({first_id + static_cast<RecordId>(i), u(rng), u(rng), std::move(d)});
  }
  return db;
}

std::vector<RecordId> brute_force_ids(const DescriptorDatabase& db, const std::vector<double>& q, std::size_t k) {
  std::vector<std::pair<double, RecordId>> all;
  for (const auto& e : db.entries()) {
    double s = 0;
    for (std::size_t c = 0; c < q.size(); ++c) s += (e.descriptor[c] - q[c]) * (e.descriptor[c] - q[c]);
    all.emplace_back(std::sqrt(s), e.id);
  }
  std::sort(all.begin(), all.end());
  std::vector<RecordId> out;
  for (std::size_t i = 0; i < std::min(k, all.size()); ++i) out.push_back(all[i].second);
  return out;
}

}  // namespace

TEST(Knn, Examples) {
  const DescriptorDatabase db = fixture::protocol_db();
  const auto nn = knn(db, {24.0}, 2);
  ASSERT_EQ(nn.size(), 2u);
  EXPECT_EQ(nn[0].id, 12);
  EXPECT_DOUBLE_EQ(nn[0].distance, 4.0);
  EXPECT_EQ(nn[1].id, 13);
  const auto tie = knn(db, {25.0}, 1);
  EXPECT_EQ(tie[0].id, 12);
}

TEST(Knn, ClampsAndRejects) {
  const DescriptorDatabase db = fixture::protocol_db();
  Diagnostics diag;
  EXPECT_EQ(knn(db, {0.0}, 50, &diag).size(), 5u);
  EXPECT_EQ(diag.warnings.size(), 1u);
  EXPECT_THROW(knn(DescriptorDatabase{}, {0.0}, 1), EmptyInput);
  EXPECT_THROW(knn(db, {0.0, 1.0}, 1), ShapeError);
}

TEST(Knn, MatchesBruteForceSort) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    const DescriptorDatabase db = random_db(rng, 1 + rng() % 60, 3, 0, t % 2 == 0);
    const auto q = random_db(rng, 1, 3, 1000, t % 2 == 0)[0].descriptor;
    const std::size_t k = 1 + rng() % db.size();
    std::vector<RecordId> got;
    for (const auto& n : knn(db, q, k)) got.push_back(n.id);
    EXPECT_EQ(got, brute_force_ids(db, q, k));
  }
}

TEST(Database, AddErrors) {
  DescriptorDatabase db;
  db.add({1, 0, 0, {1.0, 2.0}});
  EXPECT_THROW(db.add({2, 0, 0, {1.0}}), ShapeError);
  EXPECT_THROW(db.add({1, 0, 0, {1.0, 2.0}}), DatasetError);
  EXPECT_THROW(DescriptorDatabase().add({1, 0, 0, {}}), ShapeError);
  EXPECT_THROW(db.at(7), KeyError);
}

TEST(Database, FileRoundTrip) {
  std::mt19937_64 rng(2);
  const DescriptorDatabase db = random_db(rng, 20, 8);
  const auto path = std::filesystem::temp_directory_path() / "minkloc_test.desc";
  save_database(db, path);
  EXPECT_TRUE(std::filesystem::exists(database_sidecar(path)));
  const DescriptorDatabase back = load_database(path);
  ASSERT_EQ(back.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(back[i].id, db[i].id);
    EXPECT_DOUBLE_EQ(back[i].northing, db[i].northing);
    for (std::size_t k = 0; k < 8; ++k) {
      EXPECT_EQ(back[i].descriptor[k], static_cast<double>(static_cast<float>(db[i].descriptor[k])));
    }
  }
  std::filesystem::remove(path);
  EXPECT_THROW(load_database(path), Error);
  std::filesystem::remove(database_sidecar(path));
}

TEST(Database, RejectsWrongMagic) {
  const auto path = std::filesystem::temp_directory_path() / "minkloc_test_bad.desc";
  write_file_atomic(path, "NOTADESC\1\0\0\0\1\0\0\0");
  EXPECT_THROW(load_database(path), FormatError);
  std::filesystem::remove(path);
}

TEST(Recall, FixtureForward) {
  const auto q = fixture::protocol_queries();
  const auto db = fixture::protocol_db();
  EXPECT_DOUBLE_EQ(recall_at_n(q, db, 1), fixture::kForwardRecall1);
  EXPECT_DOUBLE_EQ(recall_at_n(q, db, 2), fixture::kForwardRecall2);
  const auto curve = recall_curve(q, db, 5);
  EXPECT_DOUBLE_EQ(curve[4], fixture::kForwardRecall2);
}

TEST(Recall, RadiusIsInclusive) {
  const auto q = fixture::protocol_queries();
  const auto db = fixture::protocol_db();
  EvalConfig tight;
  tight.success_radius = 24.999;
  // q2 drops out at rank 1
  EXPECT_DOUBLE_EQ(recall_at_n(q, db, 1, tight), 0.2);
}

TEST(Recall, CurveIsMonotoneAndClamped) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 30; ++t) {
    const auto db = random_db(rng, 30, 4, 0);
    const auto q = random_db(rng, 10, 4, 100);
    Diagnostics diag;
    const auto curve = recall_curve(q, db, 40, {}, &diag);
    ASSERT_EQ(curve.size(), 30u);
    EXPECT_FALSE(diag.empty());
    for (std::size_t n = 1; n < curve.size(); ++n) EXPECT_GE(curve[n], curve[n - 1]);
    EXPECT_GE(curve.front(), 0.0);
    EXPECT_LE(curve.back(), 1.0);
  }
}

TEST(Recall, Errors) {
  const auto db = fixture::protocol_db();
  EXPECT_THROW(recall_at_n(db, db, 1), DatasetError);
  EXPECT_THROW(recall_at_n(fixture::protocol_queries(), db, 0), DatasetError);
  EXPECT_THROW(recall_at_n(fixture::protocol_queries(), DescriptorDatabase{}, 1), EmptyInput);
  EXPECT_THROW(recall_at_n(DescriptorDatabase{}, db, 1), EmptyInput);
}

TEST(AverageRecall, FixtureBothDirections) {
  const std::vector<NamedSet> sets{{"queries", fixture::protocol_queries()}, {"database", fixture::protocol_db()}};
  const auto pairings = all_run_pairings(2);
  ASSERT_EQ(pairings.size(), 2u);
  const AverageRecall ar = average_recall(sets, pairings);
  EXPECT_DOUBLE_EQ(ar.ar_at_1, (fixture::kForwardRecall1 + fixture::kBackwardRecall1) / 2);
  EXPECT_DOUBLE_EQ(ar.ar_at_percent, ar.ar_at_1);  // cutoff is 1 for |db| = 5
  ASSERT_EQ(ar.curve.size(), 5u);
  EXPECT_DOUBLE_EQ(ar.curve[1], (fixture::kForwardRecall2 + fixture::kBackwardRecall2) / 2);
  const std::string csv = format_results_csv(ar);
  EXPECT_EQ(csv.rfind("kind,query,database,n,recall\n", 0), 0u);
  EXPECT_NE(csv.find("AR@1,all,all,1,0.400000"), std::string::npos);
}

TEST(AverageRecall, PairingsAreOrderedAndExcludeSelf) {
  const auto p = all_run_pairings(4);
  EXPECT_EQ(p.size(), 12u);
  for (const auto& x : p) EXPECT_NE(x.query, x.db);
  EXPECT_THROW(average_recall({}, {}), DatasetError);
}

TEST(PercentCutoff, Examples) {
  EXPECT_EQ(percent_cutoff(50, 1.0), 1u);
  EXPECT_EQ(percent_cutoff(100, 1.0), 1u);
  EXPECT_EQ(percent_cutoff(250, 1.0), 3u);
  EXPECT_EQ(percent_cutoff(5, 1.0), 1u);
  EXPECT_EQ(percent_cutoff(149, 1.0), 1u);
  EXPECT_EQ(percent_cutoff(151, 1.0), 2u);
}

TEST(EvalConfig, Validation) {
  EvalConfig c;
  c.success_radius = 0;
  EXPECT_THROW(c.validate(), DatasetError);
}

TEST(Embed, ThreadCountDoesNotChangeResults) {
  SynthConfig sc;
  sc.n_places = 3;
  sc.n_revisits = 2;
  sc.points_per_cloud = 300;
  const SynthDataset s = synth_records(sc);
  ModelConfig mc;
  mc.conv0_channels = mc.conv1_channels = mc.conv2_channels = mc.conv3_channels = 4;
  mc.descriptor_dim = 8;
  MinkLoc3D<float> model(mc, 1);
  std::map<RecordId, int> place;
  for (std::size_t i = 0; i < s.records.size(); ++i) place[s.records[i].id] = s.place_of[i];
  const RecordCloudLoader load = [&](const PointCloudRecord& r) {
    return synth_revisit(sc, place.at(r.id), static_cast<int>(r.id % 2));
  };
  EmbedStats stats;
  const auto a = embed_records(s.records, model, load, 1, nullptr, &stats);
  const auto b = embed_records(s.records, model, load, 3);
  ASSERT_EQ(a.size(), 6u);
  EXPECT_EQ(stats.clouds, 6u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].descriptor, b[i].descriptor);
  }
  const auto runs = split_runs(a, s.runs);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].size(), 3u);
}
