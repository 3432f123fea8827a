#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "minkloc/cli/app.hpp"

using namespace minkloc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// One small dataset and trained checkpoint shared by the whole suite.
class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "minkloc_test_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    write_text(root / "tiny.cfg",
               "# small model for tests\nconv0_channels=4\nconv1_channels=4\nconv2_channels=4\nconv3_channels=4\n"
               "descriptor_dim=8\ninitial_batch=8\nbatch_limit=8\nepochs=1\n");
    const Result s = run({"synth", "--out", (root / "ds").string(), "--places", "4", "--revisits", "2", "--points",
                          "200", "--test-places", "1"});
    ASSERT_EQ(s.code, 0) << s.err;
    const Result t = run({"train", "--dataset", (root / "ds").string(), "--out", (root / "run").string(), "--config",
                          (root / "tiny.cfg").string(), "--seed", "3"});
    ASSERT_EQ(t.code, 0) << t.err;
  }

  static void TearDownTestSuite() { fs::remove_all(root); }

  static fs::path ckpt() { return root / "run" / "epoch_1.ckpt"; }

  static inline fs::path root;
};

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"train"}).code, 1);
  EXPECT_EQ(run({"embed", "--checkpoint", "x"}).code, 1);
  EXPECT_EQ(run({"query", "--db", "a", "--checkpoint", "b", "--cloud", "c", "-k", "0"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, MissingIndexIsADataErrorNamingThePath) {
  const fs::path dir = fs::temp_directory_path() / "minkloc_test_cli_empty";
  fs::create_directories(dir);
  const Result r = run({"train", "--dataset", dir.string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find((dir / "index.csv").string()), std::string::npos) << r.err;
  fs::remove_all(dir);
}

TEST(Cli, UnknownConfigKeyIsADataError) {
  const fs::path cfg = fs::temp_directory_path() / "minkloc_test_bad.cfg";
  write_text(cfg, "no_such_key=1\n");
  const Result r = run({"train", "--dataset", "/nonexistent", "--out", "/tmp/x", "--config", cfg.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("no_such_key"), std::string::npos);
  fs::remove(cfg);
}

TEST(Cli, GradcheckPassesAndDetectsCorruption) {
  const Result ok = run({"gradcheck"});
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_NE(ok.out.find("PASS"), std::string::npos);
  EXPECT_EQ(ok.out.find("FAIL"), std::string::npos);
  const Result bad = run({"gradcheck", "--corrupt", "relu"});
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
}

TEST(RunConfigPrecedence, FlagOverFileOverDefault) {
  EXPECT_EQ(RunConfig::resolve({}, {}).seed, 0u);
  EXPECT_EQ(RunConfig::resolve({{"seed", "5"}}, {}).seed, 5u);
  EXPECT_EQ(RunConfig::resolve({{"seed", "5"}}, {{"seed", "7"}}).seed, 7u);
  const RunConfig rc = RunConfig::resolve({{"success_radius", "10"}, {"epochs", "3"}}, {{"success_radius", "30"}});
  EXPECT_DOUBLE_EQ(rc.eval.success_radius, 30.0);
  EXPECT_EQ(rc.training.epochs, 3);
  EXPECT_EQ(rc.training.batch_limit, 256);
  EXPECT_THROW(RunConfig::resolve({{"bogus", "1"}}, {}), FormatError);
  EXPECT_THROW(RunConfig::resolve({{"threads", "0"}}, {}), FormatError);
}

TEST(RunConfigPrecedence, RoundTripsThroughKeyValues) {
  RunConfig rc = RunConfig::resolve({{"margin", "0.3"}, {"pooling", "mac"}}, {});
  const RunConfig again = RunConfig::resolve(rc.to_key_values(), {});
  EXPECT_DOUBLE_EQ(again.training.margin, 0.3);
  EXPECT_EQ(again.model.pooling, Pooling::MAC);
}

TEST_F(CliPipeline, TrainWritesArtifacts) {
  EXPECT_TRUE(fs::exists(root / "run" / "latest.ckpt"));
  EXPECT_TRUE(fs::exists(ckpt()));
  const std::string cfg = read_text(root / "run" / "config.cfg");
  EXPECT_NE(cfg.find("seed=3"), std::string::npos);
  EXPECT_NE(cfg.find("descriptor_dim=8"), std::string::npos);
  EXPECT_NE(read_text(root / "run" / "metrics.log").find("epoch=0"), std::string::npos);
}

TEST_F(CliPipeline, EmbedIsDeterministicAcrossThreadCounts) {
  const Result a = run({"embed", "--checkpoint", ckpt().string(), "--dataset", (root / "ds").string(), "--out",
                        (root / "a.desc").string(), "--threads", "1"});
  const Result b = run({"embed", "--checkpoint", ckpt().string(), "--dataset", (root / "ds").string(), "--out",
                        (root / "b.desc").string(), "--threads", "2"});
  ASSERT_EQ(a.code, 0) << a.err;
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_NE(a.out.find("embedded 8 clouds (dim 8)"), std::string::npos) << a.out;
  EXPECT_EQ(read_text(root / "a.desc"), read_text(root / "b.desc"));
  const Result test = run({"embed", "--checkpoint", ckpt().string(), "--dataset", (root / "ds").string(), "--out",
                           (root / "t.desc").string(), "--split", "test"});
  EXPECT_EQ(load_database(root / "t.desc").size(), 2u);
}

TEST_F(CliPipeline, CheckpointMismatchIsADataError) {
  const Result r = run({"embed", "--checkpoint", ckpt().string(), "--dataset", (root / "ds").string(), "--out",
                        (root / "x.desc").string(), "--descriptor-dim", "16"});
  EXPECT_EQ(r.code, 2);
}

TEST_F(CliPipeline, EvalOverRuns) {
  for (int k : {0, 1}) {
    const std::string i = std::to_string(k);
    ASSERT_EQ(run({"embed", "--checkpoint", ckpt().string(), "--dataset", (root / "ds").string(), "--index",
                   "run_" + i + ".csv", "--out", (root / ("r" + i + ".desc")).string()})
                  .code,
              0);
  }
  const std::string r0 = (root / "r0.desc").string(), r1 = (root / "r1.desc").string();
  const Result r = run({"eval", "--query", r0, "--db", r1, "--query", r1, "--db", r0, "--out",
                        (root / "res.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("AR@1 "), std::string::npos);
  EXPECT_EQ(read_text(root / "res.csv").rfind("kind,query,database,n,recall", 0), 0u);
  EXPECT_EQ(run({"eval", "--query", r0, "--db", r0}).code, 2);
  EXPECT_EQ(run({"eval", "--db", r0, "--db", (root / "missing.desc").string()}).code, 2);
  EXPECT_EQ(run({"eval", "--db", r0}).code, 1);
}

TEST_F(CliPipeline, QueryClampsK) {
  ASSERT_EQ(run({"embed", "--checkpoint", ckpt().string(), "--dataset", (root / "ds").string(), "--out",
                 (root / "all.desc").string()})
                .code,
            0);
  const Result r = run({"query", "--db", (root / "all.desc").string(), "--checkpoint", ckpt().string(), "--cloud",
                        (root / "ds" / "clouds" / "0.bin").string(), "-k", "50"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "rank,id,distance,northing,easting");
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  EXPECT_EQ(rows, 8);
  EXPECT_NE(r.err.find("clamped"), std::string::npos);
  const Result missing = run({"query", "--db", (root / "all.desc").string(), "--checkpoint", ckpt().string(),
                              "--cloud", (root / "nope.bin").string()});
  EXPECT_EQ(missing.code, 2);
}

TEST(ShippedConfigs, MatchBuiltInPresets) {
  const fs::path dir = MINKLOC_CONFIG_DIR;
  const RunConfig base = RunConfig::resolve(load_key_values(dir / "baseline.cfg"), {});
  const RunConfig refined = RunConfig::resolve(load_key_values(dir / "refined.cfg"), {});
  for (const auto& [rc, want] : {std::pair{base, TrainingConfig::baseline()}, {refined, TrainingConfig::refined()}}) {
    EXPECT_EQ(rc.training.to_key_values(), want.to_key_values());
    EXPECT_EQ(rc.model.descriptor_dim, 256);
    EXPECT_DOUBLE_EQ(rc.eval.success_radius, 25.0);
  }
  const RunConfig overfit = RunConfig::resolve(load_key_values(dir / "overfit.cfg"), {});
  EXPECT_EQ(overfit.training.epochs, 30);
  EXPECT_EQ(overfit.training.batch_limit, 64);
  EXPECT_EQ(overfit.augment.erase_probability, 0.0);
}
