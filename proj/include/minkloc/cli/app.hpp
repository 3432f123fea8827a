#pragma once

#include <CLI11.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "minkloc/data/synth.hpp"
#include "minkloc/eval/embed.hpp"
#include "minkloc/eval/recall.hpp"
#include "minkloc/gradcheck.hpp"
#include "minkloc/model/checkpoint.hpp"
#include "minkloc/run_config.hpp"
#include "minkloc/train/trainer.hpp"

namespace minkloc::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

namespace fs = std::filesystem;

// Flags shared by commands that take a run configuration.
struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<double> radius;
  std::optional<int> descriptor_dim;
  std::optional<std::string> pooling;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key=value configuration file");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--threads", threads, "worker thread cap")->check(CLI::PositiveNumber);
    cmd->add_option("--radius", radius, "success radius in metres")->check(CLI::PositiveNumber);
    cmd->add_option("--descriptor-dim", descriptor_dim, "descriptor size")->check(CLI::PositiveNumber);
    cmd->add_option("--pooling", pooling, "pooling head")->check(CLI::IsMember({"gem", "mac"}));
  }

  KeyValues overrides() const {
    KeyValues kv;
    if (seed) kv["seed"] = to_text(*seed);
    if (threads) kv["threads"] = to_text(*threads);
    if (radius) kv["success_radius"] = to_text(*radius);
    if (descriptor_dim) kv["descriptor_dim"] = to_text(*descriptor_dim);
    if (pooling) kv["pooling"] = *pooling;
    return kv;
  }

  RunConfig resolve(KeyValues extra = {}) const {
    KeyValues file;
    if (!config.empty()) file = load_key_values(config);
    KeyValues flags = overrides();
    flags.merge(extra);
    return RunConfig::resolve(file, flags, config.empty() ? "config" : config);
  }
};

inline void check_model_matches(const ModelConfig& ckpt, const ModelConfig& requested, const KeyValues& explicit_keys) {
  if (explicit_keys.count("descriptor_dim") && ckpt.descriptor_dim != requested.descriptor_dim) {
    throw ShapeError("checkpoint descriptor_dim " + std::to_string(ckpt.descriptor_dim) + " does not match requested " +
                     std::to_string(requested.descriptor_dim));
  }
  if (explicit_keys.count("pooling") && ckpt.pooling != requested.pooling) {
    throw ShapeError("checkpoint pooling " + to_string(ckpt.pooling) + " does not match requested " +
                     to_string(requested.pooling));
  }
}

inline int cmd_synth(const SynthConfig& cfg, const fs::path& out_dir, std::ostream& out) {
  fs::create_directories(out_dir);
  const SynthDataset ds = synth_dataset(cfg, out_dir);
  out << "wrote " << ds.records.size() << " clouds in " << ds.runs.size() << " runs to " << out_dir.string() << '\n';
  return kOk;
}

struct TrainArgs {
  fs::path dataset;
  std::string index = "index.csv";
  fs::path out_dir;
  std::string checkpoint;
  std::optional<int> epochs;
  std::optional<int> batch_limit;
};

inline int cmd_train(const CommonFlags& common, const TrainArgs& args, std::ostream& out) {
  KeyValues extra;
  if (args.epochs) extra["epochs"] = to_text(*args.epochs);
  if (args.batch_limit) extra["batch_limit"] = to_text(*args.batch_limit);
  const RunConfig rc = common.resolve(extra);
  const Dataset ds = Dataset::load(args.dataset, args.index, Split::Train);

  MinkLoc3D<float> model = args.checkpoint.empty() ? MinkLoc3D<float>(rc.model, rc.seed)
                                                   : load_checkpoint<float>(args.checkpoint);
  if (!args.checkpoint.empty()) check_model_matches(model.config(), rc.model, common.overrides());

  fs::create_directories(args.out_dir);
  write_file_atomic(args.out_dir / "config.cfg", format_key_values(rc.to_key_values()));
  CloudCache cache(ds);
  TrainerOptions opts;
  opts.seed = rc.seed;
  opts.out_dir = args.out_dir;
  opts.on_epoch = [&](const EpochMetrics& m) { out << m.log_line() << " seconds=" << m.seconds << std::endl; };
  Trainer<float> trainer(model, ds, [&](RecordId id) -> const PointCloud& { return cache(id); }, rc.training,
                         rc.augment, opts);
  trainer.train();
  out << "checkpoint: " << (args.out_dir / ("epoch_" + std::to_string(rc.training.epochs) + ".ckpt")).string()
      << '\n';
  return kOk;
}

struct EmbedArgs {
  std::string checkpoint;
  fs::path dataset;
  std::string index = "index.csv";
  fs::path out_file;
  std::string split = "all";
};

inline int cmd_embed(const CommonFlags& common, const EmbedArgs& args, std::ostream& out, std::ostream& err) {
  const RunConfig rc = common.resolve();
  const MinkLoc3D<float> model = load_checkpoint<float>(args.checkpoint);
  check_model_matches(model.config(), rc.model, common.overrides());
  std::optional<Split> split;
  if (args.split == "train") split = Split::Train;
  if (args.split == "test") split = Split::Test;
  const Dataset ds = Dataset::load(args.dataset, args.index, split);
  Diagnostics diag;
  EmbedStats stats;
  const DescriptorDatabase db = embed_records(ds.records, model, dataset_loader(ds.root), rc.threads, &diag, &stats);
  for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
  if (!args.out_file.parent_path().empty()) fs::create_directories(args.out_file.parent_path());
  save_database(db, args.out_file);
  out << "embedded " << stats.clouds << " clouds (dim " << db.dim() << ") in " << std::fixed << std::setprecision(3)
      << stats.seconds << " s: " << std::setprecision(1) << stats.clouds_per_second() << " clouds/s\n";
  return kOk;
}

struct EvalArgs {
  std::vector<std::string> dbs;
  std::vector<std::string> queries;
  std::string out_file;
};

inline int cmd_eval(const CommonFlags& common, const EvalArgs& args, std::ostream& out, std::ostream& err) {
  const RunConfig rc = common.resolve();
  std::vector<NamedSet> sets;
  std::vector<Pairing> pairings;
  auto add = [&](const std::string& path) {
    sets.push_back({fs::path(path).stem().string(), load_database(path)});
    return sets.size() - 1;
  };
  if (!args.queries.empty()) {
    if (args.queries.size() != args.dbs.size()) {
      throw CLI::ValidationError("--query", "give one --query per --db for explicit pairings");
    }
    for (std::size_t i = 0; i < args.dbs.size(); ++i) {
      const std::size_t q = add(args.queries[i]);
      const std::size_t d = add(args.dbs[i]);
      pairings.push_back({q, d});
    }
  } else {
    if (args.dbs.size() < 2) throw CLI::ValidationError("--db", "need at least two runs, or explicit --query files");
    for (const auto& p : args.dbs) add(p);
    pairings = all_run_pairings(sets.size());
  }
  Diagnostics diag;
  const AverageRecall ar = average_recall(sets, pairings, rc.eval, &diag);
  for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
  const std::string csv = format_results_csv(ar);
  if (args.out_file.empty()) {
    out << csv;
  } else {
    write_file_atomic(args.out_file, csv);
  }
  out << std::fixed << std::setprecision(2) << "AR@1 " << 100.0 * ar.ar_at_1 << "%  AR@1% "
      << 100.0 * ar.ar_at_percent << "%  over " << pairings.size() << " pairings\n";
  return kOk;
}

struct QueryArgs {
  std::string db;
  std::string checkpoint;
  std::string cloud;
  std::size_t k = 5;
};

inline int cmd_query(const CommonFlags& common, const QueryArgs& args, std::ostream& out, std::ostream& err) {
  const RunConfig rc = common.resolve();
  const MinkLoc3D<float> model = load_checkpoint<float>(args.checkpoint);
  check_model_matches(model.config(), rc.model, common.overrides());
  const DescriptorDatabase db = load_database(args.db);
  Diagnostics diag;
  const Descriptor q = compute_descriptor(load_cloud(args.cloud, {}, &diag), model, &diag);
  const auto nn = knn(db, q.values, args.k, &diag);
  for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
  out << "rank,id,distance,northing,easting\n";
  out << std::setprecision(9);
  for (std::size_t r = 0; r < nn.size(); ++r) {
    const auto& e = db.at(nn[r].id);
    out << r + 1 << ',' << nn[r].id << ',' << nn[r].distance << ',' << e.northing << ',' << e.easting << '\n';
  }
  return kOk;
}

inline int cmd_gradcheck(const gradcheck::Options& opt, std::ostream& out) {
  const gradcheck::Report rep = gradcheck::run_all(opt);
  for (const auto& c : rep.cases) {
    out << (c.passed() ? "PASS " : "FAIL ") << std::left << std::setw(24) << c.name << " rel_err=" << std::scientific
        << std::setprecision(3) << c.rel_error << " tol=" << c.tolerance << '\n';
  }
  out << std::defaultfloat << (rep.passed() ? "all gradient checks passed" : "gradient check FAILED") << " in "
      << std::fixed << std::setprecision(2) << rep.seconds << " s\n";
  return rep.passed() ? kOk : kNumericFailure;
}

// Parses `args` (without the program name) and runs the selected command.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"MinkLoc3D sparse-voxel place recognition", "minkloc"};
  app.require_subcommand(1);

  SynthConfig synth_cfg;
  fs::path synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic multi-run dataset");
  synth->add_option("--out", synth_out, "output dataset root")->required();
  synth->add_option("--places", synth_cfg.n_places, "number of places")->check(CLI::Range(2, 100000));
  synth->add_option("--revisits", synth_cfg.n_revisits, "revisits (runs) per place")->check(CLI::Range(1, 1000));
  synth->add_option("--points", synth_cfg.points_per_cloud, "points per cloud")
      ->check(CLI::Range(std::size_t{1}, kBenchmarkPointCount));
  synth->add_option("--seed", synth_cfg.seed, "geometry seed");
  synth->add_option("--test-places", synth_cfg.test_places, "trailing places marked as test split");

  CommonFlags train_common;
  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model");
  train_common.attach(train);
  train->add_option("--dataset", train_args.dataset, "dataset root")->required();
  train->add_option("--index", train_args.index, "index CSV relative to the dataset root");
  train->add_option("--out", train_args.out_dir, "output directory")->required();
  train->add_option("--checkpoint", train_args.checkpoint, "resume from checkpoint");
  train->add_option("--epochs", train_args.epochs, "override epoch count")->check(CLI::PositiveNumber);
  train->add_option("--batch-limit", train_args.batch_limit, "override batch size limit")->check(CLI::PositiveNumber);

  CommonFlags embed_common;
  EmbedArgs embed_args;
  auto* embed = app.add_subcommand("embed", "compute a descriptor database");
  embed_common.attach(embed);
  embed->add_option("--checkpoint", embed_args.checkpoint, "model checkpoint")->required();
  embed->add_option("--dataset", embed_args.dataset, "dataset root")->required();
  embed->add_option("--index", embed_args.index, "index CSV relative to the dataset root");
  embed->add_option("--out", embed_args.out_file, "database file")->required();
  embed->add_option("--split", embed_args.split, "records to embed")->check(CLI::IsMember({"all", "train", "test"}));

  CommonFlags eval_common;
  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "average recall over query/database pairings");
  eval_common.attach(eval);
  eval->add_option("--db", eval_args.dbs, "database file (repeatable)")->required();
  eval->add_option("--query", eval_args.queries, "query file paired with the --db at the same position");
  eval->add_option("--out", eval_args.out_file, "results CSV (default: stdout)");

  CommonFlags query_common;
  QueryArgs query_args;
  auto* query = app.add_subcommand("query", "localise one cloud against a database");
  query_common.attach(query);
  query->add_option("--db", query_args.db, "database file")->required();
  query->add_option("--checkpoint", query_args.checkpoint, "model checkpoint")->required();
  query->add_option("--cloud", query_args.cloud, "query cloud file")->required();
  query->add_option("-k,--k", query_args.k, "number of neighbours")->check(CLI::PositiveNumber);

  gradcheck::Options gc;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  grad->add_option("--scale", gc.scale, "input size multiplier")->check(CLI::Range(1, 8));
  grad->add_option("--seed", gc.seed, "random seed");
  grad->add_option("--corrupt", gc.corrupt, "corrupt the named case (harness self-test)")->group("");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    if (synth->parsed()) return cmd_synth(synth_cfg, synth_out, out);
    if (train->parsed()) return cmd_train(train_common, train_args, out);
    if (embed->parsed()) return cmd_embed(embed_common, embed_args, out, err);
    if (eval->parsed()) return cmd_eval(eval_common, eval_args, out, err);
    if (query->parsed()) return cmd_query(query_common, query_args, out, err);
    if (grad->parsed()) return cmd_gradcheck(gc, out);
    return kUsage;
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
}

}  // namespace minkloc::cli
