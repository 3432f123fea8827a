#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "minkloc/data/cloud_io.hpp"
#include "minkloc/data/dataset.hpp"
#include "minkloc/kv.hpp"
#include "minkloc/model/checkpoint.hpp"
#include "minkloc/model/minkloc3d.hpp"
#include "minkloc/train/adam.hpp"
#include "minkloc/train/augment.hpp"
#include "minkloc/train/batching.hpp"
#include "minkloc/train/triplet.hpp"

namespace minkloc {

struct TrainingConfig {
  int initial_batch = 32;
  int batch_limit = 256;
  double expansion_threshold = 0.7;
  double expansion_rate = 1.4;
  int epochs = 40;
  double lr = 1e-3;
  int lr_step_epoch = 30;
  double weight_decay = 1e-3;
  double margin = 0.2;

  static TrainingConfig baseline() { return {}; }
  static TrainingConfig refined() { return {16, 256, 0.7, 1.4, 80, 1e-3, 60, 1e-3, 0.2}; }

  BatchExpansion expansion() const { return {expansion_threshold, expansion_rate, batch_limit}; }

  void validate() const {
    if (initial_batch < 4 || initial_batch % 2 != 0) throw DatasetError("initial_batch must be even and at least 4");
    if (batch_limit < initial_batch) throw DatasetError("batch_limit must be at least initial_batch");
    if (!(expansion_rate >= 1.0)) throw DatasetError("expansion_rate must be at least 1");
    if (epochs < 1) throw DatasetError("epochs must be positive");
    if (!(lr > 0) || weight_decay < 0 || margin < 0) throw DatasetError("lr, weight_decay and margin must be non-negative");
  }

  KeyValues to_key_values() const {
    return {{"initial_batch", to_text(initial_batch)},   {"batch_limit", to_text(batch_limit)},
            {"expansion_threshold", to_text(expansion_threshold)}, {"expansion_rate", to_text(expansion_rate)},
            {"epochs", to_text(epochs)},                 {"lr", to_text(lr)},
            {"lr_step_epoch", to_text(lr_step_epoch)},   {"weight_decay", to_text(weight_decay)},
            {"margin", to_text(margin)}};
  }

  void merge(const KeyValues& kv) {
    read_into(kv, "initial_batch", initial_batch);
    read_into(kv, "batch_limit", batch_limit);
    read_into(kv, "expansion_threshold", expansion_threshold);
    read_into(kv, "expansion_rate", expansion_rate);
    read_into(kv, "epochs", epochs);
    read_into(kv, "lr", lr);
    read_into(kv, "lr_step_epoch", lr_step_epoch);
    read_into(kv, "weight_decay", weight_decay);
    read_into(kv, "margin", margin);
  }
};

inline void merge_augment(AugmentConfig& a, const KeyValues& kv) {
  read_into(kv, "jitter_sigma", a.jitter_sigma);
  read_into(kv, "translation_max", a.translation_max);
  read_into(kv, "removal_max_fraction", a.removal_max_fraction);
  read_into(kv, "erase_probability", a.erase_probability);
  read_into(kv, "erase_min_extent", a.erase_min_extent);
  read_into(kv, "erase_max_extent", a.erase_max_extent);
  for (double v : {a.jitter_sigma, a.translation_max, a.removal_max_fraction, a.erase_probability, a.erase_min_extent,
                   a.erase_max_extent}) {
    if (!(v >= 0)) throw FormatError("augmentation parameters must be non-negative");
  }
  if (a.erase_min_extent > a.erase_max_extent) throw FormatError("erase_min_extent exceeds erase_max_extent");
}

inline KeyValues augment_key_values(const AugmentConfig& a) {
  return {{"jitter_sigma", to_text(a.jitter_sigma)},
          {"translation_max", to_text(a.translation_max)},
          {"removal_max_fraction", to_text(a.removal_max_fraction)},
          {"erase_probability", to_text(a.erase_probability)},
          {"erase_min_extent", to_text(a.erase_min_extent)},
          {"erase_max_extent", to_text(a.erase_max_extent)}};
}

struct EpochMetrics {
  int epoch = 0;
  int batch_size = 0;
  double mean_loss = 0;
  double active_ratio = 0;
  double lr = 0;
  std::size_t batches = 0;
  double seconds = 0;

  std::string log_line() const {
    std::ostringstream os;
    os.precision(9);
    os << "epoch=" << epoch << " batch_size=" << batch_size << " mean_loss=" << mean_loss
       << " active_ratio=" << active_ratio << " lr=" << lr;
    return os.str();
  }
};

struct StepResult {
  double loss = 0;
  std::size_t active = 0;
  std::size_t triplets = 0;
};

struct TrainerOptions {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;  // empty: no checkpoints or log files
  std::function<void(const EpochMetrics&)> on_epoch;
};

// Supplies the raw cloud for a record id.
using CloudSource = std::function<const PointCloud&(RecordId)>;

// Loads clouds from the dataset root on first use and keeps them in memory.
class CloudCache {
 public:
  explicit CloudCache(const Dataset& dataset, CloudLoadOptions opts = {}) : dataset_(&dataset), opts_(opts) {}

  const PointCloud& operator()(RecordId id) {
    auto it = cache_.find(id);
    if (it == cache_.end()) it = cache_.emplace(id, load_cloud(dataset_->cloud_path(id), opts_)).first;
    return it->second;
  }

 private:
  const Dataset* dataset_;
  CloudLoadOptions opts_;
  std::unordered_map<RecordId, PointCloud> cache_;
};

template <typename S>
class Trainer {
 public:
  Trainer(MinkLoc3D<S>& model, const Dataset& dataset, CloudSource clouds, TrainingConfig cfg,
          AugmentConfig augment_cfg = {}, TrainerOptions opts = {})
      : model_(&model),
        dataset_(&dataset),
        clouds_(std::move(clouds)),
        cfg_(cfg),
        augment_(augment_cfg),
        opts_(std::move(opts)),
        adam_(AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay}),
        batch_size_(cfg.initial_batch) {
    cfg_.validate();
  }

  int batch_size() const { return batch_size_; }
  const std::vector<EpochMetrics>& history() const { return history_; }

  // One optimisation step on `batch`; `rng_seed` drives augmentation.
  StepResult step(const Batch& batch, std::uint64_t rng_seed) {
    std::vector<SparseTensor<S>> parts;
    parts.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      std::seed_seq seq{rng_seed, static_cast<std::uint64_t>(i)};
      std::mt19937_64 rng(seq);
      const PointCloud cloud = augment(clouds_(batch[i]), augment_, rng);
      parts.push_back(quantize<S>(cloud, model_->config().quantization_step, static_cast<int>(i)));
    }
    const SparseTensor<S> input = concatenate(parts);

    nn::Tape<S> tape;
    nn::Context<S> ctx;
    ctx.tape = &tape;
    ctx.training = true;
    const Embeddings<S> emb = model_->forward(ctx, input, static_cast<int>(batch.size()));

    const SimilarityMasks masks = compute_masks(batch, *dataset_);
    const MiningResult mined = batch_hard_mine(emb.values, masks);
    const BatchLoss loss = triplet_batch_loss(emb.values, mined.triplets, cfg_.margin);
    if (!std::isfinite(loss.mean_loss)) throw NumericError("non-finite training loss");

    nn::Gradients<S> grads;
    if (loss.active > 0) grads = tape.backward(emb.node, loss.grad.template cast<S>());
    model_->apply_batch_stats(ctx.batch_stats);
    adam_.step([&](auto&& f) { model_->for_each_parameter(f); }, grads);
    return {loss.mean_loss, loss.active, loss.triplets};
  }

  EpochMetrics run_epoch(int epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    adam_.set_lr(scheduled_lr(cfg_.lr, epoch, cfg_.lr_step_epoch));
    std::mt19937_64 rng(mix_seed(opts_.seed, static_cast<std::uint64_t>(epoch), 0));
    const auto batches = partition_epoch(*dataset_, batch_size_, rng);

    EpochMetrics m;
    m.epoch = epoch;
    m.batch_size = batch_size_;
    m.lr = adam_.lr();
    m.batches = batches.size();
    std::size_t active = 0, triplets = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const StepResult r = step(batches[b], mix_seed(opts_.seed, static_cast<std::uint64_t>(epoch), b + 1));
      m.mean_loss += r.loss / static_cast<double>(batches.size());
      active += r.active;
      triplets += r.triplets;
    }
    m.active_ratio = triplets == 0 ? 0.0 : static_cast<double>(active) / static_cast<double>(triplets);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    batch_size_ = dynamic_batch_expand(m.active_ratio, batch_size_, cfg_.expansion());
    return m;
  }

  // Full schedule. With an output directory: appends to metrics.log, rewrites
  // latest.ckpt atomically after every epoch and leaves epoch_<N>.ckpt at the end.
  std::vector<EpochMetrics> train() {
    std::ofstream log;
    if (!opts_.out_dir.empty()) {
      std::filesystem::create_directories(opts_.out_dir);
      log.open(opts_.out_dir / "metrics.log", std::ios::app);
      if (!log) throw DatasetError("cannot open metrics log in " + opts_.out_dir.string());
    }
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      const EpochMetrics m = run_epoch(epoch);
      history_.push_back(m);
      if (log.is_open()) {
        log << m.log_line() << '\n';
        log.flush();
        save_checkpoint(*model_, opts_.out_dir / "latest.ckpt");
      }
      if (opts_.on_epoch) opts_.on_epoch(m);
    }
    if (!opts_.out_dir.empty()) {
      save_checkpoint(*model_, opts_.out_dir / ("epoch_" + std::to_string(cfg_.epochs) + ".ckpt"));
    }
    return history_;
  }

 private:
  static std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{seed, a, b};
    std::uint32_t words[2];
    seq.generate(words, words + 2);
    return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  }

  MinkLoc3D<S>* model_;
  const Dataset* dataset_;
  CloudSource clouds_;
  TrainingConfig cfg_;
  AugmentConfig augment_;
  TrainerOptions opts_;
  Adam<S> adam_;
  int batch_size_;
  std::vector<EpochMetrics> history_;
};

}  // namespace minkloc
