#pragma once

#include <cstdint>
#include <set>
#include <string>

#include "minkloc/errors.hpp"
#include "minkloc/eval/recall.hpp"
#include "minkloc/kv.hpp"
#include "minkloc/model/config.hpp"
#include "minkloc/train/augment.hpp"
#include "minkloc/train/trainer.hpp"

namespace minkloc {

// Everything a command needs, merged from defaults, then the config file,
// then command-line flags (later layers win).
struct RunConfig {
  ModelConfig model;
  TrainingConfig training;
  AugmentConfig augment;
  EvalConfig eval;
  std::uint64_t seed = 0;
  int threads = 1;

  void merge(const KeyValues& kv, const std::string& origin) {
    static const std::set<std::string> known = [] {
      std::set<std::string> k{"seed", "threads"};
      for (const auto& [key, v] : ModelConfig{}.to_key_values()) k.insert(key);
      for (const auto& [key, v] : TrainingConfig{}.to_key_values()) k.insert(key);
      for (const auto& [key, v] : augment_key_values(AugmentConfig{})) k.insert(key);
      for (const auto& [key, v] : EvalConfig{}.to_key_values()) k.insert(key);
      return k;
    }();
    for (const auto& [key, value] : kv) {
      if (!known.count(key)) throw FormatError(origin + ": unknown key '" + key + "'");
    }
    model.merge(kv);
    training.merge(kv);
    merge_augment(augment, kv);
    eval.merge(kv);
    read_into(kv, "seed", seed);
    read_into(kv, "threads", threads);
  }

  void validate() const {
    model.validate();
    training.validate();
    eval.validate();
    if (threads < 1) throw FormatError("threads must be at least 1");
  }

  KeyValues to_key_values() const {
    KeyValues kv = model.to_key_values();
    for (auto&& src : {training.to_key_values(), augment_key_values(augment), eval.to_key_values()}) {
      kv.insert(src.begin(), src.end());
    }
    kv["seed"] = to_text(seed);
    kv["threads"] = to_text(threads);
    return kv;
  }

  static RunConfig resolve(const KeyValues& file, const KeyValues& flags, const std::string& file_origin = "config") {
    RunConfig rc;
    rc.merge(file, file_origin);
    rc.merge(flags, "command line");
    rc.validate();
    return rc;
  }
};

}  // namespace minkloc
