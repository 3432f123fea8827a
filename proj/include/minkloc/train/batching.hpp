#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <unordered_set>
#include <vector>

#include "minkloc/data/dataset.hpp"
#include "minkloc/errors.hpp"

namespace minkloc {

using Batch = std::vector<RecordId>;

// Randomly partitions the dataset into batches of `batch_size / 2` positive
// pairs. Each record appears at most once per epoch. A record is used as a
// pair seed only if it still has an unused positive. A trailing partial batch
// is kept when it holds at least two pairs.
template <typename Rng>
std::vector<Batch> partition_epoch(const Dataset& dataset, int batch_size, Rng& rng) {
  if (batch_size < 2) throw DatasetError("batch size must be at least 2");
  const std::size_t pairs_per_batch = static_cast<std::size_t>(batch_size / 2);
  std::vector<RecordId> order;
  order.reserve(dataset.records.size());
  for (const auto& r : dataset.records) order.push_back(r.id);
  std::shuffle(order.begin(), order.end(), rng);

  std::unordered_set<RecordId> used;
  std::vector<Batch> batches;
  Batch current;
  for (RecordId seed : order) {
    if (used.count(seed)) continue;
    std::vector<RecordId> candidates;
    for (RecordId p : dataset.tuple(seed).positives) {
      if (!used.count(p) && dataset.tuples.count(p)) candidates.push_back(p);
    }
    if (candidates.empty()) continue;
    std::sort(candidates.begin(), candidates.end());  // hash order must not leak into sampling
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    const RecordId partner = candidates[pick(rng)];
    used.insert(seed);
    used.insert(partner);
    current.push_back(seed);
    current.push_back(partner);
    if (current.size() == 2 * pairs_per_batch) {
      batches.push_back(std::move(current));
      current.clear();
    }
  }
  if (current.size() >= 4) batches.push_back(std::move(current));
  if (batches.empty()) throw DatasetError("not enough positive pairs to form a batch");
  return batches;
}

// A single batch of exactly batch_size / 2 positive pairs.
template <typename Rng>
Batch build_batch(const Dataset& dataset, int batch_size, Rng& rng) {
  auto batches = partition_epoch(dataset, batch_size, rng);
  if (batches.front().size() != static_cast<std::size_t>(batch_size / 2) * 2) {
    throw DatasetError("insufficient positive pairs for a batch of " + std::to_string(batch_size));
  }
  return batches.front();
}

struct BatchExpansion {
  double threshold = 0.7;  // expand when the active-triplet ratio falls below this
  double rate = 1.4;
  int limit = 256;
};

// Epoch-end batch sizing: grow by `rate` (floored, capped at `limit`) when the
// epoch-average active-triplet ratio is below `threshold`.
inline int dynamic_batch_expand(double active_ratio, int current, const BatchExpansion& cfg) {
  if (!(active_ratio < cfg.threshold)) return current;
  // The epsilon keeps exact products such as 85 * 1.4 = 119 from flooring to 118.
  const auto grown = static_cast<int>(std::floor(static_cast<double>(current) * cfg.rate + 1e-9));
  return std::min(std::max(grown, current), cfg.limit);
}

}  // namespace minkloc
