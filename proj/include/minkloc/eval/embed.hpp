#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <thread>
#include <vector>

#include "minkloc/data/cloud_io.hpp"
#include "minkloc/data/dataset.hpp"
#include "minkloc/eval/database.hpp"
#include "minkloc/model/minkloc3d.hpp"

namespace minkloc {

struct EmbedStats {
  std::size_t clouds = 0;
  double seconds = 0;

  double clouds_per_second() const { return seconds > 0 ? static_cast<double>(clouds) / seconds : 0.0; }
};

using RecordCloudLoader = std::function<PointCloud(const PointCloudRecord&)>;

// One descriptor per record, in record order. Workers embed disjoint records
// so the result does not depend on the thread count. Warnings are collected
// per record and merged in record order.
template <typename S>
DescriptorDatabase embed_records(const std::vector<PointCloudRecord>& records, const MinkLoc3D<S>& model,
                                 const RecordCloudLoader& load, int threads = 1, Diagnostics* diag = nullptr,
                                 EmbedStats* stats = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<Descriptor> out(records.size());
  std::vector<Diagnostics> local(records.size());
  std::vector<std::exception_ptr> errors(records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      try {
        out[i] = compute_descriptor(load(records[i]), model, &local[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(threads, static_cast<int>(records.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    for (const auto& w : local[i].warnings) warn(diag, w);
  }
  DescriptorDatabase db;
  for (std::size_t i = 0; i < records.size(); ++i) {
    db.add({records[i].id, records[i].northing, records[i].easting, std::move(out[i].values)});
  }
  if (stats) {
    stats->clouds = records.size();
    stats->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  return db;
}

inline RecordCloudLoader dataset_loader(std::filesystem::path root, CloudLoadOptions opts = {}) {
  return [root = std::move(root), opts](const PointCloudRecord& r) { return load_cloud(root / r.path, opts); };
}

// Splits a database into per-run subsets given run membership lists.
inline std::vector<DescriptorDatabase> split_runs(const DescriptorDatabase& db,
                                                  const std::vector<std::vector<RecordId>>& runs) {
  std::vector<DescriptorDatabase> out;
  for (const auto& run : runs) {
    DescriptorDatabase part;
    for (RecordId id : run) part.add(db.at(id));
    out.push_back(std::move(part));
  }
  return out;
}

}  // namespace minkloc
