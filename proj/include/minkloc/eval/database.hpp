#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "minkloc/binary_io.hpp"
#include "minkloc/data/dataset.hpp"
#include "minkloc/diagnostics.hpp"
#include "minkloc/errors.hpp"
#include "minkloc/kv.hpp"

namespace minkloc {

struct DatabaseEntry {
  RecordId id = 0;
  double northing = 0;
  double easting = 0;
  std::vector<double> descriptor;
};

class DescriptorDatabase {
 public:
  DescriptorDatabase() = default;

  void add(DatabaseEntry e) {
    if (!entries_.empty() && e.descriptor.size() != dim()) {
      throw ShapeError("descriptor dimension " + std::to_string(e.descriptor.size()) + " does not match database " +
                       std::to_string(dim()));
    }
    if (e.descriptor.empty()) throw ShapeError("empty descriptor");
    if (!index_.emplace(e.id, entries_.size()).second) {
      throw DatasetError("duplicate id " + std::to_string(e.id) + " in descriptor database");
    }
    entries_.push_back(std::move(e));
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().descriptor.size(); }
  const std::vector<DatabaseEntry>& entries() const { return entries_; }
  const DatabaseEntry& operator[](std::size_t i) const { return entries_[i]; }
  bool contains(RecordId id) const { return index_.count(id) != 0; }

  const DatabaseEntry& at(RecordId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw KeyError("id " + std::to_string(id) + " not in descriptor database");
    return entries_[it->second];
  }

 private:
  std::vector<DatabaseEntry> entries_;
  std::unordered_map<RecordId, std::size_t> index_;
};

struct Neighbor {
  RecordId id = 0;
  double distance = 0;
};

// Exact k nearest neighbours by Euclidean distance, ties broken by lower id.
// k larger than the database is clamped with a warning.
inline std::vector<Neighbor> knn(const DescriptorDatabase& db, const std::vector<double>& q, std::size_t k,
                                 Diagnostics* diag = nullptr) {
  if (db.empty()) throw EmptyInput("knn on an empty descriptor database");
  if (q.size() != db.dim()) throw ShapeError("query dimension does not match database");
  if (k > db.size()) {
    warn(diag, "k=" + std::to_string(k) + " exceeds database size " + std::to_string(db.size()) + "; clamped");
    k = db.size();
  }
  std::vector<Neighbor> all(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto& d = db[i].descriptor;
    double s = 0;
    for (std::size_t c = 0; c < q.size(); ++c) s += (d[c] - q[c]) * (d[c] - q[c]);
    all[i] = {db[i].id, std::sqrt(s)};
  }
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), less);
  all.resize(k);
  return all;
}

// Binary layout: "MLK3DESC", u32 dim, u32 count, then count*dim f32 LE
// values. Ids and geo-tags live in a CSV sidecar (`<file>.csv`).
inline constexpr char kDatabaseMagic[] = "MLK3DESC";

inline std::filesystem::path database_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".csv");
}

inline void save_database(const DescriptorDatabase& db, const std::filesystem::path& path) {
  ByteWriter w;
  w.raw(kDatabaseMagic, 8);
  w.u32(static_cast<std::uint32_t>(db.dim()));
  w.u32(static_cast<std::uint32_t>(db.size()));
  for (const auto& e : db.entries()) {
    for (double v : e.descriptor) w.f32(static_cast<float>(v));
  }
  std::ostringstream csv;
  csv.precision(17);
  csv << "id,northing,easting\n";
  for (const auto& e : db.entries()) csv << e.id << ',' << e.northing << ',' << e.easting << '\n';
  write_file_atomic(path, std::move(w).str());
  write_file_atomic(database_sidecar(path), csv.str());
}

inline DescriptorDatabase load_database(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  ByteReader r(bytes, path.string());
  char magic[8];
  r.raw(magic, 8);
  if (std::string(magic, 8) != std::string(kDatabaseMagic, 8)) throw FormatError(path.string() + ": not a descriptor database");
  const std::uint32_t dim = r.u32();
  const std::uint32_t count = r.u32();
  if (dim == 0) throw FormatError(path.string() + ": zero descriptor dimension");
  if (r.remaining() != static_cast<std::size_t>(dim) * count * 4) {
    throw FormatError(path.string() + ": descriptor payload size mismatch");
  }
  std::vector<std::vector<double>> descs(count, std::vector<double>(dim));
  for (auto& d : descs) {
    for (auto& v : d) v = r.f32();
  }

  const std::string side = read_file(database_sidecar(path));
  std::istringstream in(side);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "id,northing,easting") {
    throw FormatError(database_sidecar(path).string() + ": bad header");
  }
  DescriptorDatabase db;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    if (row >= count) throw FormatError(database_sidecar(path).string() + ": more rows than descriptors");
    std::istringstream ls(line);
    std::string a, b, c;
    if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c)) {
      throw FormatError(database_sidecar(path).string() + ": malformed row " + std::to_string(row + 2));
    }
    DatabaseEntry e;
    e.id = parse_value<RecordId>("id", detail::trim(a));
    e.northing = parse_value<double>("northing", detail::trim(b));
    e.easting = parse_value<double>("easting", detail::trim(c));
    e.descriptor = std::move(descs[row]);
    db.add(std::move(e));
    ++row;
  }
  if (row != count) throw FormatError(database_sidecar(path).string() + ": fewer rows than descriptors");
  return db;
}

}  // namespace minkloc
