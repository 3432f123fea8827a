#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "minkloc/binary_io.hpp"
#include "minkloc/errors.hpp"

namespace minkloc {

using RecordId = std::int64_t;

enum class Split { Train, Test };

inline std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

struct PointCloudRecord {
  RecordId id = 0;
  std::string path;  // relative to the dataset root
  double northing = 0;
  double easting = 0;
  Split split = Split::Train;
};

inline double geo_distance(const PointCloudRecord& a, const PointCloudRecord& b) {
  return std::hypot(a.northing - b.northing, a.easting - b.easting);
}

// ---------------------------------------------------------------------------
// Index CSV: header `id,path,northing,easting,split`
// ---------------------------------------------------------------------------

inline constexpr const char* kIndexHeader = "id,path,northing,easting,split";

inline std::vector<PointCloudRecord> parse_index_csv(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError(origin + ": empty index file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kIndexHeader) throw FormatError(origin + ": expected header '" + kIndexHeader + "'");
  std::vector<PointCloudRecord> out;
  std::unordered_set<RecordId> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    const std::string where = origin + ":" + std::to_string(line_no);
    if (cols.size() != 5) throw FormatError(where + ": expected 5 columns");
    PointCloudRecord r;
    try {
      std::size_t used = 0;
      r.id = std::stoll(cols[0], &used);
      if (used != cols[0].size()) throw std::invalid_argument("id");
      r.northing = std::stod(cols[2]);
      r.easting = std::stod(cols[3]);
    } catch (const std::logic_error&) {
      throw FormatError(where + ": malformed number");
    }
    if (!std::isfinite(r.northing) || !std::isfinite(r.easting)) throw FormatError(where + ": non-finite geo-tag");
    r.path = cols[1];
    if (cols[4] == "train") {
      r.split = Split::Train;
    } else if (cols[4] == "test") {
      r.split = Split::Test;
    } else {
      throw FormatError(where + ": split must be train or test");
    }
    if (!seen.insert(r.id).second) throw FormatError(where + ": duplicate id " + std::to_string(r.id));
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<PointCloudRecord> load_index_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DatasetError("index file not found: " + path.string());
  return parse_index_csv(read_file(path), path.string());
}

inline std::string format_index_csv(const std::vector<PointCloudRecord>& records) {
  std::ostringstream os;
  os.precision(17);
  os << kIndexHeader << '\n';
  for (const auto& r : records) {
    os << r.id << ',' << r.path << ',' << r.northing << ',' << r.easting << ',' << to_string(r.split) << '\n';
  }
  return os.str();
}

inline void save_index_csv(const std::vector<PointCloudRecord>& records, const std::filesystem::path& path) {
  write_file_atomic(path, format_index_csv(records));
}

// ---------------------------------------------------------------------------
// Training tuples
// ---------------------------------------------------------------------------

struct TrainingTuple {
  RecordId id = 0;
  std::unordered_set<RecordId> positives;      // distance <= positive radius
  std::unordered_set<RecordId> non_negatives;  // distance < negative radius (superset of positives)
};

struct TupleRadii {
  double positive = 10.0;
  double negative = 50.0;
};

using TupleMap = std::unordered_map<RecordId, TrainingTuple>;

// Positives: distance <= radii.positive. Non-negatives: distance <
// radii.negative. Anything at >= radii.negative is a valid negative. Self is in
// neither set. Neighbours are found through a grid of negative-radius cells.
inline TupleMap build_tuples(const std::vector<PointCloudRecord>& records, TupleRadii radii = {}) {
  if (!(radii.positive > 0) || !(radii.negative >= radii.positive)) {
    throw DatasetError("tuple radii must satisfy 0 < positive <= negative");
  }
  auto cell_of = [&](const PointCloudRecord& r) {
    return std::pair<std::int64_t, std::int64_t>(static_cast<std::int64_t>(std::floor(r.northing / radii.negative)),
                                                 static_cast<std::int64_t>(std::floor(r.easting / radii.negative)));
  };
  std::map<std::pair<std::int64_t, std::int64_t>, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < records.size(); ++i) grid[cell_of(records[i])].push_back(i);

  TupleMap tuples;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    TrainingTuple t;
    t.id = r.id;
    const auto [cn, ce] = cell_of(r);
    for (std::int64_t dn = -1; dn <= 1; ++dn) {
      for (std::int64_t de = -1; de <= 1; ++de) {
        auto it = grid.find({cn + dn, ce + de});
        if (it == grid.end()) continue;
        for (std::size_t j : it->second) {
          if (j == i) continue;
          const double d = geo_distance(r, records[j]);
          if (d < radii.negative) t.non_negatives.insert(records[j].id);
          if (d <= radii.positive) t.positives.insert(records[j].id);
        }
      }
    }
    if (!tuples.emplace(r.id, std::move(t)).second) throw DatasetError("duplicate record id " + std::to_string(r.id));
  }
  return tuples;
}

// Records plus their tuples, addressed by id.
struct Dataset {
  std::filesystem::path root;
  std::vector<PointCloudRecord> records;
  TupleMap tuples;

  const PointCloudRecord& record(RecordId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) throw KeyError("unknown record id " + std::to_string(id));
    return records[it->second];
  }

  const TrainingTuple& tuple(RecordId id) const {
    auto it = tuples.find(id);
    if (it == tuples.end()) throw KeyError("unknown record id " + std::to_string(id));
    return it->second;
  }

  std::filesystem::path cloud_path(RecordId id) const { return root / record(id).path; }

  static Dataset make(std::filesystem::path root, std::vector<PointCloudRecord> records, TupleRadii radii = {}) {
    Dataset d;
    d.root = std::move(root);
    d.records = std::move(records);
    d.tuples = build_tuples(d.records, radii);
    for (std::size_t i = 0; i < d.records.size(); ++i) d.by_id_[d.records[i].id] = i;
    return d;
  }

  // Loads `index` (relative to root unless absolute), keeping only `split`.
  static Dataset load(const std::filesystem::path& root, const std::filesystem::path& index,
                      std::optional<Split> split = Split::Train, TupleRadii radii = {}) {
    auto records = load_index_csv(index.is_absolute() ? index : root / index);
    if (split) std::erase_if(records, [&](const PointCloudRecord& r) { return r.split != *split; });
    if (records.empty()) throw DatasetError("no records in " + index.string());
    return make(root, std::move(records), radii);
  }

 private:
  std::unordered_map<RecordId, std::size_t> by_id_;
};

}  // namespace minkloc
