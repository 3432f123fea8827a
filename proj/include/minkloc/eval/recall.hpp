#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "minkloc/eval/database.hpp"

namespace minkloc {

struct EvalConfig {
  double success_radius = 25.0;  // metres, inclusive
  double top_n_percent = 1.0;
  int curve_max_n = 25;

  void validate() const {
    if (!(success_radius > 0)) throw DatasetError("success radius must be positive");
    if (!(top_n_percent > 0)) throw DatasetError("top_n_percent must be positive");
    if (curve_max_n < 1) throw DatasetError("curve_max_n must be at least 1");
  }

  void merge(const KeyValues& kv) {
    read_into(kv, "success_radius", success_radius);
    read_into(kv, "top_n_percent", top_n_percent);
    read_into(kv, "curve_max_n", curve_max_n);
  }

  KeyValues to_key_values() const {
    return {{"success_radius", to_text(success_radius)},
            {"top_n_percent", to_text(top_n_percent)},
            {"curve_max_n", to_text(curve_max_n)}};
  }
};

// Cutoff for AR@1%: round half up, never below 1.
inline std::size_t percent_cutoff(std::size_t db_size, double percent) {
  const auto n = static_cast<std::size_t>(std::floor(static_cast<double>(db_size) * percent / 100.0 + 0.5));
  return std::max<std::size_t>(n, 1);
}

namespace detail {

inline void check_disjoint(const DescriptorDatabase& queries, const DescriptorDatabase& db) {
  for (const auto& q : queries.entries()) {
    if (db.contains(q.id)) throw DatasetError("query id " + std::to_string(q.id) + " also appears in the database");
  }
}

// Rank (1-based) of the first database hit within the success radius, or 0.
inline std::size_t first_hit_rank(const DatabaseEntry& q, const DescriptorDatabase& db, std::size_t max_n,
                                  double radius) {
  const auto nn = knn(db, q.descriptor, max_n);
  for (std::size_t r = 0; r < nn.size(); ++r) {
    const auto& e = db.at(nn[r].id);
    if (std::hypot(e.northing - q.northing, e.easting - q.easting) <= radius) return r + 1;
  }
  return 0;
}

}  // namespace detail

// Recall@N for every N in 1..max_n (clamped to |db|), computed with one
// neighbour search per query.
inline std::vector<double> recall_curve(const DescriptorDatabase& queries, const DescriptorDatabase& db,
                                        std::size_t max_n, const EvalConfig& cfg = {}, Diagnostics* diag = nullptr) {
  cfg.validate();
  if (db.empty()) throw EmptyInput("empty database");
  if (queries.empty()) throw EmptyInput("empty query set");
  detail::check_disjoint(queries, db);
  if (max_n > db.size()) {
    warn(diag, "N=" + std::to_string(max_n) + " exceeds database size " + std::to_string(db.size()) + "; clamped");
    max_n = db.size();
  }
  std::vector<std::size_t> hits_at(max_n + 1, 0);
  for (const auto& q : queries.entries()) {
    const std::size_t r = detail::first_hit_rank(q, db, max_n, cfg.success_radius);
    if (r > 0) ++hits_at[r];
  }
  std::vector<double> curve(max_n);
  std::size_t cum = 0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    cum += hits_at[n];
    curve[n - 1] = static_cast<double>(cum) / static_cast<double>(queries.size());
  }
  return curve;
}

inline double recall_at_n(const DescriptorDatabase& queries, const DescriptorDatabase& db, std::size_t n,
                          const EvalConfig& cfg = {}, Diagnostics* diag = nullptr) {
  if (n == 0) throw DatasetError("recall@N requires N >= 1");
  return recall_curve(queries, db, n, cfg, diag).back();
}

struct PairingResult {
  std::string query_name;
  std::string db_name;
  std::size_t db_size = 0;
  std::size_t top_percent_n = 0;
  double recall_at_1 = 0;
  double recall_at_percent = 0;
  std::vector<double> curve;
};

struct AverageRecall {
  double ar_at_1 = 0;
  double ar_at_percent = 0;
  std::vector<double> curve;  // mean recall@N, N = 1..curve length
  std::vector<PairingResult> pairings;
};

struct NamedSet {
  std::string name;
  DescriptorDatabase set;
};

struct Pairing {
  std::size_t query;
  std::size_t db;
};

// Every ordered (i as queries, j as database) pair with i != j.
inline std::vector<Pairing> all_run_pairings(std::size_t runs) {
  std::vector<Pairing> out;
  for (std::size_t i = 0; i < runs; ++i) {
    for (std::size_t j = 0; j < runs; ++j) {
      if (i != j) out.push_back({i, j});
    }
  }
  return out;
}

inline AverageRecall average_recall(const std::vector<NamedSet>& sets, const std::vector<Pairing>& pairings,
                                    const EvalConfig& cfg = {}, Diagnostics* diag = nullptr) {
  if (pairings.empty()) throw DatasetError("average recall needs at least one query/database pairing");
  AverageRecall out;
  std::size_t curve_len = static_cast<std::size_t>(cfg.curve_max_n);
  for (const Pairing& p : pairings) curve_len = std::min(curve_len, sets.at(p.db).set.size());
  out.curve.assign(curve_len, 0.0);
  for (const Pairing& p : pairings) {
    const auto& q = sets.at(p.query);
    const auto& d = sets.at(p.db);
    PairingResult r;
    r.query_name = q.name;
    r.db_name = d.name;
    r.db_size = d.set.size();
    r.top_percent_n = percent_cutoff(d.set.size(), cfg.top_n_percent);
    const std::size_t depth = std::max<std::size_t>(r.top_percent_n, static_cast<std::size_t>(cfg.curve_max_n));
    const auto curve = recall_curve(q.set, d.set, std::min(depth, d.set.size()), cfg, diag);
    r.recall_at_1 = curve.front();
    r.recall_at_percent = curve[std::min(r.top_percent_n, curve.size()) - 1];
    r.curve.assign(curve.begin(), curve.begin() + static_cast<std::ptrdiff_t>(std::min(curve.size(), curve_len)));
    for (std::size_t n = 0; n < curve_len; ++n) out.curve[n] += curve[n] / static_cast<double>(pairings.size());
    out.ar_at_1 += r.recall_at_1 / static_cast<double>(pairings.size());
    out.ar_at_percent += r.recall_at_percent / static_cast<double>(pairings.size());
    out.pairings.push_back(std::move(r));
  }
  return out;
}

// Results CSV: summary rows, per-pairing rows, then the averaged curve.
inline std::string format_results_csv(const AverageRecall& ar) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "kind,query,database,n,recall\n";
  os << "AR@1,all,all,1," << ar.ar_at_1 << '\n';
  os << "AR@1%,all,all,," << ar.ar_at_percent << '\n';
  for (const auto& p : ar.pairings) {
    os << "pairing_recall@1," << p.query_name << ',' << p.db_name << ",1," << p.recall_at_1 << '\n';
    os << "pairing_recall@1%," << p.query_name << ',' << p.db_name << ',' << p.top_percent_n << ','
       << p.recall_at_percent << '\n';
  }
  for (std::size_t n = 0; n < ar.curve.size(); ++n) os << "curve,all,all," << n + 1 << ',' << ar.curve[n] << '\n';
  return os.str();
}

}  // namespace minkloc
