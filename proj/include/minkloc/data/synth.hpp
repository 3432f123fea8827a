#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "minkloc/data/cloud_io.hpp"
#include "minkloc/data/dataset.hpp"

namespace minkloc {

// Desk-scale stand-in for a LiDAR benchmark: each place is a random scene of
// boxes on a ground plane; each revisit re-samples the scene under a small
// pose change and sensor noise, then normalises it into [-1, 1].
struct SynthConfig {
  int n_places = 20;
  int n_revisits = 5;
  std::size_t points_per_cloud = kBenchmarkPointCount;
  std::uint64_t seed = 0;
  double place_spacing_m = 100.0;     // must exceed the 50 m negative radius
  double revisit_jitter_m = 3.0;      // geo-tag jitter of a revisit around its place
  double pose_jitter = 0.05;          // scene translation per revisit (scene units)
  double yaw_jitter_deg = 5.0;
  double point_noise = 0.005;
  int test_places = 0;                // last places marked as the test split
};

struct SynthDataset {
  std::vector<PointCloudRecord> records;
  std::vector<std::vector<RecordId>> runs;  // runs[k] = records of revisit k
  std::vector<int> place_of;                // parallel to records
};

namespace detail {

struct Box {
  std::array<double, 3> lo;
  std::array<double, 3> hi;
};

inline std::vector<Box> random_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(4, 8);
  std::vector<Box> boxes;
  // ground slab
  boxes.push_back({{-5.0, -5.0, -1.2}, {5.0, 5.0, -1.0}});
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Box b;
    for (int a = 0; a < 3; ++a) {
      const double size = a == 2 ? 0.3 + 2.0 * u(rng) : 0.3 + 2.5 * u(rng);
      const double centre = a == 2 ? -1.0 + size / 2 : -4.0 + 8.0 * u(rng);
      b.lo[static_cast<std::size_t>(a)] = centre - size / 2;
      b.hi[static_cast<std::size_t>(a)] = centre + size / 2;
    }
    boxes.push_back(b);
  }
  return boxes;
}

// Uniform samples on the union of box surfaces (area-weighted faces).
inline std::vector<Point3> sample_surfaces(const std::vector<Box>& boxes, std::size_t n, std::mt19937_64& rng) {
  struct Face {
    int axis;
    double fixed;
    Box box;
    double area;
  };
  std::vector<Face> faces;
  for (const Box& b : boxes) {
    for (int axis = 0; axis < 3; ++axis) {
      const int u_ax = (axis + 1) % 3;
      const int v_ax = (axis + 2) % 3;
      const double area = (b.hi[static_cast<std::size_t>(u_ax)] - b.lo[static_cast<std::size_t>(u_ax)]) *
                          (b.hi[static_cast<std::size_t>(v_ax)] - b.lo[static_cast<std::size_t>(v_ax)]);
      faces.push_back({axis, b.lo[static_cast<std::size_t>(axis)], b, area});
      faces.push_back({axis, b.hi[static_cast<std::size_t>(axis)], b, area});
    }
  }
  std::vector<double> weights;
  for (const Face& f : faces) weights.push_back(f.area);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Face& f = faces[pick(rng)];
    std::array<double, 3> p{};
    for (int a = 0; a < 3; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      p[ua] = a == f.axis ? f.fixed : f.box.lo[ua] + u(rng) * (f.box.hi[ua] - f.box.lo[ua]);
    }
    pts.push_back({p[0], p[1], p[2]});
  }
  return pts;
}

// Zero mean, then scaled so the largest |coordinate| is 1.
inline void normalize_cloud(PointCloud& cloud) {
  double mx = 0, my = 0, mz = 0;
  for (const Point3& p : cloud.points) {
    mx += p.x;
    my += p.y;
    mz += p.z;
  }
  const double n = static_cast<double>(cloud.size());
  mx /= n;
  my /= n;
  mz /= n;
  double scale = 0;
  for (Point3& p : cloud.points) {
    p.x -= mx;
    p.y -= my;
    p.z -= mz;
    scale = std::max({scale, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
  }
  if (scale > 0) {
    for (Point3& p : cloud.points) {
      p.x /= scale;
      p.y /= scale;
      p.z /= scale;
    }
  }
}

}  // namespace detail

// One revisit of a place, generated in memory.
inline PointCloud synth_revisit(const SynthConfig& cfg, int place, int revisit) {
  std::mt19937_64 scene_rng(cfg.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(place) * 7919 + 1);
  const auto boxes = detail::random_scene(scene_rng);
  std::mt19937_64 rng(cfg.seed * 0x100000001b3ULL + static_cast<std::uint64_t>(place) * 7919 +
                      static_cast<std::uint64_t>(revisit) * 104729 + 2);
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.point_noise);
  const double yaw = sym(rng) * cfg.yaw_jitter_deg * std::numbers::pi / 180.0;
  const double tx = sym(rng) * cfg.pose_jitter * 5.0;
  const double ty = sym(rng) * cfg.pose_jitter * 5.0;
  PointCloud cloud;
  cloud.source_id = "place" + std::to_string(place) + "_visit" + std::to_string(revisit);
  const double c = std::cos(yaw), s = std::sin(yaw);
  for (const Point3& p : detail::sample_surfaces(boxes, cfg.points_per_cloud, rng)) {
    const double x = c * p.x - s * p.y + tx + noise(rng) * 5.0;
    const double y = s * p.x + c * p.y + ty + noise(rng) * 5.0;
    const double z = p.z + noise(rng) * 5.0;
    cloud.points.push_back({x, y, z});
  }
  detail::normalize_cloud(cloud);
  return cloud;
}

// Generates the dataset in memory; ids are place * n_revisits + revisit.
inline SynthDataset synth_records(const SynthConfig& cfg) {
  if (cfg.n_places < 2) throw DatasetError("synthetic dataset needs at least 2 places");
  if (cfg.n_revisits < 1) throw DatasetError("synthetic dataset needs at least 1 revisit");
  if (cfg.place_spacing_m <= 50.0 + 2 * cfg.revisit_jitter_m) {
    throw DatasetError("place spacing must keep different places at least 50 m apart");
  }
  SynthDataset out;
  out.runs.resize(static_cast<std::size_t>(cfg.n_revisits));
  std::mt19937_64 geo(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int place = 0; place < cfg.n_places; ++place) {
    const double north = 1000.0 + place * cfg.place_spacing_m;
    const double east = 500.0;
    for (int visit = 0; visit < cfg.n_revisits; ++visit) {
      const double r = cfg.revisit_jitter_m * std::sqrt(u(geo));
      const double a = 2 * std::numbers::pi * u(geo);
      PointCloudRecord rec;
      rec.id = static_cast<RecordId>(place) * cfg.n_revisits + visit;
      rec.path = "clouds/" + std::to_string(rec.id) + ".bin";
      rec.northing = north + r * std::cos(a);
      rec.easting = east + r * std::sin(a);
      rec.split = place >= cfg.n_places - cfg.test_places ? Split::Test : Split::Train;
      out.records.push_back(rec);
      out.place_of.push_back(place);
      out.runs[static_cast<std::size_t>(visit)].push_back(rec.id);
    }
  }
  return out;
}

// Writes clouds, `index.csv` (all records) and `run_<k>.csv` (one file per
// revisit) under `root`.
inline SynthDataset synth_dataset(const SynthConfig& cfg, const std::filesystem::path& root) {
  SynthDataset ds = synth_records(cfg);
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const auto& rec = ds.records[i];
    const int visit = static_cast<int>(rec.id % cfg.n_revisits);
    save_cloud(synth_revisit(cfg, ds.place_of[i], visit), root / rec.path);
  }
  save_index_csv(ds.records, root / "index.csv");
  for (std::size_t k = 0; k < ds.runs.size(); ++k) {
    std::vector<PointCloudRecord> run;
    for (const auto& rec : ds.records) {
      if (static_cast<std::size_t>(rec.id % cfg.n_revisits) == k) run.push_back(rec);
    }
    save_index_csv(run, root / ("run_" + std::to_string(k) + ".csv"));
  }
  return ds;
}

}  // namespace minkloc
