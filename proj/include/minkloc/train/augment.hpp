#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "minkloc/core/quantize.hpp"

namespace minkloc {

struct AugmentConfig {
  double jitter_sigma = 0.001;
  double translation_max = 0.01;
  double removal_max_fraction = 0.10;
  // Random erasing: axis-aligned cuboid, centre uniform in the bounding box,
  // each edge a uniform fraction of the box extent on that axis.
  double erase_probability = 0.5;
  double erase_min_extent = 0.05;
  double erase_max_extent = 0.5;
  int erase_attempts = 10;

  static AugmentConfig none() { return {0, 0, 0, 0, 0, 0, 0}; }
};

// Fixed draws for testing individual stages; negative means "sample".
struct AugmentOverrides {
  double removal_fraction = -1;
};

// Jitter, translation, random point removal, then random erasing, in that
// order. Never returns an empty cloud.
template <typename Rng>
PointCloud augment(const PointCloud& cloud, const AugmentConfig& cfg, Rng& rng, AugmentOverrides overrides = {}) {
  PointCloud out = cloud;
  if (out.empty()) return out;

  if (cfg.jitter_sigma > 0) {
    std::normal_distribution<double> jitter(0.0, cfg.jitter_sigma);
    for (Point3& p : out.points) {
      p.x += jitter(rng);
      p.y += jitter(rng);
      p.z += jitter(rng);
    }
  }

  if (cfg.translation_max > 0) {
    std::normal_distribution<double> dir(0.0, 1.0);
    std::uniform_real_distribution<double> mag(0.0, cfg.translation_max);
    double v[3] = {dir(rng), dir(rng), dir(rng)};
    const double norm = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    const double m = mag(rng);
    if (norm > 0) {
      for (Point3& p : out.points) {
        p.x += m * v[0] / norm;
        p.y += m * v[1] / norm;
        p.z += m * v[2] / norm;
      }
    }
  }

  double fraction = overrides.removal_fraction;
  if (fraction < 0 && cfg.removal_max_fraction > 0) {
    fraction = std::uniform_real_distribution<double>(0.0, cfg.removal_max_fraction)(rng);
  }
  if (fraction > 0) {
    const std::size_t n = out.size();
    const std::size_t drop = std::min(n - 1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n))));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::uint8_t> keep(n, 1);
    for (std::size_t i = 0; i < drop; ++i) keep[idx[i]] = 0;
    std::vector<Point3> kept;
    kept.reserve(n - drop);
    for (std::size_t i = 0; i < n; ++i) {
      if (keep[i]) kept.push_back(out.points[i]);
    }
    out.points = std::move(kept);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  if (cfg.erase_probability > 0 && cfg.erase_max_extent > 0 && unit(rng) < cfg.erase_probability) {
    Point3 lo = out.points.front(), hi = out.points.front();
    for (const Point3& p : out.points) {
      lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
      hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    std::uniform_real_distribution<double> extent(cfg.erase_min_extent, cfg.erase_max_extent);
    for (int attempt = 0; attempt < cfg.erase_attempts; ++attempt) {
      const double ex = (hi.x - lo.x) * extent(rng), ey = (hi.y - lo.y) * extent(rng),
                   ez = (hi.z - lo.z) * extent(rng);
      const double cx = lo.x + unit(rng) * (hi.x - lo.x), cy = lo.y + unit(rng) * (hi.y - lo.y),
                   cz = lo.z + unit(rng) * (hi.z - lo.z);
      auto inside = [&](const Point3& p) {
        return std::abs(p.x - cx) < ex / 2 && std::abs(p.y - cy) < ey / 2 && std::abs(p.z - cz) < ez / 2;
      };
      std::vector<Point3> kept;
      kept.reserve(out.size());
      for (const Point3& p : out.points) {
        if (!inside(p)) kept.push_back(p);
      }
      if (!kept.empty()) {
        out.points = std::move(kept);
        break;
      }
    }
  }
  return out;
}

}  // namespace minkloc
