#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "minkloc/binary_io.hpp"
#include "minkloc/core/quantize.hpp"
#include "minkloc/diagnostics.hpp"

namespace minkloc {

// Benchmark clouds are 4096 points; 0 disables the count check.
inline constexpr std::size_t kBenchmarkPointCount = 4096;

struct CloudLoadOptions {
  std::size_t expected_points = 0;
};

// Raw binary: 64-bit little-endian reals, (x, y, z) interleaved per point.
inline PointCloud decode_cloud(const std::string& bytes, const std::string& origin, const CloudLoadOptions& opts = {},
                               Diagnostics* diag = nullptr) {
  if (bytes.empty()) throw EmptyInput(origin + ": empty point cloud file");
  if (bytes.size() % 24 != 0) {
    throw FormatError(origin + ": size " + std::to_string(bytes.size()) + " is not a multiple of 24 bytes");
  }
  const std::size_t n = bytes.size() / 24;
  if (opts.expected_points != 0 && n != opts.expected_points) {
    throw FormatError(origin + ": expected " + std::to_string(opts.expected_points) + " points, found " +
                      std::to_string(n));
  }
  ByteReader r(bytes, origin);
  PointCloud cloud;
  cloud.source_id = origin;
  cloud.points.resize(n);
  bool out_of_range = false;
  for (Point3& p : cloud.points) {
    p.x = r.f64();
    p.y = r.f64();
    p.z = r.f64();
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw FormatError(origin + ": non-finite coordinate");
    }
    out_of_range = out_of_range || std::abs(p.x) > 1.0 || std::abs(p.y) > 1.0 || std::abs(p.z) > 1.0;
  }
  if (out_of_range) warn(diag, origin + ": coordinates outside [-1, 1]");
  return cloud;
}

inline PointCloud load_cloud(const std::filesystem::path& path, const CloudLoadOptions& opts = {},
                             Diagnostics* diag = nullptr) {
  return decode_cloud(read_file(path), path.string(), opts, diag);
}

inline std::string encode_cloud(const PointCloud& cloud) {
  ByteWriter w;
  for (const Point3& p : cloud.points) {
    w.f64(p.x);
    w.f64(p.y);
    w.f64(p.z);
  }
  return std::move(w).str();
}

inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path) {
  write_file_atomic(path, encode_cloud(cloud));
}

}  // namespace minkloc
