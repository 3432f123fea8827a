#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "minkloc/core/coords.hpp"
#include "minkloc/core/sparse_tensor.hpp"
#include "minkloc/errors.hpp"

namespace minkloc {

struct Point3 {
  double x = 0;
  double y = 0;
  double z = 0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

struct PointCloud {
  std::vector<Point3> points;
  std::string source_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// Voxelizes a cloud into a single-channel occupancy tensor at stride 1.
// Voxel = floor(coord / step) per axis; rows are in order of first occurrence.
template <typename S = double>
SparseTensor<S> quantize(const PointCloud& cloud, double step, int batch = 0) {
  if (!(step > 0)) throw ShapeError("quantization step must be positive");
  if (cloud.empty()) throw EmptyInput("cannot quantize an empty point cloud");
  std::vector<VoxelCoord> coords;
  coords.reserve(cloud.size());
  for (const Point3& p : cloud.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw ShapeError("non-finite point in cloud '" + cloud.source_id + "'");
    }
    coords.push_back({batch, static_cast<std::int32_t>(std::floor(p.x / step)),
                      static_cast<std::int32_t>(std::floor(p.y / step)),
                      static_cast<std::int32_t>(std::floor(p.z / step))});
  }
  auto set = std::make_shared<const CoordinateSet>(CoordinateSet::unique(coords, 1));
  const auto n = static_cast<Eigen::Index>(set->size());
  return SparseTensor<S>(std::move(set), Matrix<S>::Ones(n, 1));
}

// Stride-aligned floor of every coordinate; unique, in order of first
// occurrence. The returned set lives at stride `in.stride() * factor`.
inline CoordinateSet downsample_coords(const CoordinateSet& in, int factor = 2) {
  if (factor <= 0) throw StrideError("downsample factor must be positive");
  const int out_stride = in.stride() * factor;
  std::vector<VoxelCoord> out;
  out.reserve(in.size());
  for (const VoxelCoord& c : in.coords()) {
    out.push_back({c.batch, align_down(c.x, out_stride), align_down(c.y, out_stride), align_down(c.z, out_stride)});
  }
  return CoordinateSet::unique(out, out_stride);
}

// Stacks per-item tensors (which must carry distinct batch indices) into one.
template <typename S>
SparseTensor<S> concatenate(const std::vector<SparseTensor<S>>& parts) {
  if (parts.empty()) throw EmptyInput("nothing to concatenate");
  const int stride = parts.front().stride();
  const Eigen::Index channels = parts.front().channels();
  std::vector<VoxelCoord> coords;
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.stride() != stride || p.channels() != channels) {
      throw ShapeError("concatenate: stride or channel mismatch");
    }
    rows += static_cast<Eigen::Index>(p.size());
  }
  coords.reserve(static_cast<std::size_t>(rows));
  Matrix<S> feats(rows, channels);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    coords.insert(coords.end(), p.coordinates().coords().begin(), p.coordinates().coords().end());
    feats.middleRows(at, static_cast<Eigen::Index>(p.size())) = p.features();
    at += static_cast<Eigen::Index>(p.size());
  }
  return SparseTensor<S>(std::make_shared<const CoordinateSet>(std::move(coords), stride), std::move(feats));
}

}  // namespace minkloc
