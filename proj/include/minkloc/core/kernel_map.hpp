#pragma once

#include <cstdint>
#include <vector>

#include "minkloc/core/coords.hpp"
#include "minkloc/errors.hpp"

namespace minkloc {

// Kernel offsets in weight-layout order (x slowest, z fastest).
// Odd K is centred: {-(K-1)/2 .. (K-1)/2}^3. Even K is anchored at the
// output voxel: {0 .. K-1}^3, so a K=2/stride-2 conv partitions its inputs.
inline std::vector<Offset3> kernel_offsets(int kernel_size) {
  if (kernel_size <= 0) throw ShapeError("kernel size must be positive");
  const int lo = (kernel_size % 2 == 1) ? -(kernel_size - 1) / 2 : 0;
  std::vector<Offset3> out;
  out.reserve(static_cast<std::size_t>(kernel_size) * kernel_size * kernel_size);
  for (int dx = 0; dx < kernel_size; ++dx) {
    for (int dy = 0; dy < kernel_size; ++dy) {
      for (int dz = 0; dz < kernel_size; ++dz) out.push_back({lo + dx, lo + dy, lo + dz});
    }
  }
  return out;
}

inline int kernel_volume(int kernel_size) { return kernel_size * kernel_size * kernel_size; }

// Gather/scatter pairs per kernel offset. Pairs under one offset are ordered
// by output row, which fixes the accumulation order of every consumer.
struct KernelMap {
  struct Pairs {
    std::vector<std::int32_t> in_rows;
    std::vector<std::int32_t> out_rows;

    std::size_t size() const { return in_rows.size(); }
  };

  int kernel_size = 1;
  std::vector<Offset3> offsets;
  std::vector<Pairs> pairs;  // parallel to offsets
  std::size_t n_in = 0;
  std::size_t n_out = 0;

  std::size_t total_pairs() const {
    std::size_t n = 0;
    for (const auto& p : pairs) n += p.size();
    return n;
  }
};

// For each output voxel o and offset d, pairs (i, o) where input voxel i sits
// at o + d * dilation. `dilation` is normally the input tensor stride.
inline KernelMap build_kernel_map(const CoordinateSet& in, const CoordinateSet& out, int kernel_size,
                                  int dilation) {
  if (dilation <= 0) throw StrideError("kernel dilation must be positive");
  KernelMap map;
  map.kernel_size = kernel_size;
  map.offsets = kernel_offsets(kernel_size);
  map.pairs.resize(map.offsets.size());
  map.n_in = in.size();
  map.n_out = out.size();
  const std::size_t volume = map.offsets.size();
  for (auto& p : map.pairs) {
    p.in_rows.reserve(out.size() / volume + 8);
    p.out_rows.reserve(out.size() / volume + 8);
  }
  for (std::size_t o = 0; o < out.size(); ++o) {
    const VoxelCoord& c = out[o];
    for (std::size_t k = 0; k < volume; ++k) {
      const Offset3& d = map.offsets[k];
      const std::int32_t i =
          in.find({c.batch, c.x + d[0] * dilation, c.y + d[1] * dilation, c.z + d[2] * dilation});
      if (i >= 0) {
        map.pairs[k].in_rows.push_back(i);
        map.pairs[k].out_rows.push_back(static_cast<std::int32_t>(o));
      }
    }
  }
  return map;
}

// Output lattice of a transposed conv: union of c + d * out_stride over input
// coordinates c and even-kernel offsets d, in order of first generation.
inline CoordinateSet upsample_coords(const CoordinateSet& in, int kernel_size, int stride_factor) {
  if (stride_factor <= 0 || in.stride() % stride_factor != 0) {
    throw StrideError("input stride " + std::to_string(in.stride()) + " is not divisible by " +
                      std::to_string(stride_factor));
  }
  const int out_stride = in.stride() / stride_factor;
  const auto offsets = kernel_offsets(kernel_size);
  std::vector<VoxelCoord> out;
  out.reserve(in.size() * offsets.size());
  for (const VoxelCoord& c : in.coords()) {
    for (const Offset3& d : offsets) {
      out.push_back({c.batch, c.x + d[0] * out_stride, c.y + d[1] * out_stride, c.z + d[2] * out_stride});
    }
  }
  return CoordinateSet::unique(out, out_stride);
}

}  // namespace minkloc
