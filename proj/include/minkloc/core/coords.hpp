#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "minkloc/errors.hpp"

namespace minkloc {

// Integer voxel coordinate with a batch index. Spatial components are in
// voxel units of the finest lattice (stride 1).
struct VoxelCoord {
  std::int32_t batch = 0;
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;

  friend bool operator==(const VoxelCoord&, const VoxelCoord&) = default;
  friend auto operator<=>(const VoxelCoord&, const VoxelCoord&) = default;

  std::string str() const {
    return "(" + std::to_string(batch) + ": " + std::to_string(x) + ", " + std::to_string(y) + ", " +
           std::to_string(z) + ")";
  }
};

using Offset3 = std::array<int, 3>;

// Floor division for possibly negative numerators.
constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

constexpr std::int32_t align_down(std::int32_t value, std::int32_t stride) {
  return static_cast<std::int32_t>(floor_div(value, stride) * stride);
}

namespace detail {

inline constexpr std::int32_t kCoordMin = std::numeric_limits<std::int16_t>::min();
inline constexpr std::int32_t kCoordMax = std::numeric_limits<std::int16_t>::max();
inline constexpr std::int32_t kBatchMax = std::numeric_limits<std::uint16_t>::max();

inline bool packable(const VoxelCoord& c) {
  return c.batch >= 0 && c.batch <= kBatchMax && c.x >= kCoordMin && c.x <= kCoordMax && c.y >= kCoordMin &&
         c.y <= kCoordMax && c.z >= kCoordMin && c.z <= kCoordMax;
}

// 16 bits per component. Injective on the packable range, so the hash table
// never has to compare full coordinates.
inline std::uint64_t pack(const VoxelCoord& c) {
  auto u16 = [](std::int32_t v) { return static_cast<std::uint64_t>(static_cast<std::uint16_t>(v)); };
  return (static_cast<std::uint64_t>(c.batch) << 48) | (u16(c.x) << 32) | (u16(c.y) << 16) | u16(c.z);
}

// Fibonacci hashing; callers take the high bits via slot_of().
inline std::uint64_t mix(std::uint64_t k) { return k * 0x9e3779b97f4a7c15ULL; }

}  // namespace detail

struct VoxelCoordHash {
  std::size_t operator()(const VoxelCoord& c) const { return detail::mix(detail::pack(c)); }
};

// Open-addressing hash map from packed coordinate to row index.
class CoordinateIndex {
 public:
  CoordinateIndex() { rehash(16); }
  explicit CoordinateIndex(std::size_t expected) { rehash(capacity_for(expected)); }

  // Returns the existing row for `c` or inserts `row` and returns it.
  std::int32_t insert(const VoxelCoord& c, std::int32_t row) {
    if (!detail::packable(c)) {
      throw ShapeError("voxel coordinate out of the representable range: " + c.str());
    }
    if ((size_ + 1) * 2 > slots_.size()) rehash(slots_.size() * 2);
    const std::uint64_t key = detail::pack(c);
    std::size_t pos = slot_of(key);
    while (true) {
      Slot& s = slots_[pos];
      if (s.row < 0) {
        s.key = key;
        s.row = row;
        ++size_;
        return row;
      }
      if (s.key == key) return s.row;
      pos = (pos + 1) & mask_;
    }
  }

  // Row of `c`, or -1 if absent.
  std::int32_t find(const VoxelCoord& c) const {
    if (!detail::packable(c)) return -1;
    const std::uint64_t key = detail::pack(c);
    std::size_t pos = slot_of(key);
    while (true) {
      const Slot& s = slots_[pos];
      if (s.row < 0) return -1;
      if (s.key == key) return s.row;
      pos = (pos + 1) & mask_;
    }
  }

  std::size_t size() const { return size_; }

 private:
  struct Slot {
    std::uint64_t key = 0;
    std::int32_t row = -1;
  };

  static std::size_t capacity_for(std::size_t n) {
    std::size_t cap = 16;
    while (cap < n * 2 + 2) cap <<= 1;
    return cap;
  }

  std::size_t slot_of(std::uint64_t key) const { return static_cast<std::size_t>(detail::mix(key) >> shift_); }

  void rehash(std::size_t capacity) {
    std::vector<Slot> old;
    old.swap(slots_);
    slots_.assign(capacity, Slot{});
    mask_ = capacity - 1;
    shift_ = 64 - std::countr_zero(capacity);
    size_ = 0;
    for (const Slot& s : old) {
      if (s.row < 0) continue;
      std::size_t pos = slot_of(s.key);
      while (slots_[pos].row >= 0) pos = (pos + 1) & mask_;
      slots_[pos] = s;
      ++size_;
    }
  }

  std::vector<Slot> slots_;
  std::size_t mask_ = 0;
  int shift_ = 64;
  std::size_t size_ = 0;
};

// An immutable set of distinct voxel coordinates living on a lattice of the
// given stride, plus its hash index. Row order is the construction order.
class CoordinateSet {
 public:
  // Throws ShapeError on duplicates or on coordinates not aligned to stride.
  CoordinateSet(std::vector<VoxelCoord> coords, int stride) : coords_(std::move(coords)), stride_(stride) {
    if (stride_ <= 0) throw StrideError("tensor stride must be positive");
    index_ = CoordinateIndex(coords_.size());
    for (std::size_t i = 0; i < coords_.size(); ++i) {
      const VoxelCoord& c = coords_[i];
      if (c.batch < 0) throw ShapeError("negative batch index in " + c.str());
      if (c.x % stride_ != 0 || c.y % stride_ != 0 || c.z % stride_ != 0) {
        throw ShapeError("coordinate " + c.str() + " is not aligned to stride " + std::to_string(stride_));
      }
      if (index_.insert(c, static_cast<std::int32_t>(i)) != static_cast<std::int32_t>(i)) {
        throw ShapeError("duplicate coordinate " + c.str());
      }
    }
  }

  // Keeps the first occurrence of every coordinate, preserving order.
  static CoordinateSet unique(const std::vector<VoxelCoord>& coords, int stride) {
    CoordinateIndex seen(coords.size());
    std::vector<VoxelCoord> kept;
    kept.reserve(coords.size());
    for (const VoxelCoord& c : coords) {
      const auto next = static_cast<std::int32_t>(kept.size());
      if (seen.insert(c, next) == next) kept.push_back(c);
    }
    return CoordinateSet(std::move(kept), stride);
  }

  std::size_t size() const { return coords_.size(); }
  bool empty() const { return coords_.empty(); }
  int stride() const { return stride_; }
  const std::vector<VoxelCoord>& coords() const { return coords_; }
  const VoxelCoord& operator[](std::size_t row) const { return coords_[row]; }
  std::int32_t find(const VoxelCoord& c) const { return index_.find(c); }
  bool contains(const VoxelCoord& c) const { return find(c) >= 0; }

  // Number of batch items, i.e. max batch index + 1.
  int batch_count() const {
    int n = 0;
    for (const VoxelCoord& c : coords_) n = std::max(n, c.batch + 1);
    return n;
  }

 private:
  std::vector<VoxelCoord> coords_;
  int stride_;
  CoordinateIndex index_;
};

using CoordinateSetPtr = std::shared_ptr<const CoordinateSet>;

}  // namespace minkloc
