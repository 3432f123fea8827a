#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "minkloc/binary_io.hpp"
#include "minkloc/model/minkloc3d.hpp"

namespace minkloc {

// Checkpoint container, all integers and floats little-endian:
//   "MLK3CKPT"            8-byte magic
//   u32 version           (= 1)
//   u32 len, bytes        model config as key=value text
//   u32 count             number of tensors
//   count x { u32 name_len, name bytes, u32 ndim, i64 dims[ndim], f64 data[prod(dims)] }
// Tensors appear in the model's parameter order; BN running statistics are
// stored as ordinary tensors (*.bn.mean / *.bn.var).
struct CheckpointTensor {
  std::vector<std::int64_t> shape;
  std::vector<double> data;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<std::pair<std::string, CheckpointTensor>> tensors;
};

inline constexpr char kCheckpointMagic[8] = {'M', 'L', 'K', '3', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename S>
Checkpoint make_checkpoint(const MinkLoc3D<S>& model) {
  Checkpoint ck;
  ck.config = model.config();
  model.for_each_parameter([&](const nn::Parameter<S>& p) {
    CheckpointTensor t;
    t.shape = p.shape;
    t.data.resize(static_cast<std::size_t>(p.value.size()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) t.data[static_cast<std::size_t>(i)] = static_cast<double>(p.value.data()[i]);
    ck.tensors.emplace_back(p.name, std::move(t));
  });
  return ck;
}

inline std::string encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.u32(kCheckpointVersion);
  w.string(format_key_values(ck.config.to_key_values()));
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    w.string(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (std::int64_t d : t.shape) w.i64(d);
    for (double v : t.data) w.f64(v);
  }
  return std::move(w).str();
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "<checkpoint>") {
  ByteReader r(bytes, origin);
  char magic[8];
  r.raw(magic, sizeof(magic));
  if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) throw FormatError(origin + ": not a checkpoint file");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.config = ModelConfig::from_key_values(parse_key_values(r.string(), origin));
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.string();
    CheckpointTensor t;
    const std::uint32_t ndim = r.u32();
    if (ndim > 8) throw FormatError(origin + ": tensor '" + name + "' has implausible rank");
    std::int64_t numel = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::int64_t dim = r.i64();
      if (dim < 0) throw FormatError(origin + ": negative dimension in '" + name + "'");
      t.shape.push_back(dim);
      numel *= dim;
    }
    if (static_cast<std::uint64_t>(numel) * 8 > r.remaining()) {
      throw FormatError(origin + ": tensor '" + name + "' is truncated");
    }
    t.data.resize(static_cast<std::size_t>(numel));
    for (double& v : t.data) v = r.f64();
    ck.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw FormatError(origin + ": trailing bytes after last tensor");
  return ck;
}

// Builds a model from a checkpoint; every parameter must be present with a
// matching shape.
template <typename S>
MinkLoc3D<S> model_from_checkpoint(const Checkpoint& ck) {
  MinkLoc3D<S> model(ck.config);
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& [name, t] : ck.tensors) by_name[name] = &t;
  model.for_each_parameter([&](nn::Parameter<S>& p) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("checkpoint is missing tensor '" + p.name + "'");
    const CheckpointTensor& t = *it->second;
    if (t.shape != p.shape) throw FormatError("checkpoint tensor '" + p.name + "' has the wrong shape");
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double v = t.data[static_cast<std::size_t>(i)];
      if (!std::isfinite(v)) throw FormatError("checkpoint tensor '" + p.name + "' has non-finite values");
      p.value.data()[i] = static_cast<S>(v);
    }
  });
  return model;
}

template <typename S>
void save_checkpoint(const MinkLoc3D<S>& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(make_checkpoint(model)));
}

template <typename S>
MinkLoc3D<S> load_checkpoint(const std::filesystem::path& path) {
  return model_from_checkpoint<S>(decode_checkpoint(read_file(path), path.string()));
}

}  // namespace minkloc
