#pragma once

#include <set>
#include <string>

#include "minkloc/errors.hpp"
#include "minkloc/kv.hpp"

namespace minkloc {

enum class Pooling { GeM, MAC };

inline std::string to_string(Pooling p) { return p == Pooling::GeM ? "gem" : "mac"; }

inline Pooling parse_pooling(const std::string& s) {
  if (s == "gem" || s == "GeM") return Pooling::GeM;
  if (s == "mac" || s == "MAC") return Pooling::MAC;
  throw FormatError("unknown pooling '" + s + "' (expected gem or mac)");
}

struct ModelConfig {
  int conv0_channels = 32;
  int conv1_channels = 32;
  int conv2_channels = 64;
  int conv3_channels = 64;
  // Also the channel count of both lateral 1x1 convs and the transposed conv.
  int descriptor_dim = 256;
  Pooling pooling = Pooling::GeM;
  double gem_p_init = 3.0;
  double quantization_step = 0.01;
  bool normalize_descriptor = false;

  void validate() const {
    for (int c : {conv0_channels, conv1_channels, conv2_channels, conv3_channels, descriptor_dim}) {
      if (c <= 0) throw ShapeError("channel counts must be positive");
    }
    if (!(gem_p_init > 0)) throw ShapeError("gem_p_init must be positive");
    if (!(quantization_step > 0)) throw ShapeError("quantization_step must be positive");
  }

  // Sizes evaluated in the descriptor-size ablation.
  static bool standard_descriptor_dim(int d) {
    static const std::set<int> dims{32, 64, 128, 256, 512};
    return dims.count(d) != 0;
  }

  KeyValues to_key_values() const {
    return {{"conv0_channels", to_text(conv0_channels)},
            {"conv1_channels", to_text(conv1_channels)},
            {"conv2_channels", to_text(conv2_channels)},
            {"conv3_channels", to_text(conv3_channels)},
            {"descriptor_dim", to_text(descriptor_dim)},
            {"pooling", to_string(pooling)},
            {"gem_p_init", to_text(gem_p_init)},
            {"quantization_step", to_text(quantization_step)},
            {"normalize_descriptor", to_text(normalize_descriptor)}};
  }

  static ModelConfig from_key_values(const KeyValues& kv) {
    ModelConfig c;
    c.merge(kv);
    return c;
  }

  void merge(const KeyValues& kv) {
    read_into(kv, "conv0_channels", conv0_channels);
    read_into(kv, "conv1_channels", conv1_channels);
    read_into(kv, "conv2_channels", conv2_channels);
    read_into(kv, "conv3_channels", conv3_channels);
    read_into(kv, "descriptor_dim", descriptor_dim);
    if (auto it = kv.find("pooling"); it != kv.end()) pooling = parse_pooling(it->second);
    read_into(kv, "gem_p_init", gem_p_init);
    read_into(kv, "quantization_step", quantization_step);
    read_into(kv, "normalize_descriptor", normalize_descriptor);
  }
};

}  // namespace minkloc
