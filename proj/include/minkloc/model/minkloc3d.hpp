#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "minkloc/core/kernel_map.hpp"
#include "minkloc/core/quantize.hpp"
#include "minkloc/diagnostics.hpp"
#include "minkloc/model/config.hpp"
#include "minkloc/model/pooling.hpp"
#include "minkloc/nn/layers.hpp"

namespace minkloc {

// Conv -> BN -> ReLU unit of the bottom-up pathway.
template <typename S>
struct ConvBnRelu {
  nn::Parameter<S> weight;
  nn::BatchNormParams<S> bn;
  int kernel_size = 3;
  int stride = 1;

  ConvBnRelu() = default;
  ConvBnRelu(const std::string& prefix, int kernel, int stride_, Eigen::Index c_in, Eigen::Index c_out)
      : weight(nn::conv_weight<S>(prefix + ".w", kernel, c_in, c_out)),
        bn(prefix + ".bn", c_out),
        kernel_size(kernel),
        stride(stride_) {}
};

// Stride-2 downsampling conv followed by a residual pair of 3x3x3 convs:
// y = d + res2(res1(d)), d = down(x).
template <typename S>
struct BottomUpBlock {
  ConvBnRelu<S> down;
  ConvBnRelu<S> res1;
  ConvBnRelu<S> res2;

  BottomUpBlock() = default;
  BottomUpBlock(const std::string& prefix, Eigen::Index c_in, Eigen::Index c_out)
      : down(prefix + ".down", 2, 2, c_in, c_out),
        res1(prefix + ".res1", 3, 1, c_out, c_out),
        res2(prefix + ".res2", 3, 1, c_out, c_out) {}
};

// Intermediate feature maps of one forward pass, for inspection in tests.
template <typename S>
struct FpnTrace {
  std::vector<SparseTensor<S>> levels;  // conv0 .. conv3 outputs
  std::vector<SparseTensor<S>> top_down;  // lateral3, tconv3, lateral2
};

// MinkLoc3D: sparse feature pyramid (MinkFPN) + GeM/MAC pooling head.
//
// Checkpoint names:
//   conv0.w, conv0.bn.{gamma,beta,mean,var}
//   conv{1,2,3}.{down,res1,res2}.w, conv{1,2,3}.{down,res1,res2}.bn.{gamma,beta,mean,var}
//   lateral2.w, lateral3.w, tconv3.w, gem.p
// Conv weights have shape [K^3, c_in, c_out] with kernel offsets enumerated by
// kernel_offsets(K).
template <typename S>
class MinkLoc3D {
 public:
  explicit MinkLoc3D(ModelConfig cfg = {}, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto d = static_cast<Eigen::Index>(cfg_.descriptor_dim);
    conv0_ = ConvBnRelu<S>("conv0", 5, 1, 1, cfg_.conv0_channels);
    conv1_ = BottomUpBlock<S>("conv1", cfg_.conv0_channels, cfg_.conv1_channels);
    conv2_ = BottomUpBlock<S>("conv2", cfg_.conv1_channels, cfg_.conv2_channels);
    conv3_ = BottomUpBlock<S>("conv3", cfg_.conv2_channels, cfg_.conv3_channels);
    lateral2_ = nn::conv_weight<S>("lateral2.w", 1, cfg_.conv2_channels, d);
    lateral3_ = nn::conv_weight<S>("lateral3.w", 1, cfg_.conv3_channels, d);
    tconv3_ = nn::conv_weight<S>("tconv3.w", 2, d, d);
    gem_p_.name = "gem.p";
    gem_p_.shape = {1};
    gem_p_.value = Matrix<S>::Constant(1, 1, static_cast<S>(cfg_.gem_p_init));

    std::mt19937_64 rng(seed);
    for_each_parameter([&](nn::Parameter<S>& p) {
      if (p.shape.size() == 3) nn::kaiming_init(p, rng);
    });
  }

  const ModelConfig& config() const { return cfg_; }

  // Local feature extraction. Input: single-channel tensor at stride 1.
  // Output: descriptor_dim channels at stride 4, on the union of the conv2
  // lattice and the lattice generated by the transposed conv.
  SparseTensor<S> features(nn::Context<S>& ctx, const SparseTensor<S>& input, FpnTrace<S>* trace = nullptr) const {
    if (input.channels() != 1) throw ShapeError("MinkFPN input must have a single channel");
    if (input.stride() != 1) throw StrideError("MinkFPN input must be at stride 1");

    SparseTensor<S> x0 = conv_bn_relu(ctx, input, conv0_, nullptr);
    SparseTensor<S> x1 = bottom_up(ctx, x0, conv1_);
    SparseTensor<S> x2 = bottom_up(ctx, x1, conv2_);
    SparseTensor<S> x3 = bottom_up(ctx, x2, conv3_);

    SparseTensor<S> l3 = nn::sparse_conv(ctx, x3, lateral3_, 1, 1);
    SparseTensor<S> up = nn::sparse_transposed_conv(ctx, l3, tconv3_, 2, 2);
    SparseTensor<S> l2 = nn::sparse_conv(ctx, x2, lateral2_, 1, 1);
    SparseTensor<S> out = nn::sparse_add(ctx, up, l2);
    if (trace) {
      trace->levels = {x0, x1, x2, x3};
      trace->top_down = {l3, up, l2};
    }
    return out;
  }

  // Features followed by the pooling head; one embedding row per batch item.
  Embeddings<S> forward(nn::Context<S>& ctx, const SparseTensor<S>& input, int batch_count) const {
    const SparseTensor<S> fmap = features(ctx, input);
    Embeddings<S> e = cfg_.pooling == Pooling::GeM ? gem_pool(ctx, fmap, gem_p_, batch_count)
                                                   : mac_pool(ctx, fmap, batch_count);
    if (cfg_.normalize_descriptor) e = l2_normalize(ctx, e);
    return e;
  }

  // Folds running statistics collected by a training forward into the BN
  // buffers.
  void apply_batch_stats(const std::vector<nn::BatchStats<S>>& stats) {
    for (const auto& s : stats) {
      bool found = false;
      for_each_batch_norm([&](nn::BatchNormParams<S>& bn) {
        if (!found && bn.prefix() == s.prefix) {
          nn::update_running_stats(bn, s);
          found = true;
        }
      });
      if (!found) throw KeyError("no batch norm named " + s.prefix);
    }
  }

  template <typename F>
  void for_each_parameter(F&& f) {
    visit(*this, std::forward<F>(f));
  }

  template <typename F>
  void for_each_parameter(F&& f) const {
    visit(*this, std::forward<F>(f));
  }

  nn::Parameter<S>* find_parameter(const std::string& name) {
    nn::Parameter<S>* hit = nullptr;
    for_each_parameter([&](nn::Parameter<S>& p) {
      if (p.name == name) hit = &p;
    });
    return hit;
  }

  std::size_t parameter_count(bool trainable_only = true) const {
    std::size_t n = 0;
    for_each_parameter([&](const nn::Parameter<S>& p) {
      if (!trainable_only || p.trainable) n += static_cast<std::size_t>(p.value.size());
    });
    return n;
  }

  template <typename T>
  MinkLoc3D<T> cast() const {
    MinkLoc3D<T> out(cfg_);
    for_each_parameter([&](const nn::Parameter<S>& p) { out.find_parameter(p.name)->value = p.value.template cast<T>(); });
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    auto unit = [&](auto& u) {
      f(u.weight);
      f(u.bn.gamma);
      f(u.bn.beta);
      f(u.bn.running_mean);
      f(u.bn.running_var);
    };
    unit(self.conv0_);
    for (auto* block : {&self.conv1_, &self.conv2_, &self.conv3_}) {
      unit(block->down);
      unit(block->res1);
      unit(block->res2);
    }
    f(self.lateral2_);
    f(self.lateral3_);
    f(self.tconv3_);
    f(self.gem_p_);
  }

  template <typename F>
  void for_each_batch_norm(F&& f) {
    f(conv0_.bn);
    for (auto* block : {&conv1_, &conv2_, &conv3_}) {
      f(block->down.bn);
      f(block->res1.bn);
      f(block->res2.bn);
    }
  }

  static SparseTensor<S> conv_bn_relu(nn::Context<S>& ctx, const SparseTensor<S>& x, const ConvBnRelu<S>& u,
                                      std::shared_ptr<const KernelMap> map) {
    SparseTensor<S> y = map ? nn::sparse_conv(ctx, x, u.weight, map, x.coordinates_ptr())
                            : nn::sparse_conv(ctx, x, u.weight, u.kernel_size, u.stride);
    y = nn::batch_norm(ctx, y, u.bn);
    return nn::relu(ctx, y);
  }

  static SparseTensor<S> bottom_up(nn::Context<S>& ctx, const SparseTensor<S>& x, const BottomUpBlock<S>& b) {
    SparseTensor<S> d = conv_bn_relu(ctx, x, b.down, nullptr);
    // Both residual convs run on the same lattice and share one kernel map.
    auto map = std::make_shared<const KernelMap>(build_kernel_map(d.coordinates(), d.coordinates(), 3, d.stride()));
    SparseTensor<S> r = conv_bn_relu(ctx, d, b.res1, map);
    r = conv_bn_relu(ctx, r, b.res2, map);
    return nn::sparse_add(ctx, r, d);
  }

  ModelConfig cfg_;
  ConvBnRelu<S> conv0_;
  BottomUpBlock<S> conv1_;
  BottomUpBlock<S> conv2_;
  BottomUpBlock<S> conv3_;
  nn::Parameter<S> lateral2_;
  nn::Parameter<S> lateral3_;
  nn::Parameter<S> tconv3_;
  nn::Parameter<S> gem_p_;
};

struct Descriptor {
  std::vector<double> values;
  std::string source_id;

  std::size_t dim() const { return values.size(); }
};

// quantize -> features -> pool, with eval-mode batch norm. Deterministic and
// reentrant for a fixed model.
template <typename S>
Descriptor compute_descriptor(const PointCloud& cloud, const MinkLoc3D<S>& model, Diagnostics* diag = nullptr) {
  for (const Point3& p : cloud.points) {
    if (std::abs(p.x) > 1.0 || std::abs(p.y) > 1.0 || std::abs(p.z) > 1.0) {
      warn(diag, "cloud '" + cloud.source_id + "' has coordinates outside [-1, 1]");
      break;
    }
  }
  const SparseTensor<S> voxels = quantize<S>(cloud, model.config().quantization_step, 0);
  // Sorted rows: the descriptor must not depend on point order, and GEMM
  // rounding depends on a row's position.
  std::vector<VoxelCoord> sorted = voxels.coordinates().coords();
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<Eigen::Index>(sorted.size());
  const SparseTensor<S> input(std::make_shared<const CoordinateSet>(std::move(sorted), 1), Matrix<S>::Ones(n, 1));
  nn::Context<S> ctx;
  const Embeddings<S> e = model.forward(ctx, input, 1);
  Descriptor d;
  d.source_id = cloud.source_id;
  d.values.resize(static_cast<std::size_t>(e.values.cols()));
  for (Eigen::Index k = 0; k < e.values.cols(); ++k) d.values[static_cast<std::size_t>(k)] = static_cast<double>(e.values(0, k));
  return d;
}

}  // namespace minkloc
