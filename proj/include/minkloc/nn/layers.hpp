#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "minkloc/core/kernel_map.hpp"
#include "minkloc/core/quantize.hpp"
#include "minkloc/core/sparse_tensor.hpp"
#include "minkloc/nn/tape.hpp"

namespace minkloc::nn {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// Conv weights: logical shape [K^3, c_in, c_out], stored as a
// (K^3 * c_in) x c_out matrix. Block k maps input channels to output channels
// for kernel offset kernel_offsets(K)[k]: y_row += x_row * W[k].
template <typename S>
Parameter<S> conv_weight(std::string name, int kernel_size, Eigen::Index c_in, Eigen::Index c_out) {
  const int vol = kernel_volume(kernel_size);
  Parameter<S> p;
  p.name = std::move(name);
  p.shape = {vol, c_in, c_out};
  p.value = Matrix<S>::Zero(vol * c_in, c_out);
  return p;
}

// Kaiming-normal initialisation with fan-in = K^3 * c_in.
template <typename S, typename Rng>
void kaiming_init(Parameter<S>& w, Rng& rng) {
  const double fan_in = static_cast<double>(w.value.rows());
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (Eigen::Index i = 0; i < w.value.size(); ++i) w.value.data()[i] = static_cast<S>(dist(rng));
}

template <typename S>
struct BatchNormParams {
  Parameter<S> gamma;
  Parameter<S> beta;
  Parameter<S> running_mean;
  Parameter<S> running_var;
  S momentum = S(0.1);
  S eps = S(1e-5);

  BatchNormParams() = default;
  BatchNormParams(const std::string& prefix, Eigen::Index channels) {
    auto make = [&](const char* leaf, S fill, bool trainable) {
      Parameter<S> p;
      p.name = prefix + "." + leaf;
      p.shape = {channels};
      p.value = Matrix<S>::Constant(1, channels, fill);
      p.trainable = trainable;
      return p;
    };
    gamma = make("gamma", S(1), true);
    beta = make("beta", S(0), true);
    running_mean = make("mean", S(0), false);
    running_var = make("var", S(1), false);
  }

  Eigen::Index channels() const { return gamma.value.cols(); }
  std::string prefix() const { return gamma.name.substr(0, gamma.name.rfind('.')); }
};

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_identity_map(const KernelMap& map) {
  if (map.pairs.size() != 1 || map.n_in != map.n_out || map.pairs[0].size() != map.n_out) return false;
  const auto& p = map.pairs[0];
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p.in_rows[j] != static_cast<std::int32_t>(j) || p.out_rows[j] != static_cast<std::int32_t>(j)) return false;
  }
  return true;
}

inline bool is_sequence(const std::vector<std::int32_t>& rows, Eigen::Index n) {
  if (static_cast<Eigen::Index>(rows.size()) != n) return false;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j] != static_cast<std::int32_t>(j)) return false;
  }
  return true;
}

template <typename S>
void scatter_add(Matrix<S>& dst, const std::vector<std::int32_t>& rows, const Matrix<S>& src) {
  for (std::size_t j = 0; j < rows.size(); ++j) dst.row(rows[j]) += src.row(static_cast<Eigen::Index>(j));
}

// Applies `w` through `map`. When `transposed`, the map's output rows index
// the input tensor and its input rows index the output tensor.
template <typename S>
SparseTensor<S> apply_kernel(Context<S>& ctx, const SparseTensor<S>& x, const Parameter<S>& w,
                             std::shared_ptr<const KernelMap> map_ptr, CoordinateSetPtr out_coords,
                             bool transposed) {
  const KernelMap& map = *map_ptr;
  const Eigen::Index c_in = w.shape.at(1);
  const Eigen::Index c_out = w.shape.at(2);
  if (x.channels() != c_in) {
    throw ShapeError(w.name + ": expected " + std::to_string(c_in) + " input channels, got " +
                     std::to_string(x.channels()));
  }
  if (static_cast<std::size_t>(w.shape.at(0)) != map.offsets.size()) {
    throw ShapeError(w.name + ": weight volume does not match kernel map");
  }
  const auto n_out = static_cast<Eigen::Index>(out_coords->size());
  const Matrix<S>& X = x.features();
  Matrix<S> Y = Matrix<S>::Zero(n_out, c_out);

  const bool identity = detail::is_identity_map(map);
  if (identity) {
    Y.noalias() = X * w.value;
  } else {
    for (std::size_t k = 0; k < map.offsets.size(); ++k) {
      const auto& pairs = map.pairs[k];
      if (pairs.size() == 0) continue;
      const auto& src = transposed ? pairs.out_rows : pairs.in_rows;
      const auto& dst = transposed ? pairs.in_rows : pairs.out_rows;
      const auto Wk = w.value.middleRows(static_cast<Eigen::Index>(k) * c_in, c_in);
      Matrix<S> prod;
      if (is_sequence(src, X.rows())) {
        prod.noalias() = X * Wk;
      } else {
        prod.noalias() = X(src, Eigen::all) * Wk;
      }
      scatter_add(Y, dst, prod);
    }
  }

  int node = -1;
  if (ctx.recording()) {
    auto in_feats = x.features_ptr();
    const Parameter<S>* wp = &w;
    const int in_node = x.node();
    node = ctx.tape->record(n_out, c_out, [=](Tape<S>& tape, const Matrix<S>& dY) {
      const Matrix<S>& Xs = *in_feats;
      Matrix<S> dW = Matrix<S>::Zero(wp->value.rows(), wp->value.cols());
      Matrix<S>* dX = tape.grad_buffer(in_node);
      if (identity) {
        dW.noalias() = Xs.transpose() * dY;
        if (dX) dX->noalias() += dY * wp->value.transpose();
      } else {
        for (std::size_t k = 0; k < map_ptr->offsets.size(); ++k) {
          const auto& pairs = map_ptr->pairs[k];
          if (pairs.size() == 0) continue;
          const auto& src = transposed ? pairs.out_rows : pairs.in_rows;
          const auto& dst = transposed ? pairs.in_rows : pairs.out_rows;
          const auto row0 = static_cast<Eigen::Index>(k) * c_in;
          Matrix<S> g_out = dY(dst, Eigen::all);
          Matrix<S> g_in = Xs(src, Eigen::all);
          dW.middleRows(row0, c_in).noalias() += g_in.transpose() * g_out;
          if (dX) {
            Matrix<S> back = g_out * wp->value.middleRows(row0, c_in).transpose();
            scatter_add(*dX, src, back);
          }
        }
      }
      tape.accumulate_param(*wp, dW);
    });
  }
  return SparseTensor<S>(std::move(out_coords), std::move(Y), node);
}

}  // namespace detail

// Convolution with explicit output lattice and kernel map.
template <typename S>
SparseTensor<S> sparse_conv(Context<S>& ctx, const SparseTensor<S>& x, const Parameter<S>& w,
                            std::shared_ptr<const KernelMap> map, CoordinateSetPtr out_coords) {
  return detail::apply_kernel(ctx, x, w, std::move(map), std::move(out_coords), false);
}

// Convolution with kernel K and stride s. Output coordinates are the input's
// for s = 1, otherwise downsample_coords(input, s). No bias.
template <typename S>
SparseTensor<S> sparse_conv(Context<S>& ctx, const SparseTensor<S>& x, const Parameter<S>& w, int kernel_size,
                            int stride) {
  CoordinateSetPtr out = stride == 1 ? x.coordinates_ptr()
                                     : std::make_shared<const CoordinateSet>(
                                           downsample_coords(x.coordinates(), stride));
  auto map = std::make_shared<const KernelMap>(build_kernel_map(x.coordinates(), *out, kernel_size, x.stride()));
  return sparse_conv(ctx, x, w, std::move(map), std::move(out));
}

// Transposed convolution: output stride = input stride / s, output lattice
// from upsample_coords, out[c + d*out_stride] += x[c] * W[d]. It is the adjoint
// of sparse_conv with the same kernel when W[d] is transposed.
template <typename S>
SparseTensor<S> sparse_transposed_conv(Context<S>& ctx, const SparseTensor<S>& x, const Parameter<S>& w,
                                       int kernel_size, int stride) {
  auto fine = std::make_shared<const CoordinateSet>(upsample_coords(x.coordinates(), kernel_size, stride));
  auto map = std::make_shared<const KernelMap>(build_kernel_map(*fine, x.coordinates(), kernel_size, fine->stride()));
  return detail::apply_kernel(ctx, x, w, std::move(map), std::move(fine), true);
}

// ---------------------------------------------------------------------------
// Batch norm
// ---------------------------------------------------------------------------

// Normalises every channel over all rows (all voxels of all batch items).
// Training mode uses batch statistics and reports running-stat updates through
// ctx.batch_stats; eval mode is a fixed per-channel affine map.
template <typename S>
SparseTensor<S> batch_norm(Context<S>& ctx, const SparseTensor<S>& x, const BatchNormParams<S>& bn) {
  const Eigen::Index n = static_cast<Eigen::Index>(x.size());
  const Eigen::Index c = x.channels();
  if (n == 0) throw EmptyInput(bn.prefix() + ": batch norm over zero rows");
  if (c != bn.channels()) throw ShapeError(bn.prefix() + ": channel mismatch");
  const Matrix<S>& X = x.features();

  Vector<S> mean(c);
  Vector<S> var(c);
  if (ctx.training) {
    mean = X.colwise().sum().transpose() / S(n);
    var = (X.rowwise() - mean.transpose()).array().square().colwise().sum().transpose() / S(n);
    Vector<S> unbiased = n > 1 ? Vector<S>(var * (S(n) / S(n - 1))) : var;
    ctx.batch_stats.push_back({bn.prefix(), mean, unbiased});
  } else {
    mean = bn.running_mean.value.row(0).transpose();
    var = bn.running_var.value.row(0).transpose();
  }
  const Vector<S> inv_std = (var.array() + bn.eps).rsqrt().matrix();
  auto xhat = std::make_shared<Matrix<S>>((X.rowwise() - mean.transpose()).array().rowwise() *
                                          inv_std.transpose().array());
  Matrix<S> Y = (xhat->array().rowwise() * bn.gamma.value.row(0).array()).rowwise() + bn.beta.value.row(0).array();

  int node = -1;
  if (ctx.recording()) {
    const BatchNormParams<S>* p = &bn;
    const int in_node = x.node();
    const bool training = ctx.training;
    node = ctx.tape->record(n, c, [=](Tape<S>& tape, const Matrix<S>& dY) {
      const Matrix<S>& xh = *xhat;
      Matrix<S> dgamma = (dY.array() * xh.array()).colwise().sum().matrix();
      Matrix<S> dbeta = dY.colwise().sum();
      tape.accumulate_param(p->gamma, dgamma);
      tape.accumulate_param(p->beta, dbeta);
      Matrix<S>* dX = tape.grad_buffer(in_node);
      if (!dX) return;
      const auto gamma = p->gamma.value.row(0).array();
      Matrix<S> dxhat = dY.array().rowwise() * gamma;
      if (training) {
        const auto sum_dxhat = dxhat.colwise().sum().array();
        const auto sum_dxhat_xhat = (dxhat.array() * xh.array()).colwise().sum();
        Matrix<S> centered = ((dxhat.array() * S(n)).rowwise() - sum_dxhat) -
                             (xh.array().rowwise() * sum_dxhat_xhat);
        *dX += ((centered.array().rowwise() * inv_std.transpose().array()) / S(n)).matrix();
      } else {
        *dX += (dxhat.array().rowwise() * inv_std.transpose().array()).matrix();
      }
    });
  }
  return SparseTensor<S>(x.coordinates_ptr(), std::move(Y), node);
}

// Applies running-statistic updates collected during a training forward pass:
// running = (1 - momentum) * running + momentum * batch.
template <typename S>
void update_running_stats(BatchNormParams<S>& bn, const BatchStats<S>& stats) {
  bn.running_mean.value.row(0) =
      (S(1) - bn.momentum) * bn.running_mean.value.row(0) + bn.momentum * stats.mean.transpose();
  bn.running_var.value.row(0) =
      (S(1) - bn.momentum) * bn.running_var.value.row(0) + bn.momentum * stats.var.transpose();
}

// ---------------------------------------------------------------------------
// Pointwise
// ---------------------------------------------------------------------------

// max(0, f); the gradient at exactly 0 is 0.
template <typename S>
SparseTensor<S> relu(Context<S>& ctx, const SparseTensor<S>& x) {
  Matrix<S> Y = x.features().cwiseMax(S(0));
  int node = -1;
  if (ctx.recording() && x.tracked()) {
    auto in_feats = x.features_ptr();
    const int in_node = x.node();
    node = ctx.tape->record(Y.rows(), Y.cols(), [=](Tape<S>& tape, const Matrix<S>& dY) {
      Matrix<S> mask = (in_feats->array() > S(0)).template cast<S>();
      tape.accumulate(in_node, (dY.array() * mask.array()).matrix());
    });
  }
  return SparseTensor<S>(x.coordinates_ptr(), std::move(Y), node);
}

// Sum over the coordinate union; rows present in only one operand are copied.
// Output rows: all of a's rows in order, then b's rows absent from a.
template <typename S>
SparseTensor<S> sparse_add(Context<S>& ctx, const SparseTensor<S>& a, const SparseTensor<S>& b) {
  if (a.stride() != b.stride()) throw ShapeError("sparse_add: stride mismatch");
  if (a.channels() != b.channels()) throw ShapeError("sparse_add: channel mismatch");
  const Eigen::Index c = a.channels();

  CoordinateSetPtr out;
  std::vector<std::int32_t> b_rows(b.size());
  if (a.coordinates_ptr() == b.coordinates_ptr()) {
    out = a.coordinates_ptr();
    for (std::size_t i = 0; i < b.size(); ++i) b_rows[i] = static_cast<std::int32_t>(i);
  } else {
    std::vector<VoxelCoord> coords = a.coordinates().coords();
    for (std::size_t i = 0; i < b.size(); ++i) {
      const VoxelCoord& cb = b.coordinates()[i];
      std::int32_t r = a.coordinates().find(cb);
      if (r < 0) {
        r = static_cast<std::int32_t>(coords.size());
        coords.push_back(cb);
      }
      b_rows[i] = r;
    }
    out = coords.size() == a.size() ? a.coordinates_ptr()
                                    : std::make_shared<const CoordinateSet>(std::move(coords), a.stride());
  }

  const auto n_out = static_cast<Eigen::Index>(out->size());
  const auto n_a = static_cast<Eigen::Index>(a.size());
  Matrix<S> Y(n_out, c);
  Y.topRows(n_a) = a.features();
  Y.bottomRows(n_out - n_a).setZero();
  detail::scatter_add(Y, b_rows, b.features());

  int node = -1;
  if (ctx.recording() && (a.tracked() || b.tracked())) {
    const int a_node = a.node();
    const int b_node = b.node();
    const auto na = static_cast<Eigen::Index>(a.size());
    node = ctx.tape->record(n_out, c, [=](Tape<S>& tape, const Matrix<S>& dY) {
      if (a_node >= 0) tape.accumulate(a_node, dY.topRows(na));
      if (b_node >= 0) tape.accumulate(b_node, dY(b_rows, Eigen::all));
    });
  }
  return SparseTensor<S>(std::move(out), std::move(Y), node);
}

// Registers `x` as a gradient-receiving leaf on the context's tape.
template <typename S>
SparseTensor<S> track(Context<S>& ctx, const SparseTensor<S>& x) {
  if (!ctx.recording()) return x;
  return x.with_node(ctx.tape->leaf(static_cast<Eigen::Index>(x.size()), x.channels()));
}

}  // namespace minkloc::nn
