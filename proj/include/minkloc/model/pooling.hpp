#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "minkloc/core/sparse_tensor.hpp"
#include "minkloc/nn/tape.hpp"

namespace minkloc {

// Dense batch_count x dim output of a pooling head, optionally on a tape.
template <typename S>
struct Embeddings {
  Matrix<S> values;
  int node = -1;
};

// Features are clamped at this value before the GeM power.
inline constexpr double kGemClampEps = 1e-6;

namespace detail {

// Row indices of each batch item, sorted by coordinate so that reductions
// do not depend on row order.
inline std::vector<std::vector<std::int32_t>> rows_by_item(const CoordinateSet& coords, int batch_count) {
  std::vector<std::vector<std::int32_t>> groups(static_cast<std::size_t>(batch_count));
  for (std::size_t r = 0; r < coords.size(); ++r) {
    const int b = coords[r].batch;
    if (b >= batch_count) throw ShapeError("batch index " + std::to_string(b) + " >= batch count");
    groups[static_cast<std::size_t>(b)].push_back(static_cast<std::int32_t>(r));
  }
  for (std::size_t b = 0; b < groups.size(); ++b) {
    auto& g = groups[b];
    if (g.empty()) throw EmptyInput("batch item " + std::to_string(b) + " has no voxels to pool");
    std::sort(g.begin(), g.end(), [&](std::int32_t a, std::int32_t c) { return coords[a] < coords[c]; });
  }
  return groups;
}

template <typename S>
void scatter_rows_add(Matrix<S>& dst, const std::vector<std::int32_t>& rows, const Matrix<S>& src) {
  for (std::size_t j = 0; j < rows.size(); ++j) dst.row(rows[j]) += src.row(static_cast<Eigen::Index>(j));
}

}  // namespace detail

// Generalized-mean pooling per batch item and channel:
//   g = ( mean_j max(f_j, eps)^p )^(1/p)
// with a single learnable exponent p (1x1 parameter), clamped to p >= 1.
// Evaluated as m * (mean (x/m)^p)^(1/p) with m the channel max, which keeps
// large p finite.
template <typename S>
Embeddings<S> gem_pool(nn::Context<S>& ctx, const SparseTensor<S>& fmap, const nn::Parameter<S>& p_param,
                       int batch_count) {
  const auto groups = std::make_shared<const std::vector<std::vector<std::int32_t>>>(
      detail::rows_by_item(fmap.coordinates(), batch_count));
  const Eigen::Index c = fmap.channels();
  const S p_raw = p_param.value(0, 0);
  const bool p_clamped = p_raw < S(1);
  const S p = p_clamped ? S(1) : p_raw;
  const S eps = static_cast<S>(kGemClampEps);
  const Matrix<S>& F = fmap.features();

  using RowArray = Eigen::Array<S, 1, Eigen::Dynamic>;
  // Reductions walk each item's rows in sorted order, one vectorised row at a time.
  auto channel_max = [eps, c](const Matrix<S>& X, const std::vector<std::int32_t>& rows) {
    RowArray m = RowArray::Constant(c, eps);
    for (std::int32_t r : rows) m = m.max(X.row(r).array());
    return m;
  };

  Matrix<S> G(batch_count, c);
  for (int b = 0; b < batch_count; ++b) {
    const auto& rows = (*groups)[static_cast<std::size_t>(b)];
    const S n = static_cast<S>(rows.size());
    RowArray acc = RowArray::Zero(c);
    if (p == S(1)) {
      for (std::int32_t r : rows) acc += F.row(r).array().max(eps);
      G.row(b) = (acc / n).matrix();
      continue;
    }
    const RowArray m = channel_max(F, rows);
    for (std::int32_t r : rows) acc += ((F.row(r).array().max(eps) / m).log() * p).exp();
    G.row(b) = (m * (acc / n).pow(S(1) / p)).matrix();
  }

  int node = -1;
  if (ctx.recording()) {
    auto feats = fmap.features_ptr();
    const int in_node = fmap.node();
    const nn::Parameter<S>* pp = &p_param;
    const Matrix<S> out = G;
    node = ctx.tape->record(batch_count, c, [=](nn::Tape<S>& tape, const Matrix<S>& dG) {
      const Matrix<S>& Fs = *feats;
      Matrix<S>* dF = tape.grad_buffer(in_node);
      S dp = 0;
      for (int b = 0; b < batch_count; ++b) {
        const auto& rows = (*groups)[static_cast<std::size_t>(b)];
        const S n = static_cast<S>(rows.size());
        const RowArray g = out.row(b).array();
        const RowArray up = dG.row(b).array();
        if (dF) {
          // d g / d x_j = (x_j / g)^(p-1) / n where f_j > eps
          const RowArray scale = up / n;
          for (std::int32_t r : rows) {
            const auto f = Fs.row(r).array();
            const auto mask = (f > eps).template cast<S>();
            dF->row(r).array() += (((f.max(eps) / g).log() * (p - S(1))).exp() * mask * scale);
          }
        }
        if (!p_clamped) {
          // d g / d p = g * ( -ln(M) / p^2 + sum(r^p ln r) / (p * sum(r^p)) ), r = x / m, M = mean(r^p)
          const RowArray m = channel_max(Fs, rows);
          RowArray s = RowArray::Zero(g.size());
          RowArray s_log = RowArray::Zero(g.size());
          for (std::int32_t r : rows) {
            const RowArray logr = (Fs.row(r).array().max(eps) / m).log();
            const RowArray rp = (logr * p).exp();
            s += rp;
            s_log += rp * logr;
          }
          const RowArray dgdp = g * (-(s / n).log() / (p * p) + s_log / (p * s));
          dp += (up * dgdp).sum();
        }
      }
      tape.accumulate_param(*pp, Matrix<S>::Constant(1, 1, dp));
    });
  }
  return {std::move(G), node};
}

// Global max pooling per batch item and channel. Ties go to the row with the
// smallest coordinate.
template <typename S>
Embeddings<S> mac_pool(nn::Context<S>& ctx, const SparseTensor<S>& fmap, int batch_count) {
  const auto groups = detail::rows_by_item(fmap.coordinates(), batch_count);
  const Eigen::Index c = fmap.channels();
  const Matrix<S>& F = fmap.features();
  Matrix<S> G(batch_count, c);
  auto argmax = std::make_shared<std::vector<std::int32_t>>(static_cast<std::size_t>(batch_count * c));
  for (int b = 0; b < batch_count; ++b) {
    const auto& rows = groups[static_cast<std::size_t>(b)];
    for (Eigen::Index k = 0; k < c; ++k) {
      std::int32_t best = rows.front();
      for (std::int32_t r : rows) {
        if (F(r, k) > F(best, k)) best = r;
      }
      G(b, k) = F(best, k);
      (*argmax)[static_cast<std::size_t>(b * c + k)] = best;
    }
  }
  int node = -1;
  if (ctx.recording() && fmap.tracked()) {
    const int in_node = fmap.node();
    node = ctx.tape->record(batch_count, c, [=](nn::Tape<S>& tape, const Matrix<S>& dG) {
      Matrix<S>* dF = tape.grad_buffer(in_node);
      for (int b = 0; b < batch_count; ++b) {
        for (Eigen::Index k = 0; k < c; ++k) (*dF)((*argmax)[static_cast<std::size_t>(b * c + k)], k) += dG(b, k);
      }
    });
  }
  return {std::move(G), node};
}

// Row-wise L2 normalisation (optional descriptor post-processing).
template <typename S>
Embeddings<S> l2_normalize(nn::Context<S>& ctx, const Embeddings<S>& in) {
  const Vector<S> norms = in.values.rowwise().norm().cwiseMax(S(1e-12));
  Matrix<S> out = in.values.array().colwise() / norms.array();
  int node = -1;
  if (ctx.recording() && in.node >= 0) {
    const int in_node = in.node;
    const Matrix<S> y = out;
    node = ctx.tape->record(out.rows(), out.cols(), [=](nn::Tape<S>& tape, const Matrix<S>& dY) {
      const Vector<S> proj = (dY.array() * y.array()).rowwise().sum();
      Matrix<S> dX = ((dY - (y.array().colwise() * proj.array()).matrix()).array().colwise() / norms.array());
      tape.accumulate(in_node, dX);
    });
  }
  return {std::move(out), node};
}

}  // namespace minkloc
