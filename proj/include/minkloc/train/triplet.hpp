#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "minkloc/core/sparse_tensor.hpp"
#include "minkloc/data/dataset.hpp"
#include "minkloc/errors.hpp"

namespace minkloc {

// max{ ||a - p|| - ||a - n|| + margin, 0 }
inline double triplet_margin_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                                  double margin) {
  if (a.size() != p.size() || a.size() != n.size()) throw ShapeError("triplet loss: dimension mismatch");
  double dap = 0, dan = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dap += (a[k] - p[k]) * (a[k] - p[k]);
    dan += (a[k] - n[k]) * (a[k] - n[k]);
  }
  return std::max(std::sqrt(dap) - std::sqrt(dan) + margin, 0.0);
}

// n x n boolean masks over a batch. Indefinite pairs are false in both.
struct SimilarityMasks {
  std::size_t n = 0;
  std::vector<std::uint8_t> positive;
  std::vector<std::uint8_t> negative;

  bool is_positive(std::size_t i, std::size_t j) const { return positive[i * n + j] != 0; }
  bool is_negative(std::size_t i, std::size_t j) const { return negative[i * n + j] != 0; }
};

inline SimilarityMasks compute_masks(std::span<const RecordId> batch, const Dataset& dataset) {
  SimilarityMasks m;
  m.n = batch.size();
  m.positive.assign(m.n * m.n, 0);
  m.negative.assign(m.n * m.n, 0);
  for (std::size_t i = 0; i < m.n; ++i) {
    const TrainingTuple& t = dataset.tuple(batch[i]);
    for (std::size_t j = 0; j < m.n; ++j) {
      if (i == j) continue;
      if (batch[i] == batch[j]) throw DatasetError("record repeated within a batch");
      dataset.record(batch[j]);  // KeyError for unknown ids
      m.positive[i * m.n + j] = t.positives.count(batch[j]) ? 1 : 0;
      m.negative[i * m.n + j] = t.non_negatives.count(batch[j]) ? 0 : 1;
    }
  }
  return m;
}

struct Triplet {
  std::size_t anchor;
  std::size_t positive;
  std::size_t negative;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

struct MiningResult {
  std::vector<Triplet> triplets;
  std::size_t skipped_anchors = 0;  // anchors lacking a positive or a negative
};

template <typename S>
Matrix<double> pairwise_distances(const Matrix<S>& emb) {
  const Matrix<double> e = emb.template cast<double>();
  const Eigen::Index n = e.rows();
  Matrix<double> d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) d(i, j) = (e.row(i) - e.row(j)).norm();
  }
  return d;
}

// Batch-hard mining: per anchor the farthest positive and the nearest
// negative. Distance ties resolve to the lowest index.
template <typename S>
MiningResult batch_hard_mine(const Matrix<S>& embeddings, const SimilarityMasks& masks) {
  const auto n = static_cast<std::size_t>(embeddings.rows());
  if (masks.n != n) throw ShapeError("mining: mask size does not match embedding count");
  const Matrix<double> d = pairwise_distances(embeddings);
  MiningResult out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best_p = n, best_n = n;
    for (std::size_t j = 0; j < n; ++j) {
      const double dij = d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      if (masks.is_positive(i, j) &&
          (best_p == n || dij > d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best_p)))) {
        best_p = j;
      }
      if (masks.is_negative(i, j) &&
          (best_n == n || dij < d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(best_n)))) {
        best_n = j;
      }
    }
    if (best_p == n || best_n == n) {
      ++out.skipped_anchors;
      continue;
    }
    out.triplets.push_back({i, best_p, best_n});
  }
  return out;
}

struct BatchLoss {
  double mean_loss = 0;        // over mined triplets
  std::size_t active = 0;      // triplets with strictly positive loss
  std::size_t triplets = 0;
  Matrix<double> grad;         // d mean_loss / d embeddings

  double active_ratio() const { return triplets == 0 ? 0.0 : static_cast<double>(active) / triplets; }
};

// Mean triplet margin loss over mined triplets and its gradient with respect
// to the embedding matrix. Zero-length difference vectors contribute no
// gradient.
template <typename S>
BatchLoss triplet_batch_loss(const Matrix<S>& embeddings, const std::vector<Triplet>& triplets, double margin) {
  const Matrix<double> e = embeddings.template cast<double>();
  BatchLoss out;
  out.triplets = triplets.size();
  out.grad = Matrix<double>::Zero(e.rows(), e.cols());
  if (triplets.empty()) return out;
  const double scale = 1.0 / static_cast<double>(triplets.size());
  for (const Triplet& t : triplets) {
    const auto a = static_cast<Eigen::Index>(t.anchor);
    const auto p = static_cast<Eigen::Index>(t.positive);
    const auto ng = static_cast<Eigen::Index>(t.negative);
    const Eigen::RowVectorXd ap = e.row(a) - e.row(p);
    const Eigen::RowVectorXd an = e.row(a) - e.row(ng);
    const double dap = ap.norm();
    const double dan = an.norm();
    const double loss = dap - dan + margin;
    if (loss <= 0) continue;
    ++out.active;
    out.mean_loss += loss * scale;
    if (dap > 0) {
      out.grad.row(a) += scale * ap / dap;
      out.grad.row(p) -= scale * ap / dap;
    }
    if (dan > 0) {
      out.grad.row(a) -= scale * an / dan;
      out.grad.row(ng) += scale * an / dan;
    }
  }
  return out;
}

}  // namespace minkloc
