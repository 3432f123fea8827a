#pragma once

#include <memory>
#include <string>

#include <Eigen/Core>

#include "minkloc/core/coords.hpp"
#include "minkloc/errors.hpp"

namespace minkloc {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// Sparse feature map: shared immutable coordinates plus an n x c feature
// matrix. `node` is the tape slot that receives this tensor's gradient, or -1
// when the tensor is not tracked.
template <typename S>
class SparseTensor {
 public:
  using Scalar = S;

  SparseTensor(CoordinateSetPtr coords, Matrix<S> features, int node = -1)
      : coords_(std::move(coords)),
        features_(std::make_shared<const Matrix<S>>(std::move(features))),
        node_(node) {
    if (!coords_) throw ShapeError("sparse tensor without coordinates");
    if (static_cast<std::size_t>(features_->rows()) != coords_->size()) {
      throw ShapeError("feature rows (" + std::to_string(features_->rows()) + ") != coordinate count (" +
                       std::to_string(coords_->size()) + ")");
    }
  }

  const CoordinateSet& coordinates() const { return *coords_; }
  const CoordinateSetPtr& coordinates_ptr() const { return coords_; }
  const Matrix<S>& features() const { return *features_; }
  const std::shared_ptr<const Matrix<S>>& features_ptr() const { return features_; }

  int stride() const { return coords_->stride(); }
  std::size_t size() const { return coords_->size(); }
  Eigen::Index channels() const { return features_->cols(); }
  int node() const { return node_; }
  bool tracked() const { return node_ >= 0; }

  SparseTensor with_node(int node) const {
    SparseTensor t = *this;
    t.node_ = node;
    return t;
  }

  // Same coordinates, detached from any tape.
  SparseTensor detached() const { return with_node(-1); }

  template <typename T>
  SparseTensor<T> cast() const {
    return SparseTensor<T>(coords_, features_->template cast<T>());
  }

 private:
  CoordinateSetPtr coords_;
  std::shared_ptr<const Matrix<S>> features_;
  int node_ = -1;
};

}  // namespace minkloc
