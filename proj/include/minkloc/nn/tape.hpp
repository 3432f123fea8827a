#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "minkloc/core/sparse_tensor.hpp"
#include "minkloc/errors.hpp"

namespace minkloc::nn {

// Named trainable tensor (or buffer, when `trainable` is false). `shape` is
// the logical shape written to checkpoints; `value` is its row-major matrix
// view.
template <typename S>
struct Parameter {
  std::string name;
  std::vector<std::int64_t> shape;
  Matrix<S> value;
  bool trainable = true;
};

// Parameter gradients keyed by parameter name.
template <typename S>
using Gradients = std::map<std::string, Matrix<S>>;

// Reverse-mode tape. Each recorded node owns a gradient buffer of the
// recorded shape and a closure that pushes that gradient to its inputs and
// to parameters. Backward replays closures in exact reverse of recording.
template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Matrix<S>&)>;

  // Registers a node; `fn` may be empty for leaves.
  int record(Eigen::Index rows, Eigen::Index cols, BackwardFn fn = {}) {
    if (consumed_) throw TapeConsumed("cannot record on a tape that has run backward");
    nodes_.push_back(Node{rows, cols, std::move(fn), Matrix<S>()});
    return static_cast<int>(nodes_.size()) - 1;
  }

  int leaf(Eigen::Index rows, Eigen::Index cols) { return record(rows, cols); }

  // Adds `g` into the gradient of `node`; no-op for untracked (-1) nodes.
  void accumulate(int node, const Matrix<S>& g) {
    if (node < 0) return;
    Node& n = nodes_.at(static_cast<std::size_t>(node));
    if (g.rows() != n.rows || g.cols() != n.cols) {
      throw ShapeError("gradient shape mismatch at tape node " + std::to_string(node));
    }
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Mutable gradient buffer for scatter-style accumulation, or nullptr for
  // untracked nodes.
  Matrix<S>* grad_buffer(int node) {
    if (node < 0) return nullptr;
    Node& n = nodes_.at(static_cast<std::size_t>(node));
    if (n.grad.size() == 0) n.grad = Matrix<S>::Zero(n.rows, n.cols);
    return &n.grad;
  }

  void accumulate_param(const Parameter<S>& p, const Matrix<S>& g) {
    if (!p.trainable) return;
    auto it = param_grads_.find(p.name);
    if (it == param_grads_.end()) {
      param_grads_.emplace(p.name, g);
    } else {
      it->second += g;
    }
  }

  // Seeds `root` with `seed` and propagates. A tape supports one backward.
  Gradients<S> backward(int root, const Matrix<S>& seed) {
    if (consumed_) throw TapeConsumed("backward already ran on this tape");
    consumed_ = true;
    if (root >= 0) accumulate(root, seed);
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.fn || n.grad.size() == 0) continue;
      n.fn(*this, n.grad);
      n.grad.resize(0, 0);  // interior gradients are not kept
    }
    return std::move(param_grads_);
  }

  // Gradient left on a leaf after backward (zeros if nothing reached it).
  Matrix<S> grad(int node) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(node));
    if (n.grad.size() == 0) return Matrix<S>::Zero(n.rows, n.cols);
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Eigen::Index rows;
    Eigen::Index cols;
    BackwardFn fn;
    Matrix<S> grad;
  };

  std::vector<Node> nodes_;
  Gradients<S> param_grads_;
  bool consumed_ = false;
};

// Running-statistics update produced by a training-mode batch norm. Applied
// to the model after the forward pass so that forward itself stays const.
template <typename S>
struct BatchStats {
  std::string prefix;  // e.g. "conv1.down.bn"
  Vector<S> mean;
  Vector<S> var;  // unbiased
};

template <typename S>
struct Context {
  Tape<S>* tape = nullptr;
  bool training = false;
  std::vector<BatchStats<S>> batch_stats;

  bool recording() const { return tape != nullptr; }
};

}  // namespace minkloc::nn
