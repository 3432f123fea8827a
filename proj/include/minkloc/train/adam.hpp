#pragma once

#include <cmath>
#include <map>
#include <string>

#include "minkloc/nn/tape.hpp"

namespace minkloc {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-3;  // coupled: added to the gradient
};

// Initial rate divided by 10 from `step_epoch` on (0-based epochs).
inline double scheduled_lr(double base_lr, int epoch, int step_epoch) {
  return epoch >= step_epoch ? base_lr / 10.0 : base_lr;
}

template <typename S>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  long steps() const { return t_; }

  // Updates every trainable parameter visited by `for_each`. Parameters absent
  // from `grads` get a zero gradient (weight decay still applies).
  template <typename ForEachParam>
  void step(ForEachParam&& for_each, const nn::Gradients<S>& grads) {
    for (const auto& [name, g] : grads) {
      if (!g.allFinite()) throw NumericError("non-finite gradient for parameter '" + name + "'");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for_each([&](nn::Parameter<S>& p) {
      if (!p.trainable) return;
      auto& st = state_[p.name];
      if (st.m.size() == 0) {
        st.m = Matrix<double>::Zero(p.value.rows(), p.value.cols());
        st.v = Matrix<double>::Zero(p.value.rows(), p.value.cols());
      }
      Matrix<double> g = Matrix<double>::Zero(p.value.rows(), p.value.cols());
      if (auto it = grads.find(p.name); it != grads.end()) g = it->second.template cast<double>();
      const Matrix<double> w = p.value.template cast<double>();
      if (cfg_.weight_decay != 0) g += cfg_.weight_decay * w;
      st.m = cfg_.beta1 * st.m + (1.0 - cfg_.beta1) * g;
      st.v = cfg_.beta2 * st.v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const Matrix<double> update =
          ((st.m / bc1).array() / ((st.v / bc2).array().sqrt() + cfg_.eps)).matrix() * cfg_.lr;
      p.value = (w - update).template cast<S>();
    });
  }

 private:
  struct State {
    Matrix<double> m;
    Matrix<double> v;
  };

  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, State> state_;
};

}  // namespace minkloc
