#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "minkloc/model/minkloc3d.hpp"
#include "minkloc/nn/layers.hpp"
#include "minkloc/train/triplet.hpp"

namespace minkloc::gradcheck {

struct Options {
  double h = 1e-5;
  double layer_tolerance = 1e-4;
  double end_to_end_tolerance = 1e-3;
  int directions = 4;  // random directional derivatives per case
  int entries = 12;    // individually sampled coordinates per case
  std::uint64_t seed = 1;
  int scale = 1;       // multiplies voxel counts and channel widths
  // Test hook: the named case gets its analytic gradient scaled by 1.1.
  std::string corrupt;
};

struct CaseResult {
  std::string name;
  double rel_error = 0;
  double tolerance = 0;
  std::size_t evaluations = 0;

  bool passed() const { return rel_error < tolerance; }
};

struct Report {
  std::vector<CaseResult> cases;
  double seconds = 0;

  bool passed() const {
    for (const auto& c : cases) {
      if (!c.passed()) return false;
    }
    return !cases.empty();
  }
};

using Rng = std::mt19937_64;

// Random sparse tensor: `n` distinct voxels of batch items 0..batches-1 on a
// grid of `grid` cells per axis at the given stride.
template <typename S>
SparseTensor<S> random_sparse(Rng& rng, std::size_t n, int grid, Eigen::Index channels, int stride = 1,
                              int batches = 1) {
  std::uniform_int_distribution<int> cell(0, grid - 1);
  std::uniform_int_distribution<int> item(0, batches - 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::set<VoxelCoord> seen;
  std::vector<VoxelCoord> coords;
  for (int b = 0; b < batches && coords.size() < n; ++b) {
    const VoxelCoord c{b, cell(rng) * stride, cell(rng) * stride, cell(rng) * stride};
    if (seen.insert(c).second) coords.push_back(c);
  }
  const std::size_t cap = static_cast<std::size_t>(grid) * grid * grid * batches;
  while (coords.size() < std::min(n, cap)) {
    const VoxelCoord c{item(rng), cell(rng) * stride, cell(rng) * stride, cell(rng) * stride};
    if (seen.insert(c).second) coords.push_back(c);
  }
  Matrix<S> f(static_cast<Eigen::Index>(coords.size()), channels);
  for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = static_cast<S>(normal(rng));
  return SparseTensor<S>(std::make_shared<const CoordinateSet>(std::move(coords), stride), std::move(f));
}

inline Matrix<double> random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix<double> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

// Compares analytic gradients against central differences of `loss` along
// random directions and at sampled coordinates. The relative error is
// ||analytic - numeric|| / max(||analytic||, ||numeric||) over each group,
// worst group reported.
inline CaseResult compare(const std::string& name, double tolerance, const std::vector<Matrix<double>*>& vars,
                          std::vector<Matrix<double>> analytic, const std::function<double()>& loss,
                          const Options& opt, Rng& rng) {
  CaseResult out;
  out.name = name;
  out.tolerance = tolerance;
  if (opt.corrupt == name) {
    for (auto& g : analytic) g *= 1.1;
  }
  auto rel = [](const std::vector<double>& a, const std::vector<double>& n) {
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      diff += (a[i] - n[i]) * (a[i] - n[i]);
      na += a[i] * a[i];
      nn += n[i] * n[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    return std::sqrt(diff) / denom;
  };

  std::vector<double> dir_a, dir_n;
  for (int d = 0; d < opt.directions; ++d) {
    std::vector<Matrix<double>> v;
    double an = 0;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      v.push_back(random_matrix(rng, vars[k]->rows(), vars[k]->cols()));
      an += analytic[k].cwiseProduct(v.back()).sum();
    }
    for (std::size_t k = 0; k < vars.size(); ++k) *vars[k] += opt.h * v[k];
    const double lp = loss();
    for (std::size_t k = 0; k < vars.size(); ++k) *vars[k] -= 2 * opt.h * v[k];
    const double lm = loss();
    for (std::size_t k = 0; k < vars.size(); ++k) *vars[k] += opt.h * v[k];
    out.evaluations += 2;
    dir_a.push_back(an);
    dir_n.push_back((lp - lm) / (2 * opt.h));
  }

  std::vector<double> ent_a, ent_n;
  std::vector<std::pair<std::size_t, Eigen::Index>> slots;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    for (Eigen::Index i = 0; i < vars[k]->size(); ++i) slots.emplace_back(k, i);
  }
  std::shuffle(slots.begin(), slots.end(), rng);
  slots.resize(std::min<std::size_t>(slots.size(), static_cast<std::size_t>(opt.entries)));
  for (const auto& [k, i] : slots) {
    double& x = vars[k]->data()[i];
    const double saved = x;
    x = saved + opt.h;
    const double lp = loss();
    x = saved - opt.h;
    const double lm = loss();
    x = saved;
    out.evaluations += 2;
    ent_a.push_back(analytic[k].data()[i]);
    ent_n.push_back((lp - lm) / (2 * opt.h));
  }
  out.rel_error = std::max(rel(dir_a, dir_n), ent_n.empty() ? 0.0 : rel(ent_a, ent_n));
  return out;
}

struct Output {
  Matrix<double> values;
  int node = -1;
};

// Forward closure: reads the current variable values, registers input
// features with `track` and stores their tape nodes in `input_nodes`.
using ForwardFn = std::function<Output(nn::Context<double>&, std::vector<int>& input_nodes)>;

// Gradient of L = sum(R .* forward()) with a fixed random R, checked for
// every listed trainable parameter and input matrix.
inline CaseResult check_tape(const std::string& name, double tolerance, std::vector<nn::Parameter<double>*> params,
                             std::vector<Matrix<double>*> inputs, const ForwardFn& fwd, const Options& opt, Rng& rng) {
  nn::Tape<double> tape;
  nn::Context<double> ctx;
  ctx.tape = &tape;
  std::vector<int> input_nodes;
  const Output y = fwd(ctx, input_nodes);
  const Matrix<double> r = random_matrix(rng, y.values.rows(), y.values.cols());
  const nn::Gradients<double> grads = tape.backward(y.node, r);

  std::vector<Matrix<double>*> vars;
  std::vector<Matrix<double>> analytic;
  for (auto* p : params) {
    if (!p->trainable) continue;
    vars.push_back(&p->value);
    auto it = grads.find(p->name);
    analytic.push_back(it == grads.end() ? Matrix<double>::Zero(p->value.rows(), p->value.cols()) : it->second);
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    vars.push_back(inputs[i]);
    analytic.push_back(tape.grad(input_nodes.at(i)));
  }
  auto loss = [&] {
    nn::Context<double> plain;
    std::vector<int> ignored;
    return fwd(plain, ignored).values.cwiseProduct(r).sum();
  };
  return compare(name, tolerance, vars, std::move(analytic), loss, opt, rng);
}

namespace detail {

inline SparseTensor<double> with_features(const SparseTensor<double>& t, const Matrix<double>& f) {
  return SparseTensor<double>(t.coordinates_ptr(), f);
}

inline SparseTensor<double> tracked_input(nn::Context<double>& ctx, const SparseTensor<double>& t,
                                          const Matrix<double>& f, std::vector<int>& nodes) {
  SparseTensor<double> x = nn::track(ctx, with_features(t, f));
  nodes.push_back(x.node());
  return x;
}

// Moves entries away from zero so that ReLU-style kinks are not straddled.
inline void push_from_zero(Matrix<double>& m, double gap) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double& v = m.data()[i];
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  }
}

}  // namespace detail

inline CaseResult check_conv(const Options& opt, Rng& rng, int kernel, int stride) {
  const int s = opt.scale;
  auto x = random_sparse<double>(rng, static_cast<std::size_t>(30 * s), 5, 3);
  Matrix<double> f = x.features();
  auto w = nn::conv_weight<double>("w", kernel, 3, 4 * s);
  w.value = random_matrix(rng, w.value.rows(), w.value.cols());
  return check_tape("conv_k" + std::to_string(kernel) + "_s" + std::to_string(stride), opt.layer_tolerance, {&w},
                    {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      auto y = nn::sparse_conv(ctx, detail::tracked_input(ctx, x, f, nodes), w, kernel, stride);
                      return Output{y.features(), y.node()};
                    },
                    opt, rng);
}

inline CaseResult check_transposed_conv(const Options& opt, Rng& rng) {
  auto x = random_sparse<double>(rng, static_cast<std::size_t>(20 * opt.scale), 4, 3, 2);
  Matrix<double> f = x.features();
  auto w = nn::conv_weight<double>("w", 2, 3, 4 * opt.scale);
  w.value = random_matrix(rng, w.value.rows(), w.value.cols());
  return check_tape("transposed_conv_k2_s2", opt.layer_tolerance, {&w}, {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      auto y = nn::sparse_transposed_conv(ctx, detail::tracked_input(ctx, x, f, nodes), w, 2, 2);
                      return Output{y.features(), y.node()};
                    },
                    opt, rng);
}

inline CaseResult check_batch_norm(const Options& opt, Rng& rng, bool training) {
  auto x = random_sparse<double>(rng, static_cast<std::size_t>(40 * opt.scale), 5, 4);
  Matrix<double> f = x.features();
  nn::BatchNormParams<double> bn("bn", 4);
  bn.gamma.value = random_matrix(rng, 1, 4);
  bn.beta.value = random_matrix(rng, 1, 4);
  bn.running_mean.value = random_matrix(rng, 1, 4);
  bn.running_var.value = random_matrix(rng, 1, 4).cwiseAbs().array() + 0.5;
  return check_tape(training ? "batch_norm_train" : "batch_norm_eval", opt.layer_tolerance, {&bn.gamma, &bn.beta},
                    {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      ctx.training = training;
                      auto y = nn::batch_norm(ctx, detail::tracked_input(ctx, x, f, nodes), bn);
                      return Output{y.features(), y.node()};
                    },
                    opt, rng);
}

inline CaseResult check_relu(const Options& opt, Rng& rng) {
  auto x = random_sparse<double>(rng, static_cast<std::size_t>(40 * opt.scale), 5, 4);
  Matrix<double> f = x.features();
  detail::push_from_zero(f, 1e-2);
  return check_tape("relu", opt.layer_tolerance, {}, {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      auto y = nn::relu(ctx, detail::tracked_input(ctx, x, f, nodes));
                      return Output{y.features(), y.node()};
                    },
                    opt, rng);
}

inline CaseResult check_sparse_add(const Options& opt, Rng& rng) {
  auto a = random_sparse<double>(rng, static_cast<std::size_t>(30 * opt.scale), 4, 3);
  auto b = random_sparse<double>(rng, static_cast<std::size_t>(30 * opt.scale), 4, 3);
  Matrix<double> fa = a.features(), fb = b.features();
  return check_tape("sparse_add", opt.layer_tolerance, {}, {&fa, &fb},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      auto xa = detail::tracked_input(ctx, a, fa, nodes);
                      auto xb = detail::tracked_input(ctx, b, fb, nodes);
                      auto y = nn::sparse_add(ctx, xa, xb);
                      return Output{y.features(), y.node()};
                    },
                    opt, rng);
}

inline CaseResult check_gem(const Options& opt, Rng& rng, double p) {
  auto x = random_sparse<double>(rng, static_cast<std::size_t>(40 * opt.scale), 5, 4, 1, 2);
  Matrix<double> f = x.features().cwiseAbs().array() + 0.1;
  // p sits on the clamp boundary at 1, where only the input gradient is smooth.
  nn::Parameter<double> pp{"gem.p", {1}, Matrix<double>::Constant(1, 1, p), p > 1.0};
  return check_tape("gem_p" + to_text(p), opt.layer_tolerance, {&pp}, {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      auto e = gem_pool(ctx, detail::tracked_input(ctx, x, f, nodes), pp, 2);
                      return Output{e.values, e.node};
                    },
                    opt, rng);
}

inline CaseResult check_mac(const Options& opt, Rng& rng) {
  auto x = random_sparse<double>(rng, static_cast<std::size_t>(40 * opt.scale), 5, 4, 1, 2);
  Matrix<double> f = x.features();
  return check_tape("mac", opt.layer_tolerance, {}, {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      auto e = mac_pool(ctx, detail::tracked_input(ctx, x, f, nodes), 2);
                      return Output{e.values, e.node};
                    },
                    opt, rng);
}

inline CaseResult check_l2_normalize(const Options& opt, Rng& rng) {
  auto x = random_sparse<double>(rng, 20, 4, 5, 1, 2);
  Matrix<double> f = x.features();
  return check_tape("l2_normalize", opt.layer_tolerance, {}, {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      auto e = mac_pool(ctx, detail::tracked_input(ctx, x, f, nodes), 2);
                      e = l2_normalize(ctx, e);
                      return Output{e.values, e.node};
                    },
                    opt, rng);
}

inline CaseResult check_triplet(const Options& opt, Rng& rng) {
  const Eigen::Index n = 8, d = 4;
  Matrix<double> emb = random_matrix(rng, n, d);
  SimilarityMasks masks;
  masks.n = static_cast<std::size_t>(n);
  masks.positive.assign(masks.n * masks.n, 0);
  masks.negative.assign(masks.n * masks.n, 0);
  for (std::size_t i = 0; i < masks.n; ++i) {
    for (std::size_t j = 0; j < masks.n; ++j) {
      if (i == j) continue;
      const bool same = i / 2 == j / 2;
      masks.positive[i * masks.n + j] = same;
      masks.negative[i * masks.n + j] = !same;
    }
  }
  const auto mined = batch_hard_mine(emb, masks);
  // Large margin keeps every triplet active, away from the hinge.
  const double margin = 10.0;
  const BatchLoss base = triplet_batch_loss(emb, mined.triplets, margin);
  return compare("triplet_loss", opt.layer_tolerance, {&emb}, {base.grad},
                 [&] { return triplet_batch_loss(emb, mined.triplets, margin).mean_loss; }, opt, rng);
}

// Whole MinkLoc3D on a small input: every trainable parameter and the input
// features at once.
inline CaseResult check_model(const Options& opt, Rng& rng, bool training, Pooling pooling = Pooling::GeM) {
  ModelConfig cfg;
  cfg.conv0_channels = 4;
  cfg.conv1_channels = 4;
  cfg.conv2_channels = 6;
  cfg.conv3_channels = 6;
  cfg.descriptor_dim = 8;
  cfg.pooling = pooling;
  MinkLoc3D<double> model(cfg, rng());
  model.for_each_parameter([&](nn::Parameter<double>& p) {
    const std::string& n = p.name;
    if (n.ends_with(".mean")) p.value = 0.1 * random_matrix(rng, 1, p.value.cols());
    if (n.ends_with(".var")) p.value = random_matrix(rng, 1, p.value.cols()).cwiseAbs().array() + 0.5;
    if (n.ends_with(".gamma")) p.value = random_matrix(rng, 1, p.value.cols()).cwiseAbs().array() + 0.5;
    if (n.ends_with(".beta")) p.value = 0.5 * random_matrix(rng, 1, p.value.cols()).cwiseAbs();
  });
  const int batches = training ? 2 : 1;
  auto x = random_sparse<double>(rng, static_cast<std::size_t>(std::min(50, 25 * batches) * opt.scale), 8, 1, 1,
                                 batches);
  Matrix<double> f = x.features().cwiseAbs().array() + 0.5;
  std::vector<nn::Parameter<double>*> params;
  model.for_each_parameter([&](nn::Parameter<double>& p) { params.push_back(&p); });
  return check_tape(std::string("model_") + (training ? "train" : "eval") + "_" + to_string(pooling),
                    opt.end_to_end_tolerance, params, {&f},
                    [&](nn::Context<double>& ctx, std::vector<int>& nodes) {
                      ctx.training = training;
                      auto e = model.forward(ctx, detail::tracked_input(ctx, x, f, nodes), batches);
                      return Output{e.values, e.node};
                    },
                    opt, rng);
}

inline Report run_all(const Options& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(opt.seed);
  Report rep;
  rep.cases.push_back(check_conv(opt, rng, 3, 1));
  rep.cases.push_back(check_conv(opt, rng, 5, 1));
  rep.cases.push_back(check_conv(opt, rng, 2, 2));
  rep.cases.push_back(check_conv(opt, rng, 1, 1));
  rep.cases.push_back(check_transposed_conv(opt, rng));
  rep.cases.push_back(check_batch_norm(opt, rng, true));
  rep.cases.push_back(check_batch_norm(opt, rng, false));
  rep.cases.push_back(check_relu(opt, rng));
  rep.cases.push_back(check_sparse_add(opt, rng));
  rep.cases.push_back(check_gem(opt, rng, 3.0));
  rep.cases.push_back(check_gem(opt, rng, 1.0));
  rep.cases.push_back(check_mac(opt, rng));
  rep.cases.push_back(check_l2_normalize(opt, rng));
  rep.cases.push_back(check_triplet(opt, rng));
  rep.cases.push_back(check_model(opt, rng, false));
  rep.cases.push_back(check_model(opt, rng, true));
  rep.cases.push_back(check_model(opt, rng, false, Pooling::MAC));
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace minkloc::gradcheck
