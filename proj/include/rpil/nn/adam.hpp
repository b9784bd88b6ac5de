#pragma once

#include <Eigen/Core>
#include <cmath>
#include <span>
#include <vector>

#include "rpil/nn/network.hpp"

namespace rpil::nn {

/// Contiguous views of every trainable array, in visiting order.
template <typename S>
std::vector<std::span<S>> trainable_views(NetworkParams<S>& p) {
  std::vector<std::span<S>> views;
  p.for_each_trainable(
      [&](const std::string&, auto& a) { views.emplace_back(a.data(), static_cast<std::size_t>(a.size())); });
  return views;
}

template <typename S>
std::vector<std::span<const S>> trainable_views(const NetworkParams<S>& p) {
  std::vector<std::span<const S>> views;
  p.for_each_trainable(
      [&](const std::string&, const auto& a) { views.emplace_back(a.data(), static_cast<std::size_t>(a.size())); });
  return views;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename S>
struct AdamState {
  NetworkParams<S> m;
  NetworkParams<S> v;
  long step = 0;

  explicit AdamState(const NetworkParams<S>& params) : m(params.zeros_like()), v(params.zeros_like()) {}
};

/// One bias-corrected Adam update of `params` in place.
template <typename S>
void adam_step(NetworkParams<S>& params, const NetworkParams<S>& grads, AdamState<S>& state, const AdamConfig& cfg) {
  ++state.step;
  const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
  const S c1 = S(1.0 - std::pow(cfg.beta1, double(state.step)));
  const S c2 = S(1.0 - std::pow(cfg.beta2, double(state.step)));
  const S lr = S(cfg.lr), eps = S(cfg.eps);

  auto p = trainable_views(params);
  auto g = trainable_views(grads);
  auto m = trainable_views(state.m);
  auto v = trainable_views(state.v);
  for (std::size_t i = 0; i < p.size(); ++i) {
    using ArrayMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using ConstArrayMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
    const auto n = static_cast<Eigen::Index>(p[i].size());
    ArrayMap pa(p[i].data(), n), ma(m[i].data(), n), va(v[i].data(), n);
    ConstArrayMap ga(g[i].data(), n);
    ma = b1 * ma + (S(1) - b1) * ga;
    va = b2 * va + (S(1) - b2) * ga.square();
    pa -= lr * (ma / c1) / ((va / c2).sqrt() + eps);
  }
}

}  // namespace rpil::nn
