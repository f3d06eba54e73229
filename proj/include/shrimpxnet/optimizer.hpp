#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "shrimpxnet/model.hpp"
#include "shrimpxnet/tensor.hpp"

namespace sxn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::int64_t t = 0;

  static AdamState zeros_like(const Params<T>& params) {
    AdamState state;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.emplace_back(params.tensor(i).shape());
      state.v.emplace_back(params.tensor(i).shape());
    }
    return state;
  }
};

// One Adam update:
//   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
// Frozen parameters (trainable mask 0) are skipped entirely, moments
// included, so their bits never change. The timestep advances once per
// call.
template <typename T>
inline void adam_step(Params<T>& params, const std::vector<Tensor<T>>& grads,
                      AdamState<T>& state, const AdamConfig& cfg, double lr,
                      const std::vector<std::uint8_t>& trainable) {
  if (grads.size() != params.size() || trainable.size() != params.size() ||
      state.m.size() != params.size()) {
    throw ShapeError("adam_step requires params, grads, state and mask of equal arity");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!trainable[p]) continue;
    Tensor<T>& theta = params.tensor(p);
    const Tensor<T>& g = grads[p];
    if (!theta.same_shape(g)) {
      throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match parameter " +
                       params.name(p) + " " + shape_str(theta.shape()));
    }
    Tensor<T>& m = state.m[p];
    Tensor<T>& v = state.v[p];
    for (std::int64_t i = 0; i < theta.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / bc1;
      const double v_hat = vi / bc2;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) -
                                lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

// lr = initial_lr * gamma^floor(epoch / step_size)
inline double step_lr(double initial_lr, std::int64_t epoch, std::int64_t step_size,
                      double gamma) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  if (step_size < 1) throw ConfigError("scheduler step_size must be >= 1");
  return initial_lr * std::pow(gamma, static_cast<double>(epoch / step_size));
}

}  // namespace sxn
