#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/model.hpp"
#include "shrimpxnet/optimizer.hpp"
#include "shrimpxnet/tape.hpp"

namespace sxn {

struct AttackConfig {
  double epsilon = 0.0;               // perturbation magnitude on the [0,1] pixel scale
  bool clip_to_valid_range = true;
  double adversarial_fraction = 0.5;  // share of each training batch replaced

  void validate() const {
    if (epsilon < 0.0) throw ConfigError("fgsm epsilon must be >= 0");
    if (adversarial_fraction < 0.0 || adversarial_fraction > 1.0) {
      throw ConfigError("adversarial_fraction must be in [0,1]");
    }
  }
};

// epsilon * sign(grad_x loss) with sign(0) = 0, so every component is
// exactly -eps, 0 or +eps. The gradient is taken in inference mode
// (dropout off), which makes the attack a pure function of (params, x, y).
template <typename T>
inline Tensor<T> fgsm_delta(const ModelSpec& spec, const Params<T>& params, const Tensor<T>& x,
                            const Tensor<T>& targets_onehot, double epsilon) {
  if (epsilon < 0.0) throw ConfigError("fgsm epsilon must be >= 0");
  Tape<T> tape;
  ForwardOptions opt;
  opt.training = false;
  opt.params_require_grad = false;
  opt.input_requires_grad = true;
  auto vars = build_forward(tape, spec, params, x, opt);
  auto loss = tape.cross_entropy(vars.probs, targets_onehot);
  tape.backward(loss);
  Tensor<T> grad = tape.grad(vars.input);
  const T eps = static_cast<T>(epsilon);
  Tensor<T> delta(x.shape());
  for (std::int64_t i = 0; i < delta.size(); ++i) delta[i] = eps * sign_of(grad[i]);
  return delta;
}

// x' = x + delta, optionally clipped back to the valid [0,1] pixel range.
template <typename T>
inline Tensor<T> fgsm(const ModelSpec& spec, const Params<T>& params, const Tensor<T>& x,
                      const Tensor<T>& targets_onehot, double epsilon, bool clip = true) {
  Tensor<T> delta = fgsm_delta(spec, params, x, targets_onehot, epsilon);
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) {
    T v = x[i] + delta[i];
    if (clip) v = v < T(0) ? T(0) : (v > T(1) ? T(1) : v);
    out[i] = v;
  }
  return out;
}

struct AdvStepStats {
  double clean_loss = 0.0;  // inference-mode loss on the incoming batch
  double adv_loss = 0.0;    // training loss actually stepped on
  double train_accuracy = 0.0;
};

namespace detail {

template <typename T>
inline double batch_accuracy(const Tensor<T>& probs, const Tensor<T>& targets) {
  const std::int64_t n = probs.dim(0), k = probs.dim(1);
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t bp = 0, bt = 0;
    for (std::int64_t j = 1; j < k; ++j) {
      if (probs.at2(i, j) > probs.at2(i, bp)) bp = j;
      if (targets.at2(i, j) > targets.at2(i, bt)) bt = j;
    }
    if (bp == bt) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace detail

// Shared forward/backward/Adam update used by both the plain and the
// adversarial training paths.
template <typename T>
inline AdvStepStats train_step(const ModelSpec& spec, Params<T>& params,
                               const Tensor<T>& x, const Tensor<T>& targets,
                               AdamState<T>& opt_state, const AdamConfig& adam, double lr,
                               const std::vector<std::uint8_t>& trainable, Rng& dropout_rng) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.training = true;
  opt.dropout_rng = &dropout_rng;
  auto vars = build_forward(tape, spec, params, x, opt);
  auto loss = tape.cross_entropy(vars.probs, targets);
  tape.backward(loss);
  std::vector<Tensor<T>> grads;
  grads.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) grads.push_back(tape.grad(vars.params[p]));
  adam_step(params, grads, opt_state, adam, lr, trainable);
  AdvStepStats stats;
  stats.adv_loss = static_cast<double>(tape.value(loss)[0]);
  stats.clean_loss = stats.adv_loss;
  stats.train_accuracy = detail::batch_accuracy(tape.value(vars.probs), targets);
  return stats;
}

// Replaces round(fraction * N) leading batch samples with their FGSM
// counterparts generated against the current parameters, then takes one
// optimizer step on the combined batch. With fraction 0 (or epsilon 0)
// the update is bit-identical to the plain step.
template <typename T>
inline AdvStepStats adversarial_training_step(const ModelSpec& spec, Params<T>& params,
                                              const Tensor<T>& x, const Tensor<T>& targets,
                                              const AttackConfig& attack,
                                              AdamState<T>& opt_state, const AdamConfig& adam,
                                              double lr,
                                              const std::vector<std::uint8_t>& trainable,
                                              Rng& dropout_rng) {
  attack.validate();
  const std::int64_t n = x.dim(0);
  const std::int64_t n_adv =
      static_cast<std::int64_t>(std::llround(attack.adversarial_fraction * static_cast<double>(n)));

  double clean_loss;
  {
    Tape<T> tape;
    ForwardOptions opt;
    opt.training = false;
    opt.params_require_grad = false;
    auto vars = build_forward(tape, spec, params, x, opt);
    clean_loss = static_cast<double>(tape.value(tape.cross_entropy(vars.probs, targets))[0]);
  }

  Tensor<T> stepped = x;
  if (n_adv > 0) {
    const std::int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor<T> head({n_adv, c, h, w});
    std::copy(x.data(), x.data() + head.size(), head.data());
    Tensor<T> head_targets({n_adv, targets.dim(1)});
    std::copy(targets.data(), targets.data() + head_targets.size(), head_targets.data());
    Tensor<T> adv = fgsm(spec, params, head, head_targets, attack.epsilon,
                         attack.clip_to_valid_range);
    std::copy(adv.data(), adv.data() + adv.size(), stepped.data());
  }

  AdvStepStats stats = train_step(spec, params, stepped, targets, opt_state, adam, lr,
                                  trainable, dropout_rng);
  stats.clean_loss = clean_loss;
  return stats;
}

struct SweepRow {
  double epsilon = 0.0;
  double accuracy = 0.0;
  double loss = 0.0;
};

inline const std::vector<double>& default_epsilon_ladder() {
  static const std::vector<double> ladder = {0.0, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2};
  return ladder;
}

// Accuracy/loss over a sample set under FGSM at each epsilon. The first
// row (epsilon 0) is exactly the clean evaluation.
inline std::vector<SweepRow> robustness_sweep(const ModelSpec& spec, const Params<float>& params,
                                              const std::vector<Sample>& samples,
                                              const std::vector<double>& epsilons,
                                              std::size_t batch_size = 64) {
  if (epsilons.empty() || epsilons.front() != 0.0) {
    throw ConfigError("epsilon ladder must start at 0");
  }
  for (std::size_t i = 1; i < epsilons.size(); ++i) {
    if (epsilons[i] <= epsilons[i - 1]) {
      throw ConfigError("epsilon ladder must be strictly ascending");
    }
  }
  if (samples.empty()) throw DataError("robustness sweep needs a non-empty sample set");

  std::vector<SweepRow> rows;
  const std::size_t n = samples.size();
  for (double eps : epsilons) {
    double loss_sum = 0.0;
    std::int64_t correct = 0;
    for (std::size_t at = 0; at < n; at += batch_size) {
      std::vector<std::size_t> idx;
      for (std::size_t i = at; i < std::min(n, at + batch_size); ++i) idx.push_back(i);
      Batch batch = gather_batch(samples, idx);
      Tensor<float> targets = one_hot<float>(batch.labels, spec.num_classes);
      Tensor<float> images = eps == 0.0
                                 ? batch.images
                                 : fgsm(spec, params, batch.images, targets, eps, true);
      Tensor<float> probs = predict(spec, params, images);
      loss_sum += static_cast<double>(cross_entropy_forward(probs, targets)) *
                  static_cast<double>(idx.size());
      const std::vector<int> preds = argmax_rows(probs);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        if (preds[i] == batch.labels[i]) ++correct;
      }
    }
    rows.push_back({eps, static_cast<double>(correct) / static_cast<double>(n),
                    loss_sum / static_cast<double>(n)});
  }
  return rows;
}

}  // namespace sxn
