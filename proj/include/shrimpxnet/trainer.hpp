#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "shrimpxnet/adversarial.hpp"
#include "shrimpxnet/augment.hpp"
#include "shrimpxnet/checkpoint.hpp"
#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/model.hpp"
#include "shrimpxnet/optimizer.hpp"

namespace sxn {

struct SchedulerConfig {
  std::int64_t step_size = 3;
  double gamma = 0.5;
};

// Validation-loss improvements smaller than this do not reset patience.
inline constexpr double kEarlyStopMinDelta = 1e-6;

struct TrainConfig {
  std::int64_t epochs = 30;
  std::int64_t batch_size = 128;
  double initial_lr = 1e-3;
  SchedulerConfig scheduler;
  std::int64_t patience = 5;
  AdamConfig adam;
  AugmentPolicy augment;
  AttackConfig attack;
  std::int64_t freeze_depth = 0;
  std::uint64_t seed = 42;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (scheduler.step_size < 1) throw ConfigError("scheduler step_size must be >= 1");
    if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be > 0");
    if (augment.apply_probability < 0.0 || augment.apply_probability > 1.0) {
      throw ConfigError("augment_probability must be in [0,1]");
    }
    if (augment.mixup_alpha < 0.0 || augment.cutmix_alpha < 0.0) {
      throw ConfigError("augmentation alphas must be >= 0");
    }
    attack.validate();
  }
};

struct EpochStats {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  double wall_time_sec = 0.0;  // informational; excluded from logs and
                               // determinism comparisons
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
};

struct AugmentLogLine {
  std::int64_t epoch = 0;
  std::int64_t batch = 0;
  AugTechnique technique = AugTechnique::none;
  double lambda = 1.0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainHistory history;
  std::vector<AugmentLogLine> augment_log;
};

// Inference-mode loss/accuracy over a sample list.
inline std::pair<double, double> evaluate_loss_accuracy(const ModelSpec& spec,
                                                        const Params<float>& params,
                                                        const std::vector<Sample>& samples,
                                                        std::size_t batch_size) {
  if (samples.empty()) throw DataError("evaluation set is empty");
  double loss_sum = 0.0;
  std::int64_t correct = 0;
  for (std::size_t at = 0; at < samples.size(); at += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = at; i < std::min(samples.size(), at + batch_size); ++i) idx.push_back(i);
    Batch batch = gather_batch(samples, idx);
    Tensor<float> targets = one_hot<float>(batch.labels, spec.num_classes);
    Tensor<float> probs = predict(spec, params, batch.images);
    loss_sum += static_cast<double>(cross_entropy_forward(probs, targets)) *
                static_cast<double>(idx.size());
    std::vector<int> preds = argmax_rows(probs);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (preds[i] == batch.labels[i]) ++correct;
    }
  }
  return {loss_sum / static_cast<double>(samples.size()),
          static_cast<double>(correct) / static_cast<double>(samples.size())};
}

namespace detail {

struct TrainState {
  Params<float> params;
  AdamState<float> opt;
  std::int64_t start_epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::int64_t best_epoch = -1;
  std::int64_t epochs_since_improve = 0;
  Params<float> best_params;
};

inline TrainResult run_training(TrainState state, const TrainConfig& cfg, const ModelSpec& spec,
                                const DatasetSplit& data) {
  cfg.validate();
  spec.validate();
  if (static_cast<std::int64_t>(data.class_names.size()) != spec.num_classes) {
    throw ConfigError("model expects " + std::to_string(spec.num_classes) + " classes, dataset has " +
                      std::to_string(data.class_names.size()));
  }
  if (data.train.empty() || data.validation.empty()) {
    throw DataError("training requires non-empty train and validation splits");
  }
  const std::vector<std::uint8_t> trainable = trainable_mask(spec, cfg.freeze_depth);
  const std::uint64_t augment_seed = cfg.augment.seed != 0 ? cfg.augment.seed : cfg.seed;

  TrainResult result;
  for (std::int64_t epoch = state.start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto tick = std::chrono::steady_clock::now();
    const double lr = step_lr(cfg.initial_lr, epoch, cfg.scheduler.step_size, cfg.scheduler.gamma);
    const auto plan = batch_plan(data.train.size(), static_cast<std::size_t>(cfg.batch_size),
                                 cfg.seed, epoch);
    double loss_sum = 0.0;
    double acc_sum = 0.0;
    for (std::size_t b = 0; b < plan.size(); ++b) {
      Batch batch = gather_batch(data.train, plan[b]);
      Tensor<float> images = std::move(batch.images);
      Tensor<float> targets = one_hot<float>(batch.labels, spec.num_classes);

      if (cfg.augment.enabled()) {
        Rng augment_rng(derive_seed(augment_seed, "augment", static_cast<std::uint64_t>(epoch),
                                    static_cast<std::uint64_t>(b)));
        AugmentedBatch<float> augmented =
            apply_policy(cfg.augment, images, targets, augment_rng);
        images = std::move(augmented.images);
        targets = std::move(augmented.labels);
        result.augment_log.push_back(
            {epoch, static_cast<std::int64_t>(b), augmented.record.technique,
             augmented.record.lambda});
      }

      Rng dropout_rng(derive_seed(cfg.seed, "dropout", static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(b)));
      AdvStepStats stats;
      try {
        if (cfg.attack.epsilon > 0.0) {
          stats = adversarial_training_step(spec, state.params, images, targets, cfg.attack,
                                            state.opt, cfg.adam, lr, trainable, dropout_rng);
        } else {
          stats = train_step(spec, state.params, images, targets, state.opt, cfg.adam, lr,
                             trainable, dropout_rng);
        }
      } catch (const NumericError& e) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + ": " + e.what());
      }
      if (!std::isfinite(stats.adv_loss)) {
        throw NumericError("training aborted at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b) + ": non-finite loss");
      }
      loss_sum += stats.adv_loss * static_cast<double>(plan[b].size());
      acc_sum += stats.train_accuracy * static_cast<double>(plan[b].size());
    }

    const auto [val_loss, val_acc] =
        evaluate_loss_accuracy(spec, state.params, data.validation,
                               static_cast<std::size_t>(cfg.batch_size));

    EpochStats row;
    row.epoch = epoch;
    row.train_loss = loss_sum / static_cast<double>(data.train.size());
    row.train_acc = acc_sum / static_cast<double>(data.train.size());
    row.val_loss = val_loss;
    row.val_acc = val_acc;
    row.lr = lr;
    row.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tick).count();
    result.history.epochs.push_back(row);

    if (val_loss < state.best_val_loss - kEarlyStopMinDelta) {
      state.best_val_loss = val_loss;
      state.best_epoch = epoch;
      state.best_params = state.params;
      state.epochs_since_improve = 0;
    } else {
      state.epochs_since_improve += 1;
    }
    if (state.epochs_since_improve >= cfg.patience) {
      result.checkpoint.epochs_completed = epoch + 1;
      break;
    }
    result.checkpoint.epochs_completed = epoch + 1;
  }

  if (result.history.epochs.empty()) {
    throw ConfigError("training ran zero epochs; check epochs and resume state");
  }
  Checkpoint& ckpt = result.checkpoint;
  ckpt.spec = spec;
  ckpt.resume_params = std::move(state.params);
  ckpt.params = state.best_params.empty() ? ckpt.resume_params : std::move(state.best_params);
  ckpt.opt = std::move(state.opt);
  ckpt.freeze_depth = cfg.freeze_depth;
  ckpt.base_seed = cfg.seed;
  ckpt.best_val_loss = state.best_val_loss;
  ckpt.best_epoch = state.best_epoch;
  ckpt.epochs_since_improve = state.epochs_since_improve;
  ckpt.class_names = data.class_names;
  return result;
}

}  // namespace detail

// Full run: Adam + StepLR with early stopping on validation loss
// (min-delta 1e-6, best-weights restoration).
inline TrainResult train(const TrainConfig& cfg, const ModelSpec& spec, const DatasetSplit& data) {
  detail::TrainState state;
  state.params = init_params<float>(spec, cfg.seed);
  state.opt = AdamState<float>::zeros_like(state.params);
  return detail::run_training(std::move(state), cfg, spec, data);
}

// Continues a checkpointed run up to cfg.epochs total epochs, step for
// step as if it had never stopped.
inline TrainResult resume_train(const Checkpoint& from, const TrainConfig& cfg,
                                const DatasetSplit& data) {
  if (from.epochs_completed >= cfg.epochs) {
    throw ConfigError("checkpoint already covers " + std::to_string(from.epochs_completed) +
                      " epochs; target is " + std::to_string(cfg.epochs));
  }
  detail::TrainState state;
  state.params = from.resume_params;
  state.opt = from.opt;
  state.start_epoch = from.epochs_completed;
  state.best_val_loss = from.best_val_loss;
  state.best_epoch = from.best_epoch;
  state.epochs_since_improve = from.epochs_since_improve;
  state.best_params = from.params;
  return detail::run_training(std::move(state), cfg, from.spec, data);
}

// Training log: per-batch augmentation lines `epoch batch technique
// lambda` (only when a policy is enabled) interleaved before each epoch's
// summary line `epoch train_loss train_acc val_loss val_acc lr`, fixed
// 6-decimal formatting.
inline std::string train_log_text(const TrainHistory& history,
                                  const std::vector<AugmentLogLine>& augment_log) {
  char buf[192];
  std::string out;
  std::size_t next_aug = 0;
  for (const EpochStats& row : history.epochs) {
    while (next_aug < augment_log.size() && augment_log[next_aug].epoch == row.epoch) {
      const AugmentLogLine& a = augment_log[next_aug];
      std::snprintf(buf, sizeof(buf), "%lld %lld %s %.6f\n", static_cast<long long>(a.epoch),
                    static_cast<long long>(a.batch), technique_name(a.technique), a.lambda);
      out += buf;
      ++next_aug;
    }
    std::snprintf(buf, sizeof(buf), "%lld %.6f %.6f %.6f %.6f %.6f\n",
                  static_cast<long long>(row.epoch), row.train_loss, row.train_acc, row.val_loss,
                  row.val_acc, row.lr);
    out += buf;
  }
  return out;
}

}  // namespace sxn
