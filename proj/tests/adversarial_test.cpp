#include <gtest/gtest.h>

#include <cmath>

#include "shrimpxnet/adversarial.hpp"
#include "shrimpxnet/trainer.hpp"
#include "test_util.hpp"

using namespace sxn;
using testutil::random_tensor;

namespace {

ModelSpec small_spec(std::int64_t input, std::int64_t classes) {
  ModelSpec spec;
  spec.blocks = {{8, 3, 1, 2}, {16, 3, 1, 2}};
  spec.input_size = input;
  spec.in_channels = 3;
  spec.head_hidden_width = 16;
  spec.num_classes = classes;
  spec.dropout_rate = 0.1;
  return spec;
}

// Shared quickly-trained model on separable synthetic data.
struct TrainedFixture {
  ModelSpec spec;
  DatasetSplit data;
  Checkpoint ckpt;

  static const TrainedFixture& get() {
    static TrainedFixture fixture = [] {
      TrainedFixture f;
      f.spec = small_spec(16, 4);
      LoadedDataset synth = generate_synthetic(40, 4, 16, 77);
      f.data = split_dataset(synth.samples, synth.class_names, 77);
      TrainConfig cfg;
      cfg.epochs = 8;
      cfg.batch_size = 16;
      cfg.patience = 8;
      cfg.seed = 77;
      cfg.initial_lr = 3e-3;
      cfg.scheduler.step_size = 6;
      f.ckpt = train(cfg, f.spec, f.data).checkpoint;
      return f;
    }();
    return fixture;
  }
};

}  // namespace

TEST(Fgsm, EpsilonZeroIsBitIdentical) {
  const auto& fx = TrainedFixture::get();
  Batch batch = gather_batch(fx.data.test, {0, 1, 2, 3});
  Tensor<float> targets = one_hot<float>(batch.labels, 4);
  Tensor<float> adv = fgsm(fx.spec, fx.ckpt.params, batch.images, targets, 0.0);
  EXPECT_TRUE(adv == batch.images);
}

TEST(Fgsm, DeltaMembershipAndLinfBound) {
  const auto& fx = TrainedFixture::get();
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const double eps = 0.02 + 0.03 * trial;
    Tensor<float> x = random_tensor<float>({2, 3, 16, 16}, rng, 0.0, 1.0);
    Tensor<float> targets = one_hot<float>({trial % 4, (trial + 1) % 4}, 4);
    Tensor<float> delta = fgsm_delta(fx.spec, fx.ckpt.params, x, targets, eps);
    const float feps = static_cast<float>(eps);
    for (std::int64_t i = 0; i < delta.size(); ++i) {
      ASSERT_TRUE(delta[i] == feps || delta[i] == -feps || delta[i] == 0.0f)
          << "delta " << delta[i] << " at " << i;
    }
    Tensor<float> adv = fgsm(fx.spec, fx.ckpt.params, x, targets, eps, true);
    for (std::int64_t i = 0; i < adv.size(); ++i) {
      ASSERT_GE(adv[i], 0.0f);
      ASSERT_LE(adv[i], 1.0f);
      ASSERT_LE(std::abs(adv[i] - x[i]), feps * (1.0f + 1e-6f));
    }
  }
}

TEST(Fgsm, ConstantImageMovesByEpsilonWhereGradientIsPositive) {
  const auto& fx = TrainedFixture::get();
  Tensor<float> x = Tensor<float>::full({1, 3, 16, 16}, 0.5f);
  Tensor<float> targets = one_hot<float>({2}, 4);
  Tensor<float> delta = fgsm_delta(fx.spec, fx.ckpt.params, x, targets, 0.1);
  Tensor<float> adv = fgsm(fx.spec, fx.ckpt.params, x, targets, 0.1, true);
  int moved_up = 0;
  for (std::int64_t i = 0; i < adv.size(); ++i) {
    if (delta[i] > 0.0f) {
      ASSERT_FLOAT_EQ(adv[i], 0.6f);
      ++moved_up;
    } else if (delta[i] < 0.0f) {
      ASSERT_FLOAT_EQ(adv[i], 0.4f);
    } else {
      ASSERT_EQ(adv[i], 0.5f);
    }
  }
  EXPECT_GT(moved_up, 0);
}

TEST(Fgsm, DeterministicGivenInputs) {
  const auto& fx = TrainedFixture::get();
  Batch batch = gather_batch(fx.data.test, {0, 5});
  Tensor<float> targets = one_hot<float>(batch.labels, 4);
  Tensor<float> a = fgsm(fx.spec, fx.ckpt.params, batch.images, targets, 0.07);
  Tensor<float> b = fgsm(fx.spec, fx.ckpt.params, batch.images, targets, 0.07);
  EXPECT_TRUE(a == b);
}

// On the trained model the attack raises the loss on nearly every batch.
TEST(Fgsm, AttackRaisesLoss) {
  const auto& fx = TrainedFixture::get();
  const auto& samples = fx.data.test;
  int raised = 0, batches = 0;
  const std::size_t batch_size = 8;
  for (std::size_t at = 0; at + batch_size <= samples.size(); at += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = at; i < at + batch_size; ++i) idx.push_back(i);
    Batch batch = gather_batch(samples, idx);
    Tensor<float> targets = one_hot<float>(batch.labels, 4);
    Tensor<float> adv = fgsm(fx.spec, fx.ckpt.params, batch.images, targets, 0.05);
    const float clean =
        cross_entropy_forward(predict(fx.spec, fx.ckpt.params, batch.images), targets);
    const float attacked = cross_entropy_forward(predict(fx.spec, fx.ckpt.params, adv), targets);
    ++batches;
    if (attacked >= clean) ++raised;
  }
  ASSERT_GE(batches, 3);
  EXPECT_GE(static_cast<double>(raised) / batches, 0.9);
}

TEST(AdversarialStep, FractionZeroMatchesPlainStep) {
  const auto& fx = TrainedFixture::get();
  Batch batch = gather_batch(fx.data.train, {0, 1, 2, 3, 4, 5, 6, 7});
  Tensor<float> targets = one_hot<float>(batch.labels, 4);
  const auto mask = trainable_mask(fx.spec, 0);

  Params<float> plain = fx.ckpt.params;
  AdamState<float> plain_state = AdamState<float>::zeros_like(plain);
  Rng drop_a(derive_seed(9, "d"));
  train_step(fx.spec, plain, batch.images, targets, plain_state, {}, 1e-3, mask, drop_a);

  Params<float> adv = fx.ckpt.params;
  AdamState<float> adv_state = AdamState<float>::zeros_like(adv);
  AttackConfig attack;
  attack.epsilon = 0.1;
  attack.adversarial_fraction = 0.0;
  Rng drop_b(derive_seed(9, "d"));
  adversarial_training_step(fx.spec, adv, batch.images, targets, attack, adv_state, {}, 1e-3,
                            mask, drop_b);
  EXPECT_TRUE(plain == adv);

  // fraction=1 with epsilon=0 is also the plain update.
  Params<float> adv2 = fx.ckpt.params;
  AdamState<float> adv2_state = AdamState<float>::zeros_like(adv2);
  attack.epsilon = 0.0;
  attack.adversarial_fraction = 1.0;
  Rng drop_c(derive_seed(9, "d"));
  adversarial_training_step(fx.spec, adv2, batch.images, targets, attack, adv2_state, {}, 1e-3,
                            mask, drop_c);
  EXPECT_TRUE(plain == adv2);
}

// Paired smoke experiment: adversarial training improves accuracy under
// attack compared to plain training on the same data and seed. At this
// configuration the plain model drops to ~0.06 at eps=0.1 while the
// adversarially trained one keeps ~0.7.
TEST(AdversarialStep, TrainingImprovesRobustness) {
  ModelSpec spec = small_spec(24, 4);
  LoadedDataset synth = generate_synthetic(60, 4, 24, 123);
  DatasetSplit data = split_dataset(synth.samples, synth.class_names, 123);

  TrainConfig plain_cfg;
  plain_cfg.epochs = 14;
  plain_cfg.batch_size = 16;
  plain_cfg.patience = 14;
  plain_cfg.seed = 123;
  plain_cfg.initial_lr = 3e-3;
  plain_cfg.scheduler.step_size = 6;
  TrainResult plain = train(plain_cfg, spec, data);

  TrainConfig adv_cfg = plain_cfg;
  adv_cfg.attack.epsilon = 0.1;
  adv_cfg.attack.adversarial_fraction = 0.5;
  TrainResult robust = train(adv_cfg, spec, data);

  const std::vector<double> ladder = {0.0, 0.1};
  auto plain_rows = robustness_sweep(spec, plain.checkpoint.params, data.test, ladder);
  auto robust_rows = robustness_sweep(spec, robust.checkpoint.params, data.test, ladder);
  EXPECT_GT(robust_rows[1].accuracy, plain_rows[1].accuracy)
      << "plain clean=" << plain_rows[0].accuracy << " attacked=" << plain_rows[1].accuracy
      << "; robust clean=" << robust_rows[0].accuracy << " attacked=" << robust_rows[1].accuracy;
}

TEST(RobustnessSweep, FirstRowIsCleanEvaluation) {
  const auto& fx = TrainedFixture::get();
  auto rows = robustness_sweep(fx.spec, fx.ckpt.params, fx.data.test, {0.0, 0.05, 0.1});
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].epsilon, 0.0);

  const auto [clean_loss, clean_acc] =
      evaluate_loss_accuracy(fx.spec, fx.ckpt.params, fx.data.test, 64);
  EXPECT_EQ(rows[0].accuracy, clean_acc);
  EXPECT_NEAR(rows[0].loss, clean_loss, 1e-9);
}

TEST(RobustnessSweep, DefaultLadderAndValidation) {
  const auto& ladder = default_epsilon_ladder();
  ASSERT_EQ(ladder.size(), 7u);
  const std::vector<double> expected = {0.0, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2};
  EXPECT_EQ(ladder, expected);

  const auto& fx = TrainedFixture::get();
  EXPECT_THROW(robustness_sweep(fx.spec, fx.ckpt.params, fx.data.test, {0.1, 0.2}), ConfigError);
  EXPECT_THROW(robustness_sweep(fx.spec, fx.ckpt.params, fx.data.test, {0.0, 0.2, 0.1}),
               ConfigError);
  EXPECT_THROW(robustness_sweep(fx.spec, fx.ckpt.params, {}, {0.0}), DataError);
}

TEST(AttackConfig, Validation) {
  AttackConfig bad;
  bad.epsilon = -0.1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.epsilon = 0.1;
  bad.adversarial_fraction = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
}
