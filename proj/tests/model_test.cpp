#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "shrimpxnet/checkpoint.hpp"
#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/model.hpp"
#include "test_util.hpp"

using namespace sxn;
namespace fs = std::filesystem;
using testutil::random_tensor;

namespace {

ModelSpec tiny_spec() {
  ModelSpec spec;
  spec.blocks = {{4, 3, 1, 2}, {8, 3, 1, 2}};
  spec.input_size = 16;
  spec.in_channels = 3;
  spec.head_hidden_width = 8;
  spec.num_classes = 4;
  spec.dropout_rate = 0.3;
  return spec;
}

Checkpoint make_checkpoint(const ModelSpec& spec, std::uint64_t seed) {
  Checkpoint ckpt;
  ckpt.spec = spec;
  ckpt.params = init_params<float>(spec, seed);
  ckpt.resume_params = init_params<float>(spec, seed + 1);
  ckpt.opt = AdamState<float>::zeros_like(ckpt.params);
  ckpt.opt.t = 12;
  ckpt.freeze_depth = 1;
  ckpt.epochs_completed = 3;
  ckpt.base_seed = seed;
  ckpt.best_val_loss = 0.123456789;
  ckpt.best_epoch = 2;
  ckpt.epochs_since_improve = 1;
  ckpt.class_names = {"BG", "Healthy", "WSSV", "WSSV_BG"};
  return ckpt;
}

}  // namespace

TEST(ModelSpec, Validation) {
  ModelSpec spec = tiny_spec();
  spec.validate();
  EXPECT_EQ(spec.block_extents(), (std::vector<std::int64_t>{8, 4}));

  ModelSpec bad = tiny_spec();
  bad.num_classes = 1;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_spec();
  bad.input_size = 2;  // collapses below 1x1 after two pools
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = tiny_spec();
  bad.blocks[0].kernel = 4;  // same padding needs odd kernels
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Model, ProbRowsSumToOne) {
  const ModelSpec spec = tiny_spec();
  auto params = init_params<float>(spec, 3);
  Rng rng(4);
  Tensor<float> x = random_tensor<float>({5, 3, 16, 16}, rng, 0.0, 1.0);
  Tensor<float> probs = predict(spec, params, x);
  ASSERT_EQ(probs.shape(), (Shape{5, 4}));
  for (std::int64_t i = 0; i < 5; ++i) {
    float sum = 0.0f;
    for (std::int64_t j = 0; j < 4; ++j) sum += probs.at2(i, j);
    EXPECT_NEAR(sum, 1.0f, 1e-6);
  }
}

TEST(Model, InferenceIsDeterministic) {
  const ModelSpec spec = tiny_spec();
  auto params = init_params<float>(spec, 5);
  Rng rng(6);
  Tensor<float> x = random_tensor<float>({2, 3, 16, 16}, rng, 0.0, 1.0);
  EXPECT_TRUE(predict(spec, params, x) == predict(spec, params, x));
}

TEST(Model, InputShapeMismatch) {
  const ModelSpec spec = tiny_spec();
  auto params = init_params<float>(spec, 5);
  Tensor<float> wrong({1, 3, 8, 8});
  Tape<float> tape;
  EXPECT_THROW(build_forward(tape, spec, params, wrong, {}), ShapeError);
}

// One block, identity conv kernel, every head value chosen so the whole
// pass can be followed on paper:
//   conv(identity) -> relu -> features == x
//   maxpool 2x2  -> [[6,8],[14,16]]/16
//   GAP          -> 44/64 = 0.6875
//   fc1 [2,-1]+b -> relu([1.475, -0.4875]) = [1.475, 0]
//   fc2          -> [1.475, -1.225]
//   softmax      -> [1, e^-2.7]/(1+e^-2.7)
TEST(Model, HandComputedForwardPass) {
  ModelSpec spec;
  spec.blocks = {{1, 3, 1, 2}};
  spec.input_size = 4;
  spec.in_channels = 1;
  spec.head_hidden_width = 2;
  spec.num_classes = 2;
  spec.dropout_rate = 0.0;

  Params<float> params;
  Tensor<float> kernel({1, 1, 3, 3});
  kernel.at4(0, 0, 1, 1) = 1.0f;
  params.add("block0.conv.weight", kernel);
  params.add("block0.conv.bias", Tensor<float>({1}));
  params.add("head.fc1.weight", Tensor<float>({1, 2}, {2.0f, -1.0f}));
  params.add("head.fc1.bias", Tensor<float>({2}, {0.1f, 0.2f}));
  params.add("head.fc2.weight", Tensor<float>({2, 2}, {1.0f, -1.0f, 0.5f, 0.5f}));
  params.add("head.fc2.bias", Tensor<float>({2}, {0.0f, 0.25f}));

  Tensor<float> x({1, 1, 4, 4});
  for (std::int64_t i = 0; i < 16; ++i) x[i] = static_cast<float>(i + 1) / 16.0f;

  Tape<float> tape;
  ForwardOptions opt;
  opt.params_require_grad = false;
  auto vars = build_forward(tape, spec, params, x, opt);

  const Tensor<float>& features = tape.value(vars.features);
  ASSERT_EQ(features.shape(), (Shape{1, 1, 4, 4}));
  for (std::int64_t i = 0; i < 16; ++i) EXPECT_FLOAT_EQ(features[i], x[i]);

  const Tensor<float>& logits = tape.value(vars.logits);
  EXPECT_NEAR(logits[0], 1.475f, 1e-6);
  EXPECT_NEAR(logits[1], -1.225f, 1e-6);

  const Tensor<float>& probs = tape.value(vars.probs);
  const double e = std::exp(-2.7);
  EXPECT_NEAR(probs[0], 1.0 / (1.0 + e), 1e-6);
  EXPECT_NEAR(probs[1], e / (1.0 + e), 1e-6);
}

TEST(InitParams, DeterministicAndZeroBiases) {
  const ModelSpec spec = tiny_spec();
  auto a = init_params<float>(spec, 7);
  auto b = init_params<float>(spec, 7);
  EXPECT_TRUE(a == b);
  auto c = init_params<float>(spec, 8);
  EXPECT_FALSE(a == c);

  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.name(i).find("bias") == std::string::npos) continue;
    for (std::int64_t j = 0; j < a.tensor(i).size(); ++j) EXPECT_EQ(a.tensor(i)[j], 0.0f);
  }
}

TEST(InitParams, HeUniformVariance) {
  // One conv with > 1e4 weights: variance of U(-b, b) with b = sqrt(6/fan)
  // is 2/fan.
  ModelSpec spec;
  spec.blocks = {{64, 3, 1, 2}};
  spec.input_size = 8;
  spec.in_channels = 18;
  spec.head_hidden_width = 4;
  spec.num_classes = 2;
  auto params = init_params<float>(spec, 10);
  const Tensor<float>& w = params.at("block0.conv.weight");
  ASSERT_GE(w.size(), 10000);
  double mean = 0.0;
  for (std::int64_t i = 0; i < w.size(); ++i) mean += w[i];
  mean /= static_cast<double>(w.size());
  double var = 0.0;
  for (std::int64_t i = 0; i < w.size(); ++i) var += (w[i] - mean) * (w[i] - mean);
  var /= static_cast<double>(w.size() - 1);
  const double target = 2.0 / (18.0 * 9.0);
  EXPECT_NEAR(var, target, 0.15 * target);
}

TEST(TrainableMask, FreezeDepths) {
  const ModelSpec spec = tiny_spec();
  auto all = trainable_mask(spec, 0);
  ASSERT_EQ(all.size(), 8u);  // 2 blocks * 2 + 4 head tensors
  for (auto m : all) EXPECT_EQ(m, 1);

  auto frozen = trainable_mask(spec, 2);
  EXPECT_EQ(frozen[0], 0);
  EXPECT_EQ(frozen[1], 0);
  EXPECT_EQ(frozen[2], 0);
  EXPECT_EQ(frozen[3], 0);
  for (std::size_t i = 4; i < 8; ++i) EXPECT_EQ(frozen[i], 1);  // head always trains

  EXPECT_THROW(trainable_mask(spec, 3), ConfigError);
  EXPECT_THROW(trainable_mask(spec, -1), ConfigError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const ModelSpec spec = tiny_spec();
  Checkpoint ckpt = make_checkpoint(spec, 21);
  const fs::path dir = testutil::temp_dir("ckpt");
  const fs::path file = dir / "model.sxn";
  save_checkpoint(ckpt, file);

  Checkpoint loaded = load_checkpoint(file);
  EXPECT_TRUE(loaded.params == ckpt.params);
  EXPECT_TRUE(loaded.resume_params == ckpt.resume_params);
  EXPECT_EQ(loaded.opt.t, 12);
  EXPECT_EQ(loaded.freeze_depth, 1);
  EXPECT_EQ(loaded.epochs_completed, 3);
  EXPECT_EQ(loaded.base_seed, 21u);
  EXPECT_EQ(loaded.best_val_loss, ckpt.best_val_loss);  // bit-exact via stored bits
  EXPECT_EQ(loaded.class_names, ckpt.class_names);
  EXPECT_TRUE(loaded.spec == spec);

  // save(load(file)) reproduces the file byte for byte.
  const fs::path file2 = dir / "model2.sxn";
  save_checkpoint(loaded, file2);
  EXPECT_EQ(read_text_file(file), read_text_file(file2));

  // Forward outputs bit-identical after the round trip.
  Rng rng(22);
  Tensor<float> x = random_tensor<float>({1, 3, 16, 16}, rng, 0.0, 1.0);
  EXPECT_TRUE(predict(spec, ckpt.params, x) == predict(spec, loaded.params, x));
  fs::remove_all(dir);
}

TEST(Checkpoint, RejectsBadFiles) {
  const fs::path dir = testutil::temp_dir("ckpt_bad");

  const fs::path wrong_magic = dir / "magic.sxn";
  write_text_file(wrong_magic, "NOPE then some garbage bytes");
  EXPECT_THROW(load_checkpoint(wrong_magic), IoError);

  const ModelSpec spec = tiny_spec();
  Checkpoint ckpt = make_checkpoint(spec, 1);
  const fs::path good = dir / "good.sxn";
  save_checkpoint(ckpt, good);

  // Truncation.
  std::string bytes = read_text_file(good);
  write_text_file(dir / "trunc.sxn", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_checkpoint(dir / "trunc.sxn"), IoError);

  // Unsupported format version.
  std::string versioned = bytes;
  versioned[4] = 99;
  write_text_file(dir / "ver.sxn", versioned);
  try {
    load_checkpoint(dir / "ver.sxn");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }

  EXPECT_THROW(load_checkpoint(dir / "missing.sxn"), IoError);
  fs::remove_all(dir);
}
