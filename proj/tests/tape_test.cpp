#include <gtest/gtest.h>

#include <cmath>

#include "shrimpxnet/model.hpp"
#include "shrimpxnet/tape.hpp"
#include "test_util.hpp"

using namespace sxn;
using testutil::random_tensor;
using testutil::relative_error;

namespace {

ModelSpec small_spec() {
  ModelSpec spec;
  spec.blocks = {{4, 3, 1, 2}, {8, 3, 1, 2}};
  spec.input_size = 12;
  spec.in_channels = 2;
  spec.head_hidden_width = 8;
  spec.num_classes = 3;
  spec.dropout_rate = 0.25;
  return spec;
}

double model_loss(const ModelSpec& spec, const Params<double>& params, const Tensor<double>& x,
                  const Tensor<double>& targets, std::uint64_t dropout_seed) {
  Tape<double> tape;
  Rng dropout_rng(dropout_seed);
  ForwardOptions opt;
  opt.training = true;
  opt.dropout_rng = &dropout_rng;
  auto vars = build_forward(tape, spec, params, x, opt);
  return tape.value(tape.cross_entropy(vars.probs, targets))[0];
}

}  // namespace

TEST(Tape, SumGradientIsAllOnes) {
  Rng rng(1);
  Tape<float> tape;
  auto x = tape.leaf(random_tensor<float>({3, 4}, rng), true);
  tape.backward(tape.sum(x));
  Tensor<float> g = tape.grad(x);
  for (std::int64_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], 1.0f);
}

TEST(Tape, ZeroScaledLossHasZeroGradients) {
  Rng rng(2);
  Tape<float> tape;
  auto x = tape.leaf(random_tensor<float>({2, 3, 6, 6}, rng, 0.0, 1.0), true);
  auto k = tape.leaf(random_tensor<float>({2, 3, 3, 3}, rng), true);
  auto b = tape.leaf(Tensor<float>({2}), true);
  auto y = tape.relu(tape.conv2d(x, k, b, {1, 1, 1, 1}));
  auto loss = tape.scale(tape.sum(y), 0.0f);
  tape.backward(loss);
  for (auto v : {x, k, b}) {
    Tensor<float> g = tape.grad(v);
    for (std::int64_t i = 0; i < g.size(); ++i) EXPECT_EQ(g[i], 0.0f);
  }
}

TEST(Tape, BackwardRequiresScalar) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>({2, 2}), true);
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Tape, PickSelectsAndScatters) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>({2, 3}, {1, 2, 3, 4, 5, 6}), true);
  auto p = tape.pick(x, 1, 2);
  EXPECT_EQ(tape.value(p)[0], 6.0f);
  tape.backward(p);
  Tensor<float> g = tape.grad(x);
  EXPECT_EQ(g.at2(1, 2), 1.0f);
  EXPECT_EQ(g.at2(0, 0), 0.0f);
  EXPECT_THROW(tape.pick(x, 2, 0), ShapeError);
}

TEST(Tape, ReplayIsBitIdentical) {
  const ModelSpec spec = small_spec();
  auto run = [&spec]() {
    auto params = init_params<float>(spec, 17);
    Rng xr(derive_seed(17, "x"));
    Tensor<float> x = random_tensor<float>({2, 2, 12, 12}, xr, 0.0, 1.0);
    Tape<float> tape;
    Rng dropout_rng(derive_seed(17, "drop"));
    ForwardOptions opt;
    opt.training = true;
    opt.dropout_rng = &dropout_rng;
    opt.input_requires_grad = true;
    auto vars = build_forward(tape, spec, params, x, opt);
    tape.backward(tape.cross_entropy(vars.probs, one_hot<float>({0, 2}, 3)));
    std::vector<Tensor<float>> grads;
    for (auto v : vars.params) grads.push_back(tape.grad(v));
    grads.push_back(tape.grad(vars.input));
    grads.push_back(tape.value(vars.probs));
    return grads;
  };
  auto a = run();
  auto b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(a[i] == b[i]) << "tensor " << i;
}

// Full-model gradient check in 64-bit mode: every parameter and the input
// against central finite differences, dropout active with a fixed stream.
TEST(Tape, FullModelGradientCheck) {
  const ModelSpec spec = small_spec();
  for (std::uint64_t seed : {11ull, 23ull}) {
    auto params = init_params<double>(spec, seed);
    Rng xr(derive_seed(seed, "x"));
    Tensor<double> x = random_tensor<double>({2, 2, 12, 12}, xr, 0.05, 0.95);
    Tensor<double> targets = one_hot<double>({static_cast<int>(seed % 3), 1}, 3);
    const std::uint64_t dropout_seed = derive_seed(seed, "drop");

    Tape<double> tape;
    Rng dropout_rng(dropout_seed);
    ForwardOptions opt;
    opt.training = true;
    opt.dropout_rng = &dropout_rng;
    opt.input_requires_grad = true;
    auto vars = build_forward(tape, spec, params, x, opt);
    tape.backward(tape.cross_entropy(vars.probs, targets));

    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      Tensor<double> analytic = tape.grad(vars.params[p]);
      for (std::int64_t i = 0; i < analytic.size(); ++i) {
        Params<double> plus = params;
        plus.tensor(p)[i] += h;
        Params<double> minus = params;
        minus.tensor(p)[i] -= h;
        const double numeric = (model_loss(spec, plus, x, targets, dropout_seed) -
                                model_loss(spec, minus, x, targets, dropout_seed)) /
                               (2.0 * h);
        worst = std::max(worst, relative_error(analytic[i], numeric));
      }
    }
    Tensor<double> gx = tape.grad(vars.input);
    for (std::int64_t i = 0; i < x.size(); i += 7) {
      Tensor<double> plus = x;
      plus[i] += h;
      Tensor<double> minus = x;
      minus[i] -= h;
      const double numeric = (model_loss(spec, params, plus, targets, dropout_seed) -
                              model_loss(spec, params, minus, targets, dropout_seed)) /
                             (2.0 * h);
      worst = std::max(worst, relative_error(gx[i], numeric));
    }
    EXPECT_LT(worst, 1e-4) << "seed " << seed;
  }
}

TEST(Tape, DropoutModes) {
  Rng rng(3);
  Tensor<float> value = random_tensor<float>({4, 8}, rng);
  Tape<float> tape;
  auto x = tape.leaf(value, true);

  // Inference mode and rate 0 are the identity (same tape node).
  Rng d1(1);
  EXPECT_EQ(tape.dropout(x, 0.5, d1, false).id, x.id);
  EXPECT_EQ(tape.dropout(x, 0.0, d1, true).id, x.id);
  EXPECT_THROW(tape.dropout(x, 1.0, d1, true), ConfigError);

  // Training mode: zeroed or scaled by 1/(1-rate).
  Rng d2(2);
  auto dropped = tape.dropout(x, 0.5, d2, true);
  const Tensor<float>& out = tape.value(dropped);
  for (std::int64_t i = 0; i < out.size(); ++i) {
    EXPECT_TRUE(out[i] == 0.0f || out[i] == 2.0f * value[i]);
  }
}

TEST(Tape, NonFiniteForwardThrows) {
  Tape<float> tape;
  auto x = tape.leaf(Tensor<float>({1, 2}, {1e30f, 1e30f}), true);
  auto w = tape.leaf(Tensor<float>({2, 2}, {1e30f, 1e30f, 1e30f, 1e30f}), true);
  auto b = tape.leaf(Tensor<float>({2}), true);
  EXPECT_THROW(tape.dense(x, w, b), NumericError);
}
