#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/explain.hpp"
#include "cam_reference.hpp"
#include "test_util.hpp"

using namespace sxn;
namespace fs = std::filesystem;
using testutil::cam_reference;
using testutil::random_tensor;

namespace {

ModelSpec cam_spec() {
  ModelSpec spec;
  spec.blocks = {{4, 3, 1, 2}, {6, 3, 1, 2}};
  spec.input_size = 16;
  spec.in_channels = 3;
  spec.head_hidden_width = 8;
  spec.num_classes = 3;
  spec.dropout_rate = 0.2;
  return spec;
}

void check_heatmap_invariants(const Heatmap& h) {
  float peak = 0.0f;
  for (std::int64_t i = 0; i < h.values.size(); ++i) {
    ASSERT_GE(h.values[i], 0.0f);
    ASSERT_LE(h.values[i], 1.0f);
    peak = std::max(peak, h.values[i]);
  }
  ASSERT_TRUE(peak == 1.0f || peak == 0.0f);
}

}  // namespace

TEST(CamCombine, ZeroGradientsGiveZeroMap) {
  Rng rng(60);
  Tensor<float> a = random_tensor<float>({3, 4, 4}, rng, 0.0, 1.0);
  Tensor<float> g({3, 4, 4});
  for (CamMethod m : {CamMethod::grad_cam, CamMethod::grad_cam_pp, CamMethod::xgrad_cam}) {
    Heatmap heat = cam_combine(a, g, m);
    for (std::int64_t i = 0; i < heat.values.size(); ++i) ASSERT_EQ(heat.values[i], 0.0f);
    EXPECT_EQ(heat.feature_shape, (Shape{3, 4, 4}));
  }
}

TEST(CamCombine, SingleChannelConstantGradientIsNormalizedRelu) {
  Rng rng(61);
  Tensor<float> a = random_tensor<float>({1, 5, 5}, rng, -0.5, 1.0);
  Tensor<float> g = Tensor<float>::full({1, 5, 5}, 0.7f);
  Heatmap heat = cam_combine(a, g, CamMethod::grad_cam);
  float peak = 0.0f;
  for (std::int64_t i = 0; i < a.size(); ++i) peak = std::max(peak, a[i]);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const float expect = std::max(0.0f, a[i]) / peak;
    ASSERT_NEAR(heat.values[i], expect, 1e-6);
  }
}

// 2-channel 2x2 case worked by hand: channel means are 0.5 and 0, so the
// map is ReLU(0.5 * A0) max-normalized.
TEST(CamCombine, HandComputedTwoChannel) {
  Tensor<float> a({2, 2, 2}, {1.0f, 2.0f, 0.0f, 1.0f, 0.0f, 1.0f, 2.0f, 0.0f});
  Tensor<float> g({2, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f, -1.0f, 1.0f, 1.0f, -1.0f});
  Heatmap heat = cam_combine(a, g, CamMethod::grad_cam);
  EXPECT_NEAR(heat.values.at2(0, 0), 0.5f, 1e-6);
  EXPECT_NEAR(heat.values.at2(0, 1), 1.0f, 1e-6);
  EXPECT_NEAR(heat.values.at2(1, 0), 0.0f, 1e-6);
  EXPECT_NEAR(heat.values.at2(1, 1), 0.5f, 1e-6);
}

TEST(CamCombine, GradCamPpUniformGradientReducesToGradCam) {
  Rng rng(62);
  Tensor<float> a = random_tensor<float>({1, 4, 4}, rng, 0.0, 1.0);  // post-ReLU: nonnegative
  Tensor<float> g = Tensor<float>::full({1, 4, 4}, 0.3f);
  Heatmap pp = cam_combine(a, g, CamMethod::grad_cam_pp);
  Heatmap plain = cam_combine(a, g, CamMethod::grad_cam);
  for (std::int64_t i = 0; i < pp.values.size(); ++i) {
    ASSERT_NEAR(pp.values[i], plain.values[i], 1e-6);
  }
}

TEST(CamCombine, XGradCamConstantGradientMatchesGradCam) {
  Rng rng(63);
  Tensor<float> a = random_tensor<float>({3, 4, 4}, rng, 0.0, 1.0);
  Tensor<float> g({3, 4, 4});
  for (std::int64_t c = 0; c < 3; ++c) {
    const float gc = 0.2f + 0.3f * static_cast<float>(c);
    for (std::int64_t i = 0; i < 16; ++i) g[c * 16 + i] = gc;
  }
  // Per-channel constant gradients: xgrad weight = g * sum(A)/(sum(A)+eps)
  // which tends to the grad-cam weight g; normalized maps agree.
  Heatmap xg = cam_combine(a, g, CamMethod::xgrad_cam);
  Heatmap plain = cam_combine(a, g, CamMethod::grad_cam);
  for (std::int64_t i = 0; i < xg.values.size(); ++i) {
    ASSERT_NEAR(xg.values[i], plain.values[i], 1e-5);
  }
}

TEST(CamCombine, MatchesScalarReferenceOnRandomFixtures) {
  Rng rng(64);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor<float> a = random_tensor<float>({4, 3, 3}, rng, 0.0, 1.0);
    Tensor<float> g = random_tensor<float>({4, 3, 3}, rng, -1.0, 1.0);
    for (CamMethod m : {CamMethod::grad_cam, CamMethod::grad_cam_pp, CamMethod::xgrad_cam}) {
      Heatmap heat = cam_combine(a, g, m);
      Tensor<float> ref = cam_reference(a, g, m);
      for (std::int64_t i = 0; i < heat.values.size(); ++i) {
        ASSERT_NEAR(heat.values[i], ref[i], 1e-6) << cam_method_name(m) << " trial " << trial;
      }
      check_heatmap_invariants(heat);
    }
  }
}

TEST(CamCombine, DegenerateDenominatorPixelsDrop) {
  // Gradient zero at some pixels: those alphas are dropped, not NaN.
  Tensor<float> a({1, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f});
  Tensor<float> g({1, 2, 2}, {0.0f, 0.4f, 0.0f, -0.4f});
  Heatmap heat = cam_combine(a, g, CamMethod::grad_cam_pp);
  for (std::int64_t i = 0; i < heat.values.size(); ++i) {
    ASSERT_TRUE(std::isfinite(heat.values[i]));
  }
}

TEST(GradCam, ZeroLogitColumnGivesZeroMap) {
  const ModelSpec spec = cam_spec();
  auto params = init_params<float>(spec, 70);
  // Kill class 1's logit: constant score => zero gradients everywhere.
  Tensor<float>& w2 = params.at("head.fc2.weight");
  for (std::int64_t i = 0; i < w2.dim(0); ++i) w2.at2(i, 1) = 0.0f;
  Rng rng(71);
  Tensor<float> x = random_tensor<float>({3, 16, 16}, rng, 0.0, 1.0);
  for (CamMethod m : {CamMethod::grad_cam, CamMethod::grad_cam_pp, CamMethod::xgrad_cam}) {
    auto [a, g] = cam_activations_and_grads(spec, params, x, 1);
    Heatmap heat = cam_combine(a, g, m, 1);
    for (std::int64_t i = 0; i < heat.values.size(); ++i) ASSERT_EQ(heat.values[i], 0.0f);
  }
}

TEST(GradCam, FeatureShapeAndDropoutOff) {
  const ModelSpec spec = cam_spec();
  auto params = init_params<float>(spec, 72);
  Rng rng(73);
  Tensor<float> x = random_tensor<float>({3, 16, 16}, rng, 0.0, 1.0);
  Heatmap heat = grad_cam(spec, params, x, 0);
  // Last block's pre-pool activation resolution: 16 -> pool -> 8.
  EXPECT_EQ(heat.feature_shape, (Shape{6, 8, 8}));
  EXPECT_EQ(heat.values.shape(), (Shape{8, 8}));
  EXPECT_EQ(heat.method, "gradcam");
  check_heatmap_invariants(heat);

  // Dropout is off: repeated calls agree bit for bit.
  Heatmap again = grad_cam(spec, params, x, 0);
  EXPECT_TRUE(heat.values == again.values);

  EXPECT_THROW(grad_cam(spec, params, x, 5), ConfigError);
}

// Scaling the class logit by a positive constant leaves the normalized
// Grad-CAM and XGrad-CAM maps unchanged.
TEST(GradCam, PositiveLogitScaleInvariance) {
  const ModelSpec spec = cam_spec();
  auto params = init_params<float>(spec, 74);
  Rng rng(75);
  Tensor<float> x = random_tensor<float>({3, 16, 16}, rng, 0.0, 1.0);

  auto scaled_params = params;
  Tensor<float>& w2 = scaled_params.at("head.fc2.weight");
  Tensor<float>& b2 = scaled_params.at("head.fc2.bias");
  const float scale = 3.7f;
  for (std::int64_t i = 0; i < w2.dim(0); ++i) w2.at2(i, 2) *= scale;
  b2[2] *= scale;

  for (CamMethod m : {CamMethod::grad_cam, CamMethod::xgrad_cam}) {
    auto [a0, g0] = cam_activations_and_grads(spec, params, x, 2);
    auto [a1, g1] = cam_activations_and_grads(spec, scaled_params, x, 2);
    Heatmap base = cam_combine(a0, g0, m, 2);
    Heatmap scaled = cam_combine(a1, g1, m, 2);
    for (std::int64_t i = 0; i < base.values.size(); ++i) {
      ASSERT_NEAR(base.values[i], scaled.values[i], 1e-5) << cam_method_name(m);
    }
  }
}

TEST(Overlay, ZeroHeatmapBlendsWithColormapFloor) {
  Heatmap heat;
  heat.values = Tensor<float>({4, 4});
  heat.method = "gradcam";
  Tensor<float> original = Tensor<float>::full({3, 8, 8}, 0.5f);
  Tensor<float> out = overlay_image(heat, original, 0.4);
  ASSERT_EQ(out.shape(), (Shape{3, 8, 8}));
  // 0.6*0.5 + 0.4*(0,0,1)
  for (std::int64_t i = 0; i < 64; ++i) {
    EXPECT_NEAR(out[i], 0.3f, 1e-6);             // R
    EXPECT_NEAR(out[64 + i], 0.3f, 1e-6);        // G
    EXPECT_NEAR(out[128 + i], 0.3f + 0.4f, 1e-6);  // B
  }
}

TEST(Overlay, HottestPixelMatchesUpsampledArgmax) {
  // One dominant cell in a 4x4 map rendered at 20x20: with half-pixel
  // centers, 4 -> 20 maps every source center onto a destination pixel,
  // so the upsampled argmax is unique. A flat base image makes the
  // red-minus-blue channel difference monotone in heat.
  Heatmap heat;
  heat.values = Tensor<float>({4, 4});
  heat.values.at2(1, 2) = 1.0f;
  heat.values.at2(1, 3) = 0.8f;
  heat.method = "gradcam";
  Tensor<float> original = Tensor<float>::full({3, 20, 20}, 0.5f);

  const fs::path dir = testutil::temp_dir("overlay");
  const fs::path file = dir / "map.png";
  render_overlay(heat, original, file);
  ImageU8 png = read_image(file);
  ASSERT_EQ(png.width, 20);
  ASSERT_EQ(png.height, 20);

  Tensor<float> up = resize_bilinear(Tensor<float>({1, 4, 4}, heat.values.vec()), 20, 20);
  std::int64_t want = 0;
  for (std::int64_t i = 0; i < up.size(); ++i) {
    if (up[i] > up[want]) want = i;
  }
  EXPECT_EQ(want, 7 * 20 + 12);  // source cell (1,2) lands exactly here

  std::int64_t got = 0;
  int best = -1000;
  for (std::int64_t i = 0; i < 20 * 20; ++i) {
    const int r = png.pixels[static_cast<std::size_t>(i * 3)];
    const int b = png.pixels[static_cast<std::size_t>(i * 3 + 2)];
    if (r - b > best) {
      best = r - b;
      got = i;
    }
  }
  EXPECT_EQ(got, want);
  fs::remove_all(dir);
}

TEST(HeatmapText, DumpFormat) {
  Heatmap heat;
  heat.values = Tensor<float>({2, 2}, {0.0f, 0.25f, 0.5f, 1.0f});
  const std::string text = heatmap_to_text(heat);
  EXPECT_EQ(text, "0 0.25\n0.5 1\n");
}
