#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "shrimpxnet/image.hpp"
#include "shrimpxnet/model.hpp"
#include "shrimpxnet/tape.hpp"

namespace sxn {

enum class CamMethod { grad_cam, grad_cam_pp, xgrad_cam };

inline const char* cam_method_name(CamMethod m) {
  switch (m) {
    case CamMethod::grad_cam: return "gradcam";
    case CamMethod::grad_cam_pp: return "gradcampp";
    case CamMethod::xgrad_cam: return "xgradcam";
  }
  return "gradcam";
}

inline CamMethod cam_method_from_name(const std::string& name) {
  if (name == "gradcam") return CamMethod::grad_cam;
  if (name == "gradcampp") return CamMethod::grad_cam_pp;
  if (name == "xgradcam") return CamMethod::xgrad_cam;
  throw ConfigError("unknown CAM method '" + name + "' (expected gradcam, gradcampp or xgradcam)");
}

// Class-activation map over the model's last conv block. Nonnegative,
// max-normalized to [0,1] unless identically zero.
struct Heatmap {
  Tensor<float> values;  // [h,w]
  int target_class = 0;
  std::string method;
  Shape feature_shape;  // [K,h,w] of the source activations
};

// Activations A^k of the last block and the gradients dy_c/dA^k of the
// pre-softmax class logit, both [K,h,w]. Dropout is off, so the result is
// a pure function of (params, x, class).
inline std::pair<Tensor<float>, Tensor<float>> cam_activations_and_grads(
    const ModelSpec& spec, const Params<float>& params, const Tensor<float>& x, int class_c) {
  if (class_c < 0 || class_c >= spec.num_classes) {
    throw ConfigError("class index " + std::to_string(class_c) + " out of range for " +
                      std::to_string(spec.num_classes) + " classes");
  }
  Tensor<float> batched = x;
  if (x.rank() == 3) {
    batched = Tensor<float>({1, x.dim(0), x.dim(1), x.dim(2)}, x.vec());
  }
  if (batched.rank() != 4 || batched.dim(0) != 1) {
    throw ShapeError("cam expects a single image [C,H,W] or [1,C,H,W], got " +
                     shape_str(x.shape()));
  }
  Tape<float> tape;
  ForwardOptions opt;
  opt.training = false;
  opt.params_require_grad = false;
  opt.input_requires_grad = true;  // keeps the feature node on the gradient path
  auto vars = build_forward(tape, spec, params, batched, opt);
  auto score = tape.pick(vars.logits, 0, class_c);
  tape.backward(score);

  const Tensor<float>& av = tape.value(vars.features);
  Tensor<float> grads = tape.grad(vars.features);
  const Shape khw{av.dim(1), av.dim(2), av.dim(3)};
  return {Tensor<float>(khw, av.vec()), Tensor<float>(khw, grads.vec())};
}

namespace detail {

inline Heatmap finish_heatmap(std::vector<double> map, std::int64_t h, std::int64_t w,
                              const Shape& feature_shape, int class_c, CamMethod method) {
  double peak = 0.0;
  for (double& v : map) {
    if (v < 0.0) v = 0.0;  // ReLU on the weighted sum
    if (v > peak) peak = v;
  }
  Tensor<float> values({h, w});
  for (std::int64_t i = 0; i < values.size(); ++i) {
    values[i] = peak > 0.0 ? static_cast<float>(map[static_cast<std::size_t>(i)] / peak) : 0.0f;
  }
  Heatmap out;
  out.values = std::move(values);
  out.target_class = class_c;
  out.method = cam_method_name(method);
  out.feature_shape = feature_shape;
  return out;
}

}  // namespace detail

// Combines activations and gradients into a heatmap:
//   grad_cam    - channel weight = spatial mean gradient
//   grad_cam_pp - pixel weights a_ij = g^2 / (2 g^2 + sum(A) g^3) (closed
//                 form for an exponential score), channel weight =
//                 sum_ij a_ij * relu(g_ij); degenerate denominators drop
//                 the pixel
//   xgrad_cam   - channel weight = sum_ij A_ij / (sum(A) + 1e-12) * g_ij
// followed by ReLU over the weighted channel sum and max normalization.
inline Heatmap cam_combine(const Tensor<float>& activations, const Tensor<float>& grads,
                           CamMethod method, int class_c = 0) {
  if (activations.rank() != 3 || !activations.same_shape(grads)) {
    throw ShapeError("cam_combine expects matching [K,h,w] activations and gradients");
  }
  const std::int64_t k = activations.dim(0), h = activations.dim(1), w = activations.dim(2);
  const std::int64_t plane = h * w;
  std::vector<double> weights(static_cast<std::size_t>(k), 0.0);
  for (std::int64_t c = 0; c < k; ++c) {
    const float* a = activations.data() + c * plane;
    const float* g = grads.data() + c * plane;
    double weight = 0.0;
    switch (method) {
      case CamMethod::grad_cam: {
        for (std::int64_t i = 0; i < plane; ++i) weight += static_cast<double>(g[i]);
        weight /= static_cast<double>(plane);
        break;
      }
      case CamMethod::grad_cam_pp: {
        double a_sum = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) a_sum += static_cast<double>(a[i]);
        for (std::int64_t i = 0; i < plane; ++i) {
          const double gi = static_cast<double>(g[i]);
          const double denom = 2.0 * gi * gi + a_sum * gi * gi * gi;
          if (std::abs(denom) < 1e-12) continue;
          const double alpha = gi * gi / denom;
          weight += alpha * (gi > 0.0 ? gi : 0.0);
        }
        break;
      }
      case CamMethod::xgrad_cam: {
        double a_sum = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) a_sum += static_cast<double>(a[i]);
        for (std::int64_t i = 0; i < plane; ++i) {
          weight += static_cast<double>(a[i]) / (a_sum + 1e-12) * static_cast<double>(g[i]);
        }
        break;
      }
    }
    weights[static_cast<std::size_t>(c)] = weight;
  }

  std::vector<double> map(static_cast<std::size_t>(plane), 0.0);
  for (std::int64_t c = 0; c < k; ++c) {
    const float* a = activations.data() + c * plane;
    const double weight = weights[static_cast<std::size_t>(c)];
    for (std::int64_t i = 0; i < plane; ++i) {
      map[static_cast<std::size_t>(i)] += weight * static_cast<double>(a[i]);
    }
  }
  return detail::finish_heatmap(std::move(map), h, w, activations.shape(), class_c, method);
}

inline Heatmap grad_cam(const ModelSpec& spec, const Params<float>& params,
                        const Tensor<float>& x, int class_c) {
  auto [a, g] = cam_activations_and_grads(spec, params, x, class_c);
  return cam_combine(a, g, CamMethod::grad_cam, class_c);
}

inline Heatmap grad_cam_pp(const ModelSpec& spec, const Params<float>& params,
                           const Tensor<float>& x, int class_c) {
  auto [a, g] = cam_activations_and_grads(spec, params, x, class_c);
  return cam_combine(a, g, CamMethod::grad_cam_pp, class_c);
}

inline Heatmap xgrad_cam(const ModelSpec& spec, const Params<float>& params,
                         const Tensor<float>& x, int class_c) {
  auto [a, g] = cam_activations_and_grads(spec, params, x, class_c);
  return cam_combine(a, g, CamMethod::xgrad_cam, class_c);
}

// Fixed blue-to-red colormap: t=0 pure blue, t=1 pure red.
inline void colormap_blue_red(float t, float& r, float& g, float& b) {
  t = t < 0.0f ? 0.0f : (t > 1.0f ? 1.0f : t);
  r = t;
  g = 0.0f;
  b = 1.0f - t;
}

// Upsamples the heatmap to the image resolution, maps it through the
// blue-to-red colormap and alpha-blends it over the original:
//   out = (1 - blend) * original + blend * colormap(heat)
inline Tensor<float> overlay_image(const Heatmap& heatmap, const Tensor<float>& original,
                                   double blend = 0.4) {
  if (original.rank() != 3 || original.dim(0) != 3) {
    throw ShapeError("overlay expects an RGB original [3,H,W], got " + shape_str(original.shape()));
  }
  const std::int64_t h = original.dim(1), w = original.dim(2);
  Tensor<float> up3({1, heatmap.values.dim(0), heatmap.values.dim(1)}, heatmap.values.vec());
  Tensor<float> up = resize_bilinear(up3, h, w);
  Tensor<float> out({3, h, w});
  const std::int64_t plane = h * w;
  const float wb = static_cast<float>(blend);
  const float wo = 1.0f - wb;
  for (std::int64_t i = 0; i < plane; ++i) {
    float r, g, b;
    colormap_blue_red(up[i], r, g, b);
    out[i] = wo * original[i] + wb * r;
    out[plane + i] = wo * original[plane + i] + wb * g;
    out[2 * plane + i] = wo * original[2 * plane + i] + wb * b;
  }
  return out;
}

inline void render_overlay(const Heatmap& heatmap, const Tensor<float>& original,
                           const std::filesystem::path& path, double blend = 0.4) {
  write_png(path, tensor_to_image(overlay_image(heatmap, original, blend)));
}

// Text matrix dump, one row per line.
inline std::string heatmap_to_text(const Heatmap& heatmap) {
  std::string out;
  char buf[48];
  for (std::int64_t y = 0; y < heatmap.values.dim(0); ++y) {
    for (std::int64_t x = 0; x < heatmap.values.dim(1); ++x) {
      std::snprintf(buf, sizeof(buf), x ? " %.9g" : "%.9g",
                    static_cast<double>(heatmap.values.at2(y, x)));
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace sxn
