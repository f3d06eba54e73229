#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "shrimpxnet/rng.hpp"
#include "shrimpxnet/tensor.hpp"

namespace sxn {

// MixUp/CutMix policy for one training run. Alphas of 0 disable the
// technique; when both are enabled a fair coin picks one per batch.
struct AugmentPolicy {
  double mixup_alpha = 0.0;
  double cutmix_alpha = 0.0;
  double apply_probability = 1.0;
  std::uint64_t seed = 0;

  bool enabled() const {
    return (mixup_alpha > 0.0 || cutmix_alpha > 0.0) && apply_probability > 0.0;
  }
};

enum class AugTechnique { none, mixup, cutmix };

inline const char* technique_name(AugTechnique t) {
  switch (t) {
    case AugTechnique::none: return "none";
    case AugTechnique::mixup: return "mixup";
    case AugTechnique::cutmix: return "cutmix";
  }
  return "none";
}

struct AugmentRecord {
  AugTechnique technique = AugTechnique::none;
  double lambda = 1.0;  // realized mixing weight of the original sample
};

// lambda ~ Beta(alpha, alpha) via two Gamma(alpha, 1) draws.
inline double sample_beta(double alpha, Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("beta sampling requires alpha > 0");
  return rng.beta(alpha, alpha);
}

// Pairing permutation: a uniform shuffle re-drawn until it has no fixed
// point, so every sample mixes with a different one; n == 1 degenerates
// to the identity.
inline std::vector<std::int64_t> pair_permutation(std::int64_t n, Rng& rng) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  if (n < 2) return perm;
  for (int attempt = 0; attempt < 64; ++attempt) {
    rng.shuffle(perm);
    bool has_fixed_point = false;
    for (std::int64_t i = 0; i < n; ++i) {
      if (perm[static_cast<std::size_t>(i)] == i) {
        has_fixed_point = true;
        break;
      }
    }
    if (!has_fixed_point) return perm;
  }
  // Statistically unreachable; rotate as a guaranteed derangement.
  for (std::int64_t i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = (i + 1) % n;
  return perm;
}

inline void validate_pairing(const std::vector<std::int64_t>& perm, std::int64_t n) {
  if (static_cast<std::int64_t>(perm.size()) != n) {
    throw ShapeError("pairing permutation length does not match the batch");
  }
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(n), 0);
  bool identity = true;
  bool derangement = true;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t j = perm[static_cast<std::size_t>(i)];
    if (j < 0 || j >= n || seen[static_cast<std::size_t>(j)]) {
      throw ConfigError("pairing is not a permutation of the batch indices");
    }
    seen[static_cast<std::size_t>(j)] = 1;
    if (j != i) identity = false;
    if (j == i) derangement = false;
  }
  if (!identity && !derangement) {
    throw ConfigError("pairing permutation must be a derangement or the identity");
  }
}

template <typename T>
struct MixedBatch {
  Tensor<T> images;
  Tensor<T> labels;
};

// x_new = lambda*x_i + (1-lambda)*x_j, same for the label rows.
template <typename T>
inline MixedBatch<T> mixup(const Tensor<T>& x, const Tensor<T>& y_onehot, T lambda,
                           const std::vector<std::int64_t>& perm) {
  if (lambda < T(0) || lambda > T(1)) throw ConfigError("mixup lambda must be in [0,1]");
  if (x.dim(0) != y_onehot.dim(0)) {
    throw ShapeError("mixup batch mismatch: images " + shape_str(x.shape()) + " vs labels " +
                     shape_str(y_onehot.shape()));
  }
  const std::int64_t n = x.dim(0);
  validate_pairing(perm, n);
  MixedBatch<T> out;
  out.images = Tensor<T>(x.shape());
  out.labels = Tensor<T>(y_onehot.shape());
  const std::int64_t x_stride = x.size() / n;
  const std::int64_t y_stride = y_onehot.size() / n;
  const T keep = lambda, other = T(1) - lambda;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t j = perm[static_cast<std::size_t>(i)];
    const T* xi = x.data() + i * x_stride;
    const T* xj = x.data() + j * x_stride;
    T* xo = out.images.data() + i * x_stride;
    for (std::int64_t p = 0; p < x_stride; ++p) xo[p] = keep * xi[p] + other * xj[p];
    const T* yi = y_onehot.data() + i * y_stride;
    const T* yj = y_onehot.data() + j * y_stride;
    T* yo = out.labels.data() + i * y_stride;
    for (std::int64_t p = 0; p < y_stride; ++p) yo[p] = keep * yi[p] + other * yj[p];
  }
  return out;
}

// Patch rectangle in pixel coordinates, half-open.
struct CutmixBox {
  std::int64_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;

  std::int64_t area() const { return (y1 - y0) * (x1 - x0); }
};

template <typename T>
struct CutmixOutput {
  Tensor<T> images;
  Tensor<T> labels;
  Tensor<T> mask;         // [H,W], 1 outside the patch
  double label_weight = 1.0;  // realized mean(mask)
  CutmixBox box;
};

// Pastes the partner's patch into each image; the label weight for the
// original sample is the realized kept-area fraction mean(M), recomputed
// from the clipped box.
template <typename T>
inline CutmixOutput<T> cutmix_with_box(const Tensor<T>& x, const Tensor<T>& y_onehot,
                                       const CutmixBox& box,
                                       const std::vector<std::int64_t>& perm) {
  if (x.rank() != 4) throw ShapeError("cutmix expects images [N,C,H,W], got " + shape_str(x.shape()));
  if (x.dim(0) != y_onehot.dim(0)) {
    throw ShapeError("cutmix batch mismatch: images " + shape_str(x.shape()) + " vs labels " +
                     shape_str(y_onehot.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  validate_pairing(perm, n);
  if (box.y0 < 0 || box.x0 < 0 || box.y1 > h || box.x1 > w || box.y0 > box.y1 ||
      box.x0 > box.x1) {
    throw ShapeError("cutmix box out of image bounds");
  }

  CutmixOutput<T> out;
  out.box = box;
  out.images = x;
  out.labels = Tensor<T>(y_onehot.shape());
  out.mask = Tensor<T>::full({h, w}, T(1));
  for (std::int64_t y = box.y0; y < box.y1; ++y) {
    for (std::int64_t p = box.x0; p < box.x1; ++p) out.mask.at2(y, p) = T(0);
  }
  const double kept = static_cast<double>(h * w - box.area()) / static_cast<double>(h * w);
  out.label_weight = kept;

  const std::int64_t plane = h * w;
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t j = perm[static_cast<std::size_t>(i)];
    for (std::int64_t ch = 0; ch < c; ++ch) {
      T* dst = out.images.data() + (i * c + ch) * plane;
      const T* src = x.data() + (j * c + ch) * plane;
      for (std::int64_t y = box.y0; y < box.y1; ++y) {
        for (std::int64_t p = box.x0; p < box.x1; ++p) dst[y * w + p] = src[y * w + p];
      }
    }
  }
  const std::int64_t k = y_onehot.dim(1);
  const T wi = static_cast<T>(kept), wj = static_cast<T>(1.0 - kept);
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t j = perm[static_cast<std::size_t>(i)];
    for (std::int64_t cls = 0; cls < k; ++cls) {
      out.labels.at2(i, cls) = wi * y_onehot.at2(i, cls) + wj * y_onehot.at2(j, cls);
    }
  }
  return out;
}

// Draws lambda ~ Beta(alpha, alpha), sizes the patch (H*sqrt(1-lambda),
// W*sqrt(1-lambda)) rounded to integers, centers it uniformly at random
// and clips to the image.
template <typename T>
inline CutmixOutput<T> cutmix(const Tensor<T>& x, const Tensor<T>& y_onehot, double alpha,
                              Rng& rng) {
  if (!(alpha > 0.0)) throw ConfigError("cutmix requires alpha > 0");
  if (x.rank() != 4) throw ShapeError("cutmix expects images [N,C,H,W], got " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const double lambda = sample_beta(alpha, rng);
  const double cut = std::sqrt(1.0 - lambda);
  const std::int64_t ph = static_cast<std::int64_t>(std::llround(static_cast<double>(h) * cut));
  const std::int64_t pw = static_cast<std::int64_t>(std::llround(static_cast<double>(w) * cut));
  const std::int64_t cy = rng.uniform_int(h);
  const std::int64_t cx = rng.uniform_int(w);
  CutmixBox box;
  box.y0 = std::max<std::int64_t>(0, cy - ph / 2);
  box.y1 = std::min<std::int64_t>(h, cy - ph / 2 + ph);
  box.x0 = std::max<std::int64_t>(0, cx - pw / 2);
  box.x1 = std::min<std::int64_t>(w, cx - pw / 2 + pw);
  std::vector<std::int64_t> perm = pair_permutation(n, rng);
  return cutmix_with_box(x, y_onehot, box, perm);
}

template <typename T>
struct AugmentedBatch {
  Tensor<T> images;
  Tensor<T> labels;
  AugmentRecord record;
};

// Applies the policy to one batch. Draw order is fixed: apply gate,
// technique coin (when both techniques are enabled), then the technique's
// own draws; a disabled or gated-out policy passes the batch through
// untouched.
template <typename T>
inline AugmentedBatch<T> apply_policy(const AugmentPolicy& policy, const Tensor<T>& x,
                                      const Tensor<T>& y_onehot, Rng& rng) {
  AugmentedBatch<T> out;
  const bool mix = policy.mixup_alpha > 0.0;
  const bool cut = policy.cutmix_alpha > 0.0;
  const double gate = rng.uniform();
  if ((!mix && !cut) || gate >= policy.apply_probability) {
    out.images = x;
    out.labels = y_onehot;
    out.record = {AugTechnique::none, 1.0};
    return out;
  }
  AugTechnique technique;
  if (mix && cut) {
    technique = rng.uniform() < 0.5 ? AugTechnique::mixup : AugTechnique::cutmix;
  } else {
    technique = mix ? AugTechnique::mixup : AugTechnique::cutmix;
  }
  if (technique == AugTechnique::mixup) {
    const double lambda = sample_beta(policy.mixup_alpha, rng);
    std::vector<std::int64_t> perm = pair_permutation(x.dim(0), rng);
    MixedBatch<T> mixed = mixup(x, y_onehot, static_cast<T>(lambda), perm);
    out.images = std::move(mixed.images);
    out.labels = std::move(mixed.labels);
    out.record = {AugTechnique::mixup, lambda};
  } else {
    CutmixOutput<T> cm = cutmix(x, y_onehot, policy.cutmix_alpha, rng);
    out.images = std::move(cm.images);
    out.labels = std::move(cm.labels);
    out.record = {AugTechnique::cutmix, cm.label_weight};
  }
  return out;
}

}  // namespace sxn
