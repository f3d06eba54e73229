#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "shrimpxnet/parallel.hpp"
#include "shrimpxnet/rng.hpp"
#include "shrimpxnet/tensor.hpp"

// Forward/backward numeric kernels. Every kernel accumulates in a fixed
// order regardless of the worker count: parallel loops only ever split
// across disjoint output elements, never across a reduction.

namespace sxn {

inline constexpr double kLogClamp = 1e-12;

struct Conv2dSpec {
  std::int64_t stride_h = 1;
  std::int64_t stride_w = 1;
  std::int64_t pad_h = 0;
  std::int64_t pad_w = 0;
};

namespace detail {

// C[MxN] += A[MxK] * B[KxN], row-major. The k loop is sequential per output
// row, so each C element sees additions in ascending-k order.
template <typename T>
inline void gemm_accumulate(T* c, const T* a, const T* b, std::int64_t m,
                            std::int64_t k, std::int64_t n, bool parallel_rows) {
  auto body = [=](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      T* crow = c + i * n;
      const T* arow = a + i * k;
      for (std::int64_t kk = 0; kk < k; ++kk) {
        const T av = arow[kk];
        const T* brow = b + kk * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (parallel_rows) {
    parallel_for(m, body);
  } else {
    body(0, m);
  }
}

template <typename T>
inline void transpose(const T* src, std::int64_t rows, std::int64_t cols, T* dst) {
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
  }
}

// One image [C,H,W] -> patch matrix [C*kh*kw, OH*OW]; padding reads as 0.
template <typename T>
inline void im2col(const T* x, std::int64_t ch, std::int64_t h, std::int64_t w,
                   std::int64_t kh, std::int64_t kw, const Conv2dSpec& sp,
                   std::int64_t oh, std::int64_t ow, T* cols) {
  const std::int64_t plane = oh * ow;
  for (std::int64_t c = 0; c < ch; ++c) {
    for (std::int64_t ki = 0; ki < kh; ++ki) {
      for (std::int64_t kj = 0; kj < kw; ++kj) {
        T* dst = cols + ((c * kh + ki) * kw + kj) * plane;
        for (std::int64_t r = 0; r < oh; ++r) {
          const std::int64_t ih = r * sp.stride_h + ki - sp.pad_h;
          T* drow = dst + r * ow;
          if (ih < 0 || ih >= h) {
            std::fill(drow, drow + ow, T(0));
            continue;
          }
          const T* srow = x + (c * h + ih) * w;
          for (std::int64_t q = 0; q < ow; ++q) {
            const std::int64_t iw = q * sp.stride_w + kj - sp.pad_w;
            drow[q] = (iw >= 0 && iw < w) ? srow[iw] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-add of a patch-matrix gradient back into one image.
template <typename T>
inline void col2im_add(const T* gcols, std::int64_t ch, std::int64_t h, std::int64_t w,
                       std::int64_t kh, std::int64_t kw, const Conv2dSpec& sp,
                       std::int64_t oh, std::int64_t ow, T* gx) {
  const std::int64_t plane = oh * ow;
  for (std::int64_t c = 0; c < ch; ++c) {
    for (std::int64_t ki = 0; ki < kh; ++ki) {
      for (std::int64_t kj = 0; kj < kw; ++kj) {
        const T* src = gcols + ((c * kh + ki) * kw + kj) * plane;
        for (std::int64_t r = 0; r < oh; ++r) {
          const std::int64_t ih = r * sp.stride_h + ki - sp.pad_h;
          if (ih < 0 || ih >= h) continue;
          T* drow = gx + (c * h + ih) * w;
          const T* srow = src + r * ow;
          for (std::int64_t q = 0; q < ow; ++q) {
            const std::int64_t iw = q * sp.stride_w + kj - sp.pad_w;
            if (iw >= 0 && iw < w) drow[iw] += srow[q];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline std::pair<std::int64_t, std::int64_t> conv2d_out_hw(
    std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
    const Conv2dSpec& sp) {
  const std::int64_t nh = h + 2 * sp.pad_h - kh;
  const std::int64_t nw = w + 2 * sp.pad_w - kw;
  if (nh < 0 || nw < 0 || nh % sp.stride_h != 0 || nw % sp.stride_w != 0) {
    throw ShapeError("conv2d geometry invalid: input " + std::to_string(h) + "x" +
                     std::to_string(w) + ", kernel " + std::to_string(kh) + "x" +
                     std::to_string(kw) + ", stride " + std::to_string(sp.stride_h) +
                     "x" + std::to_string(sp.stride_w) + ", pad " +
                     std::to_string(sp.pad_h) + "x" + std::to_string(sp.pad_w) +
                     " does not yield integral output extents");
  }
  return {nh / sp.stride_h + 1, nw / sp.stride_w + 1};
}

// Cross-correlation of x[N,C,H,W] with kernel[F,C,kh,kw] plus bias[F].
template <typename T>
inline Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& kernel,
                                const Tensor<T>& bias, const Conv2dSpec& sp) {
  if (x.rank() != 4 || kernel.rank() != 4) {
    throw ShapeError("conv2d expects x[N,C,H,W] and kernel[F,C,kh,kw], got x " +
                     shape_str(x.shape()) + ", kernel " + shape_str(kernel.shape()));
  }
  if (x.dim(1) != kernel.dim(1)) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(x.dim(1)) +
                     " channels, kernel expects " + std::to_string(kernel.dim(1)));
  }
  const std::int64_t f = kernel.dim(0);
  if (bias.rank() != 1 || bias.dim(0) != f) {
    throw ShapeError("conv2d bias must be [F=" + std::to_string(f) + "], got " +
                     shape_str(bias.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t kh = kernel.dim(2), kw = kernel.dim(3);
  const auto [oh, ow] = conv2d_out_hw(h, w, kh, kw, sp);
  const std::int64_t ckk = c * kh * kw;
  const std::int64_t plane = oh * ow;

  Tensor<T> out({n, f, oh, ow});
  const bool by_sample = n > 1;
  auto body = [&](std::int64_t n0, std::int64_t n1) {
    std::vector<T> cols(static_cast<std::size_t>(ckk * plane));
    for (std::int64_t i = n0; i < n1; ++i) {
      detail::im2col(x.data() + i * c * h * w, c, h, w, kh, kw, sp, oh, ow, cols.data());
      T* dst = out.data() + i * f * plane;
      for (std::int64_t ff = 0; ff < f; ++ff) {
        std::fill(dst + ff * plane, dst + (ff + 1) * plane, bias[ff]);
      }
      detail::gemm_accumulate(dst, kernel.data(), cols.data(), f, ckk, plane, !by_sample);
    }
  };
  if (by_sample) {
    parallel_for(n, body);
  } else {
    body(0, n);
  }
  return out;
}

template <typename T>
struct Conv2dGrads {
  Tensor<T> dx;
  Tensor<T> dkernel;
  Tensor<T> dbias;
};

template <typename T>
inline Conv2dGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& kernel,
                                      const Tensor<T>& gout, const Conv2dSpec& sp,
                                      bool need_dx = true, bool need_dk = true) {
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  const std::int64_t ckk = c * kh * kw;
  const std::int64_t oh = gout.dim(2), ow = gout.dim(3);
  const std::int64_t plane = oh * ow;

  Conv2dGrads<T> grads;
  grads.dkernel = Tensor<T>(kernel.shape());
  grads.dbias = Tensor<T>({f});

  // dbias[f] = sum over (n, oh, ow) in ascending order.
  parallel_for(f, [&](std::int64_t f0, std::int64_t f1) {
    for (std::int64_t ff = f0; ff < f1; ++ff) {
      T acc(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* g = gout.data() + (i * f + ff) * plane;
        for (std::int64_t p = 0; p < plane; ++p) acc += g[p];
      }
      grads.dbias[ff] = acc;
    }
  });

  // dkernel: samples accumulated sequentially so the order is fixed;
  // the gemm splits across kernel rows (disjoint outputs).
  if (need_dk) {
    std::vector<T> cols(static_cast<std::size_t>(ckk * plane));
    std::vector<T> rows(static_cast<std::size_t>(ckk * plane));
    for (std::int64_t i = 0; i < n; ++i) {
      detail::im2col(x.data() + i * c * h * w, c, h, w, kh, kw, sp, oh, ow, cols.data());
      detail::transpose(cols.data(), ckk, plane, rows.data());
      detail::gemm_accumulate(grads.dkernel.data(), gout.data() + i * f * plane,
                              rows.data(), f, plane, ckk, true);
    }
  }

  if (need_dx) {
    grads.dx = Tensor<T>(x.shape());
    std::vector<T> kt(static_cast<std::size_t>(ckk * f));
    detail::transpose(kernel.data(), f, ckk, kt.data());
    auto body = [&](std::int64_t n0, std::int64_t n1) {
      std::vector<T> gcols(static_cast<std::size_t>(ckk * plane));
      for (std::int64_t i = n0; i < n1; ++i) {
        std::fill(gcols.begin(), gcols.end(), T(0));
        detail::gemm_accumulate(gcols.data(), kt.data(), gout.data() + i * f * plane,
                                ckk, f, plane, n == 1);
        detail::col2im_add(gcols.data(), c, h, w, kh, kw, sp, oh, ow,
                           grads.dx.data() + i * c * h * w);
      }
    };
    if (n > 1) {
      parallel_for(n, body);
    } else {
      body(0, 1);
    }
  }
  return grads;
}

// Non-overlapping pool x pool max pooling; trailing rows/cols that do not
// fill a window are dropped. Returns the argmax as flat input indices.
template <typename T>
inline std::pair<Tensor<T>, std::vector<std::int64_t>> maxpool_forward(
    const Tensor<T>& x, std::int64_t pool) {
  if (x.rank() != 4) throw ShapeError("maxpool expects [N,C,H,W], got " + shape_str(x.shape()));
  if (pool < 1) throw ShapeError("pool size must be >= 1");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t oh = h / pool, ow = w / pool;
  if (oh < 1 || ow < 1) {
    throw ShapeError("maxpool window " + std::to_string(pool) + " larger than input " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  Tensor<T> out({n, c, oh, ow});
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(out.size()));
  parallel_for(n * c, [&](std::int64_t p0, std::int64_t p1) {
    for (std::int64_t p = p0; p < p1; ++p) {
      const T* src = x.data() + p * h * w;
      T* dst = out.data() + p * oh * ow;
      std::int64_t* arg = argmax.data() + p * oh * ow;
      for (std::int64_t r = 0; r < oh; ++r) {
        for (std::int64_t q = 0; q < ow; ++q) {
          T best = src[(r * pool) * w + q * pool];
          std::int64_t best_idx = (r * pool) * w + q * pool;
          for (std::int64_t dy = 0; dy < pool; ++dy) {
            for (std::int64_t dx = 0; dx < pool; ++dx) {
              const std::int64_t idx = (r * pool + dy) * w + q * pool + dx;
              if (src[idx] > best) {
                best = src[idx];
                best_idx = idx;
              }
            }
          }
          dst[r * ow + q] = best;
          arg[r * ow + q] = p * h * w + best_idx;
        }
      }
    }
  });
  return {std::move(out), std::move(argmax)};
}

template <typename T>
inline Tensor<T> maxpool_backward(const Tensor<T>& gout,
                                  const std::vector<std::int64_t>& argmax,
                                  const Shape& x_shape) {
  Tensor<T> gx(x_shape);
  for (std::int64_t i = 0; i < gout.size(); ++i) {
    gx[argmax[static_cast<std::size_t>(i)]] += gout[i];
  }
  return gx;
}

// Per-channel spatial mean: [N,C,H,W] -> [N,C].
template <typename T>
inline Tensor<T> gap_forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor<T> out({n, c});
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T* src = x.data() + p * plane;
    T acc(0);
    for (std::int64_t i = 0; i < plane; ++i) acc += src[i];
    out[p] = acc / static_cast<T>(plane);
  }
  return out;
}

template <typename T>
inline Tensor<T> gap_backward(const Tensor<T>& gout, std::int64_t h, std::int64_t w) {
  const std::int64_t n = gout.dim(0), c = gout.dim(1);
  Tensor<T> gx({n, c, h, w});
  const T inv = T(1) / static_cast<T>(h * w);
  for (std::int64_t p = 0; p < n * c; ++p) {
    const T g = gout[p] * inv;
    T* dst = gx.data() + p * h * w;
    std::fill(dst, dst + h * w, g);
  }
  return gx;
}

// Affine map y = x*w + b with x[N,D], w[D,K], b[K].
template <typename T>
inline Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0)) {
    throw ShapeError("dense expects x[N,D] w[D,K] with matching D, got x " +
                     shape_str(x.shape()) + ", w " + shape_str(w.shape()));
  }
  const std::int64_t n = x.dim(0), d = x.dim(1), k = w.dim(1);
  if (b.rank() != 1 || b.dim(0) != k) {
    throw ShapeError("dense bias must be [K=" + std::to_string(k) + "], got " + shape_str(b.shape()));
  }
  Tensor<T> out({n, k});
  for (std::int64_t i = 0; i < n; ++i) {
    std::copy(b.data(), b.data() + k, out.data() + i * k);
  }
  detail::gemm_accumulate(out.data(), x.data(), w.data(), n, d, k, n >= 8);
  return out;
}

template <typename T>
struct DenseGrads {
  Tensor<T> dx;
  Tensor<T> dw;
  Tensor<T> db;
};

template <typename T>
inline DenseGrads<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w,
                                    const Tensor<T>& gout, bool need_dx = true,
                                    bool need_dw = true) {
  const std::int64_t n = x.dim(0), d = x.dim(1), k = w.dim(1);
  DenseGrads<T> grads;
  grads.db = Tensor<T>({k});
  for (std::int64_t j = 0; j < k; ++j) {
    T acc(0);
    for (std::int64_t i = 0; i < n; ++i) acc += gout.at2(i, j);
    grads.db[j] = acc;
  }
  if (need_dw) {
    grads.dw = Tensor<T>({d, k});
    std::vector<T> xt(static_cast<std::size_t>(d * n));
    detail::transpose(x.data(), n, d, xt.data());
    detail::gemm_accumulate(grads.dw.data(), xt.data(), gout.data(), d, n, k, d >= 8);
  }
  if (need_dx) {
    grads.dx = Tensor<T>({n, d});
    std::vector<T> wt(static_cast<std::size_t>(k * d));
    detail::transpose(w.data(), d, k, wt.data());
    detail::gemm_accumulate(grads.dx.data(), gout.data(), wt.data(), n, k, d, n >= 8);
  }
  return grads;
}

template <typename T>
inline Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

// Subgradient at 0 is 0.
template <typename T>
inline Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& gout) {
  Tensor<T> gx(x.shape());
  for (std::int64_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T(0) ? gout[i] : T(0);
  return gx;
}

// Row-wise softmax with max subtraction.
template <typename T>
inline Tensor<T> softmax_forward(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax expects [N,K], got " + shape_str(logits.shape()));
  if (logits.dim(1) < 2) throw ShapeError("softmax needs K >= 2 classes");
  const std::int64_t n = logits.dim(0), k = logits.dim(1);
  Tensor<T> out({n, k});
  for (std::int64_t i = 0; i < n; ++i) {
    const T* row = logits.data() + i * k;
    T m = row[0];
    for (std::int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    T sum(0);
    T* dst = out.data() + i * k;
    for (std::int64_t j = 0; j < k; ++j) {
      dst[j] = std::exp(row[j] - m);
      sum += dst[j];
    }
    for (std::int64_t j = 0; j < k; ++j) dst[j] /= sum;
  }
  return out;
}

template <typename T>
inline Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& gout) {
  const std::int64_t n = probs.dim(0), k = probs.dim(1);
  Tensor<T> gz({n, k});
  for (std::int64_t i = 0; i < n; ++i) {
    const T* p = probs.data() + i * k;
    const T* g = gout.data() + i * k;
    T dot(0);
    for (std::int64_t j = 0; j < k; ++j) dot += g[j] * p[j];
    T* dst = gz.data() + i * k;
    for (std::int64_t j = 0; j < k; ++j) dst[j] = p[j] * (g[j] - dot);
  }
  return gz;
}

template <typename T>
inline void check_soft_targets(const Tensor<T>& probs, const Tensor<T>& targets) {
  if (!probs.same_shape(targets)) {
    throw ShapeError("cross_entropy shape mismatch: probs " + shape_str(probs.shape()) +
                     " vs targets " + shape_str(targets.shape()));
  }
  const std::int64_t n = targets.dim(0), k = targets.dim(1);
  for (std::int64_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::int64_t j = 0; j < k; ++j) sum += static_cast<double>(targets.at2(i, j));
    if (std::abs(sum - 1.0) > 1e-3) {
      throw ConfigError("cross_entropy target row " + std::to_string(i) +
                        " sums to " + std::to_string(sum) + ", expected 1");
    }
  }
}

// Mean over the batch of -sum_k t_k * log(p_k); probabilities are clamped
// to [1e-12, 1] before the log.
template <typename T>
inline T cross_entropy_forward(const Tensor<T>& probs, const Tensor<T>& targets) {
  check_soft_targets(probs, targets);
  const std::int64_t n = probs.dim(0), k = probs.dim(1);
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const T* p = probs.data() + i * k;
    const T* t = targets.data() + i * k;
    for (std::int64_t j = 0; j < k; ++j) {
      if (t[j] != T(0)) {
        const double clamped = std::min(1.0, std::max(kLogClamp, static_cast<double>(p[j])));
        total -= static_cast<double>(t[j]) * std::log(clamped);
      }
    }
  }
  return static_cast<T>(total / static_cast<double>(n));
}

// Where the clamp is active the loss is locally constant, so the gradient
// there is 0; this keeps analytic and finite-difference gradients aligned.
template <typename T>
inline Tensor<T> cross_entropy_backward(const Tensor<T>& probs, const Tensor<T>& targets) {
  const std::int64_t n = probs.dim(0), k = probs.dim(1);
  Tensor<T> gp({n, k});
  const T invn = T(1) / static_cast<T>(n);
  for (std::int64_t i = 0; i < n * k; ++i) {
    if (targets[i] != T(0) && static_cast<double>(probs[i]) > kLogClamp) {
      gp[i] = -targets[i] / probs[i] * invn;
    }
  }
  return gp;
}

// Inverted-dropout mask: entries are 0 with probability rate, otherwise
// 1/(1-rate). Drawn row-major, one uniform per element.
template <typename T>
inline Tensor<T> dropout_mask(const Shape& shape, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  }
  Tensor<T> mask(shape);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::int64_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < rate ? T(0) : keep_scale;
  }
  return mask;
}

template <typename T>
inline Tensor<T> one_hot(const std::vector<int>& labels, std::int64_t k) {
  Tensor<T> out({static_cast<std::int64_t>(labels.size()), k});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw ShapeError("label " + std::to_string(labels[i]) + " out of range for " +
                       std::to_string(k) + " classes");
    }
    out.at2(static_cast<std::int64_t>(i), labels[i]) = T(1);
  }
  return out;
}

}  // namespace sxn
