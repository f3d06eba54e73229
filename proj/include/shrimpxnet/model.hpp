#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "shrimpxnet/rng.hpp"
#include "shrimpxnet/tape.hpp"
#include "shrimpxnet/tensor.hpp"

namespace sxn {

struct ConvBlock {
  std::int64_t filters = 16;
  std::int64_t kernel = 3;
  std::int64_t stride = 1;
  std::int64_t pool = 2;
};

// Backbone of conv blocks (conv -> ReLU -> max pool, same padding) feeding
// the classifier head: GAP -> dense+ReLU -> dropout -> dense -> softmax.
struct ModelSpec {
  std::vector<ConvBlock> blocks = {{16}, {32}, {64}, {128}};
  std::int64_t head_hidden_width = 128;
  double dropout_rate = 0.3;
  std::int64_t num_classes = 4;
  std::int64_t input_size = 128;
  std::int64_t in_channels = 3;

  // Spatial extent after each block; validates that no block collapses
  // below 1x1.
  std::vector<std::int64_t> block_extents() const {
    std::vector<std::int64_t> extents;
    std::int64_t s = input_size;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const ConvBlock& b = blocks[i];
      if (b.filters < 1 || b.kernel < 1 || b.stride < 1 || b.pool < 1) {
        throw ConfigError("block " + std::to_string(i) + " has non-positive geometry");
      }
      if (b.kernel % 2 == 0) {
        throw ConfigError("block " + std::to_string(i) + " kernel must be odd for same padding");
      }
      const std::int64_t pad = b.kernel / 2;
      const std::int64_t span = s + 2 * pad - b.kernel;
      if (span < 0 || span % b.stride != 0) {
        throw ConfigError("block " + std::to_string(i) + " conv does not fit a " +
                          std::to_string(s) + "px input");
      }
      s = span / b.stride + 1;
      s = s / b.pool;
      if (s < 1) {
        throw ConfigError("block " + std::to_string(i) + " output collapses below 1x1 for input size " +
                          std::to_string(input_size));
      }
      extents.push_back(s);
    }
    return extents;
  }

  void validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (blocks.empty()) throw ConfigError("backbone needs at least one block");
    if (head_hidden_width < 1) throw ConfigError("head_hidden_width must be >= 1");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must be in [0,1)");
    if (input_size < 1 || in_channels < 1) throw ConfigError("input geometry must be positive");
    block_extents();
  }

  bool operator==(const ModelSpec& other) const {
    if (blocks.size() != other.blocks.size()) return false;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const ConvBlock &a = blocks[i], &b = other.blocks[i];
      if (a.filters != b.filters || a.kernel != b.kernel || a.stride != b.stride ||
          a.pool != b.pool) {
        return false;
      }
    }
    return head_hidden_width == other.head_hidden_width &&
           dropout_rate == other.dropout_rate && num_classes == other.num_classes &&
           input_size == other.input_size && in_channels == other.in_channels;
  }
};

// Ordered named tensors. Insertion order is the canonical parameter order
// used by the optimizer and the checkpoint writer.
template <typename T>
class Params {
 public:
  void add(std::string name, Tensor<T> tensor) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    index_[name] = names_.size();
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(tensor));
  }

  std::size_t size() const { return tensors_.size(); }
  bool empty() const { return tensors_.empty(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Tensor<T>& tensor(std::size_t i) { return tensors_.at(i); }
  const Tensor<T>& tensor(std::size_t i) const { return tensors_.at(i); }

  bool has(const std::string& name) const { return index_.count(name) > 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return tensors_[it->second];
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return tensors_[it->second];
  }

  template <typename U>
  Params<U> cast() const {
    Params<U> out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].template cast<U>());
    return out;
  }

  bool operator==(const Params& other) const {
    return names_ == other.names_ && tensors_ == other.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline std::string block_param_name(std::size_t block, const char* leaf) {
  return "block" + std::to_string(block) + ".conv." + leaf;
}

// He-uniform weights (bound sqrt(6/fan_in)), zero biases.
template <typename T>
inline Params<T> init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Params<T> params;
  Rng rng(derive_seed(seed, "init"));
  auto he_uniform = [&rng](Shape shape, std::int64_t fan_in) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    return t;
  };

  std::int64_t channels = spec.in_channels;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const ConvBlock& b = spec.blocks[i];
    const std::int64_t fan_in = channels * b.kernel * b.kernel;
    params.add(block_param_name(i, "weight"),
               he_uniform({b.filters, channels, b.kernel, b.kernel}, fan_in));
    params.add(block_param_name(i, "bias"), Tensor<T>({b.filters}));
    channels = b.filters;
  }
  params.add("head.fc1.weight", he_uniform({channels, spec.head_hidden_width}, channels));
  params.add("head.fc1.bias", Tensor<T>({spec.head_hidden_width}));
  params.add("head.fc2.weight",
             he_uniform({spec.head_hidden_width, spec.num_classes}, spec.head_hidden_width));
  params.add("head.fc2.bias", Tensor<T>({spec.num_classes}));
  return params;
}

// Trainable mask in parameter order. The first freeze_depth backbone
// blocks are frozen; the head always trains.
inline std::vector<std::uint8_t> trainable_mask(const ModelSpec& spec,
                                                std::int64_t freeze_depth) {
  const std::int64_t n_blocks = static_cast<std::int64_t>(spec.blocks.size());
  if (freeze_depth < 0 || freeze_depth > n_blocks) {
    throw ConfigError("freeze_depth must be in [0," + std::to_string(n_blocks) +
                      "], got " + std::to_string(freeze_depth));
  }
  std::vector<std::uint8_t> mask;
  for (std::int64_t i = 0; i < n_blocks; ++i) {
    const std::uint8_t trainable = i >= freeze_depth ? 1 : 0;
    mask.push_back(trainable);  // weight
    mask.push_back(trainable);  // bias
  }
  mask.insert(mask.end(), 4, 1);  // head.fc1.{weight,bias}, head.fc2.{weight,bias}
  return mask;
}

struct ForwardOptions {
  bool training = false;
  Rng* dropout_rng = nullptr;  // required when training and dropout_rate > 0
  bool input_requires_grad = false;
  bool params_require_grad = true;
};

template <typename T>
struct ModelVars {
  std::vector<typename Tape<T>::Var> params;  // aligned with Params order
  typename Tape<T>::Var input;
  typename Tape<T>::Var features;  // last block's post-ReLU maps [N,F,h,w]
  typename Tape<T>::Var logits;
  typename Tape<T>::Var probs;
};

// Builds one forward pass on the tape. The graph is
//   x -> (conv -> relu -> pool)* -> GAP -> fc1 -> relu -> dropout -> fc2 -> softmax
// and `features` exposes the last block's activations for the CAM methods.
template <typename T>
inline ModelVars<T> build_forward(Tape<T>& tape, const ModelSpec& spec,
                                  const Params<T>& params, const Tensor<T>& x,
                                  const ForwardOptions& opt) {
  if (x.rank() != 4 || x.dim(1) != spec.in_channels || x.dim(2) != spec.input_size ||
      x.dim(3) != spec.input_size) {
    throw ShapeError("model input must be [N," + std::to_string(spec.in_channels) + "," +
                     std::to_string(spec.input_size) + "," + std::to_string(spec.input_size) +
                     "], got " + shape_str(x.shape()));
  }
  if (opt.training && spec.dropout_rate > 0.0 && opt.dropout_rng == nullptr) {
    throw ConfigError("training forward requires a dropout rng");
  }

  ModelVars<T> vars;
  vars.params.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    vars.params.push_back(tape.leaf(params.tensor(i), opt.params_require_grad));
  }
  vars.input = tape.leaf(x, opt.input_requires_grad);

  typename Tape<T>::Var h = vars.input;
  for (std::size_t i = 0; i < spec.blocks.size(); ++i) {
    const ConvBlock& b = spec.blocks[i];
    Conv2dSpec conv{b.stride, b.stride, b.kernel / 2, b.kernel / 2};
    h = tape.conv2d(h, vars.params[2 * i], vars.params[2 * i + 1], conv);
    h = tape.relu(h);
    if (i + 1 == spec.blocks.size()) vars.features = h;
    if (b.pool > 1) h = tape.maxpool(h, b.pool);
  }

  const std::size_t head = 2 * spec.blocks.size();
  h = tape.global_avg_pool(h);
  h = tape.dense(h, vars.params[head], vars.params[head + 1]);
  h = tape.relu(h);
  Rng idle_rng(0);
  h = tape.dropout(h, spec.dropout_rate, opt.dropout_rng ? *opt.dropout_rng : idle_rng,
                   opt.training);
  vars.logits = tape.dense(h, vars.params[head + 2], vars.params[head + 3]);
  vars.probs = tape.softmax(vars.logits);
  return vars;
}

// Inference-mode class probabilities.
template <typename T>
inline Tensor<T> predict(const ModelSpec& spec, const Params<T>& params, const Tensor<T>& x) {
  Tape<T> tape;
  ForwardOptions opt;
  opt.params_require_grad = false;
  auto vars = build_forward(tape, spec, params, x, opt);
  return tape.value(vars.probs);
}

inline std::vector<int> argmax_rows(const Tensor<float>& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.dim(0)));
  for (std::int64_t i = 0; i < probs.dim(0); ++i) {
    int best = 0;
    for (std::int64_t j = 1; j < probs.dim(1); ++j) {
      if (probs.at2(i, j) > probs.at2(i, best)) best = static_cast<int>(j);
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

}  // namespace sxn
