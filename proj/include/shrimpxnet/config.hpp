#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/trainer.hpp"

namespace sxn {

// Resolved run configuration: model architecture plus training options.
// num_classes and in_channels always come from the dataset, not the file.
struct PipelineConfig {
  ModelSpec model;
  TrainConfig train;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

inline std::int64_t parse_i64(const std::string& value, const std::string& context) {
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(context + ": '" + value + "' is not an integer");
  }
}

inline std::uint64_t parse_u64(const std::string& value, const std::string& context) {
  try {
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(value, &used);
    if (used != value.size() || value.front() == '-') throw std::invalid_argument("bad");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(context + ": '" + value + "' is not a non-negative integer");
  }
}

inline double parse_f64(const std::string& value, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(context + ": '" + value + "' is not a number");
  }
}

}  // namespace detail

// Applies one key=value setting. Throws ConfigError naming the context
// (file:line or flag name) for unknown keys or malformed values.
inline void apply_config_override(PipelineConfig& cfg, const std::string& key,
                                  const std::string& value, const std::string& context) {
  using detail::parse_f64;
  using detail::parse_i64;
  using detail::parse_u64;
  if (key == "blocks") {
    std::vector<ConvBlock> blocks;
    std::istringstream stream(value);
    std::string part;
    while (std::getline(stream, part, ',')) {
      ConvBlock b;
      b.kernel = cfg.model.blocks.empty() ? 3 : cfg.model.blocks.front().kernel;
      b.filters = parse_i64(detail::trim(part), context);
      blocks.push_back(b);
    }
    if (blocks.empty()) throw ConfigError(context + ": blocks list is empty");
    cfg.model.blocks = std::move(blocks);
  } else if (key == "kernel_size") {
    const std::int64_t kernel = parse_i64(value, context);
    for (ConvBlock& b : cfg.model.blocks) b.kernel = kernel;
  } else if (key == "head_hidden_width") {
    cfg.model.head_hidden_width = parse_i64(value, context);
  } else if (key == "dropout_rate") {
    cfg.model.dropout_rate = parse_f64(value, context);
  } else if (key == "input_size") {
    cfg.model.input_size = parse_i64(value, context);
  } else if (key == "epochs") {
    cfg.train.epochs = parse_i64(value, context);
  } else if (key == "batch_size") {
    cfg.train.batch_size = parse_i64(value, context);
  } else if (key == "initial_lr") {
    cfg.train.initial_lr = parse_f64(value, context);
  } else if (key == "scheduler_step_size") {
    cfg.train.scheduler.step_size = parse_i64(value, context);
  } else if (key == "scheduler_gamma") {
    cfg.train.scheduler.gamma = parse_f64(value, context);
  } else if (key == "patience") {
    cfg.train.patience = parse_i64(value, context);
  } else if (key == "beta1") {
    cfg.train.adam.beta1 = parse_f64(value, context);
  } else if (key == "beta2") {
    cfg.train.adam.beta2 = parse_f64(value, context);
  } else if (key == "epsilon_adam") {
    cfg.train.adam.eps = parse_f64(value, context);
  } else if (key == "seed") {
    cfg.train.seed = parse_u64(value, context);
  } else if (key == "freeze_depth") {
    cfg.train.freeze_depth = parse_i64(value, context);
  } else if (key == "mixup_alpha") {
    cfg.train.augment.mixup_alpha = parse_f64(value, context);
  } else if (key == "cutmix_alpha") {
    cfg.train.augment.cutmix_alpha = parse_f64(value, context);
  } else if (key == "augment_probability") {
    cfg.train.augment.apply_probability = parse_f64(value, context);
  } else if (key == "augment_seed") {
    cfg.train.augment.seed = parse_u64(value, context);
  } else if (key == "fgsm_epsilon") {
    cfg.train.attack.epsilon = parse_f64(value, context);
  } else if (key == "adversarial_fraction") {
    cfg.train.attack.adversarial_fraction = parse_f64(value, context);
  } else {
    throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

// Flat key=value file, one key per line, '#' comments.
inline PipelineConfig parse_config_text(const std::string& text, const std::string& filename) {
  PipelineConfig cfg;
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const std::string context = filename + ":" + std::to_string(line_no);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(context + ": expected key=value, got '" + line + "'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(context + ": empty key");
    apply_config_override(cfg, key, value, context);
  }
  return cfg;
}

inline PipelineConfig parse_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config file does not exist: " + path.string());
  }
  return parse_config_text(read_text_file(path), path.filename().string());
}

// Canonical key order for echoing the resolved configuration into
// manifests and grid-search tables.
inline std::vector<std::pair<std::string, std::string>> config_to_kv(const PipelineConfig& cfg) {
  char buf[64];
  auto fmt = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return std::string(buf);
  };
  std::vector<std::pair<std::string, std::string>> kv;
  {
    std::string blocks;
    for (std::size_t i = 0; i < cfg.model.blocks.size(); ++i) {
      if (i) blocks += ",";
      blocks += std::to_string(cfg.model.blocks[i].filters);
    }
    kv.emplace_back("blocks", blocks);
  }
  kv.emplace_back("kernel_size",
                  std::to_string(cfg.model.blocks.empty() ? 3 : cfg.model.blocks.front().kernel));
  kv.emplace_back("head_hidden_width", std::to_string(cfg.model.head_hidden_width));
  kv.emplace_back("dropout_rate", fmt(cfg.model.dropout_rate));
  kv.emplace_back("input_size", std::to_string(cfg.model.input_size));
  kv.emplace_back("epochs", std::to_string(cfg.train.epochs));
  kv.emplace_back("batch_size", std::to_string(cfg.train.batch_size));
  kv.emplace_back("initial_lr", fmt(cfg.train.initial_lr));
  kv.emplace_back("scheduler_step_size", std::to_string(cfg.train.scheduler.step_size));
  kv.emplace_back("scheduler_gamma", fmt(cfg.train.scheduler.gamma));
  kv.emplace_back("patience", std::to_string(cfg.train.patience));
  kv.emplace_back("beta1", fmt(cfg.train.adam.beta1));
  kv.emplace_back("beta2", fmt(cfg.train.adam.beta2));
  kv.emplace_back("epsilon_adam", fmt(cfg.train.adam.eps));
  kv.emplace_back("seed", std::to_string(cfg.train.seed));
  kv.emplace_back("freeze_depth", std::to_string(cfg.train.freeze_depth));
  kv.emplace_back("mixup_alpha", fmt(cfg.train.augment.mixup_alpha));
  kv.emplace_back("cutmix_alpha", fmt(cfg.train.augment.cutmix_alpha));
  kv.emplace_back("augment_probability", fmt(cfg.train.augment.apply_probability));
  kv.emplace_back("augment_seed", std::to_string(cfg.train.augment.seed));
  kv.emplace_back("fgsm_epsilon", fmt(cfg.train.attack.epsilon));
  kv.emplace_back("adversarial_fraction", fmt(cfg.train.attack.adversarial_fraction));
  return kv;
}

}  // namespace sxn
