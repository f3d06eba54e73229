#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "shrimpxnet/model.hpp"
#include "shrimpxnet/optimizer.hpp"

namespace sxn {

inline constexpr char kCheckpointMagic[4] = {'S', 'X', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Training state container. `params` holds the best-validation-loss
// weights (what inference uses); `resume_params` plus the Adam moments
// hold the end-of-run state so a resumed run continues step-for-step as
// if it had never stopped.
struct Checkpoint {
  ModelSpec spec;
  Params<float> params;
  Params<float> resume_params;
  AdamState<float> opt;
  std::int64_t freeze_depth = 0;
  std::int64_t epochs_completed = 0;
  std::uint64_t base_seed = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::int64_t best_epoch = -1;
  std::int64_t epochs_since_improve = 0;
  std::vector<std::string> class_names;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32_data(std::string& out, const Tensor<float>& t) {
  static_assert(sizeof(float) == 4);
  if constexpr (std::endian::native == std::endian::little) {
    const char* raw = reinterpret_cast<const char*>(t.data());
    out.append(raw, raw + t.size() * 4);
  } else {
    for (std::int64_t i = 0; i < t.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, &t.vec()[static_cast<std::size_t>(i)], 4);
      put_u32(out, bits);
    }
  }
}

class ByteReader {
 public:
  ByteReader(const std::string& bytes, const std::string& what)
      : bytes_(bytes), what_(what) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  Tensor<float> f32_tensor(const Shape& shape) {
    const std::size_t n = static_cast<std::size_t>(shape_numel(shape));
    need(n * 4);
    std::vector<float> data(n);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(data.data(), bytes_.data() + pos_, n * 4);
      pos_ += n * 4;
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = u32();
        std::memcpy(&data[i], &bits, 4);
      }
    }
    return Tensor<float>(shape, std::move(data));
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError("truncated checkpoint file: " + what_);
  }

  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline void append_tensor_record(std::string& out, const std::string& name,
                                 const Tensor<float>& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  out.push_back(0);  // dtype tag: 0 = f32
  put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
  for (std::int64_t d : t.shape()) put_u64(out, static_cast<std::uint64_t>(d));
  put_u64(out, static_cast<std::uint64_t>(t.size()) * 4);
  put_f32_data(out, t);
}

}  // namespace detail

inline nlohmann::ordered_json spec_to_json(const ModelSpec& spec) {
  nlohmann::ordered_json j;
  j["blocks"] = nlohmann::ordered_json::array();
  for (const ConvBlock& b : spec.blocks) {
    j["blocks"].push_back({b.filters, b.kernel, b.stride, b.pool});
  }
  j["head_hidden_width"] = spec.head_hidden_width;
  j["dropout_rate"] = spec.dropout_rate;
  j["num_classes"] = spec.num_classes;
  j["input_size"] = spec.input_size;
  j["in_channels"] = spec.in_channels;
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  ModelSpec spec;
  spec.blocks.clear();
  for (const auto& b : j.at("blocks")) {
    spec.blocks.push_back({b.at(0).get<std::int64_t>(), b.at(1).get<std::int64_t>(),
                           b.at(2).get<std::int64_t>(), b.at(3).get<std::int64_t>()});
  }
  spec.head_hidden_width = j.at("head_hidden_width").get<std::int64_t>();
  spec.dropout_rate = j.at("dropout_rate").get<double>();
  spec.num_classes = j.at("num_classes").get<std::int64_t>();
  spec.input_size = j.at("input_size").get<std::int64_t>();
  spec.in_channels = j.at("in_channels").get<std::int64_t>();
  return spec;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out;
  out.append(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);

  const std::uint32_t tensor_count =
      static_cast<std::uint32_t>(ckpt.params.size() + ckpt.resume_params.size() +
                                 ckpt.opt.m.size() + ckpt.opt.v.size());
  detail::put_u32(out, tensor_count);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    detail::append_tensor_record(out, "param." + ckpt.params.name(i), ckpt.params.tensor(i));
  }
  for (std::size_t i = 0; i < ckpt.resume_params.size(); ++i) {
    detail::append_tensor_record(out, "resume." + ckpt.resume_params.name(i),
                                 ckpt.resume_params.tensor(i));
  }
  for (std::size_t i = 0; i < ckpt.opt.m.size(); ++i) {
    detail::append_tensor_record(out, "adam.m." + ckpt.resume_params.name(i), ckpt.opt.m[i]);
    detail::append_tensor_record(out, "adam.v." + ckpt.resume_params.name(i), ckpt.opt.v[i]);
  }

  nlohmann::ordered_json meta;
  meta["spec"] = spec_to_json(ckpt.spec);
  meta["freeze_depth"] = ckpt.freeze_depth;
  {
    auto mask = trainable_mask(ckpt.spec, ckpt.freeze_depth);
    meta["trainable"] = std::vector<int>(mask.begin(), mask.end());
  }
  meta["epochs_completed"] = ckpt.epochs_completed;
  meta["base_seed"] = std::to_string(ckpt.base_seed);
  meta["adam_t"] = ckpt.opt.t;
  std::uint64_t loss_bits;
  std::memcpy(&loss_bits, &ckpt.best_val_loss, 8);
  meta["best_val_loss_bits"] = std::to_string(loss_bits);
  meta["best_epoch"] = ckpt.best_epoch;
  meta["epochs_since_improve"] = ckpt.epochs_since_improve;
  meta["class_names"] = ckpt.class_names;
  const std::string meta_str = meta.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(meta_str.size()));
  out.append(meta_str);

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open checkpoint for writing: " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed to write checkpoint: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
  detail::ByteReader reader(bytes, path.string());

  const std::string magic = reader.str(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw IoError("not a checkpoint file (bad magic): " + path.string());
  }
  const std::uint32_t version = reader.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint format version " + std::to_string(version) +
                  " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }

  const std::uint32_t tensor_count = reader.u32();
  std::unordered_map<std::string, Tensor<float>> tensors;
  for (std::uint32_t i = 0; i < tensor_count; ++i) {
    const std::uint32_t name_len = reader.u32();
    const std::string name = reader.str(name_len);
    const std::string dtype = reader.str(1);
    if (dtype[0] != 0) throw IoError("unsupported tensor dtype in checkpoint: " + name);
    const std::uint32_t ndim = reader.u32();
    Shape shape;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      shape.push_back(static_cast<std::int64_t>(reader.u64()));
    }
    const std::uint64_t byte_len = reader.u64();
    if (byte_len != static_cast<std::uint64_t>(shape_numel(shape)) * 4) {
      throw IoError("tensor byte length mismatch in checkpoint: " + name);
    }
    tensors.emplace(name, reader.f32_tensor(shape));
  }

  const std::uint32_t meta_len = reader.u32();
  const std::string meta_str = reader.str(meta_len);
  if (!reader.done()) throw IoError("trailing bytes after checkpoint metadata: " + path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint metadata: " + std::string(e.what()));
  }

  Checkpoint ckpt;
  try {
    ckpt.spec = spec_from_json(meta.at("spec"));
    ckpt.freeze_depth = meta.at("freeze_depth").get<std::int64_t>();
    ckpt.epochs_completed = meta.at("epochs_completed").get<std::int64_t>();
    ckpt.base_seed = std::stoull(meta.at("base_seed").get<std::string>());
    ckpt.opt.t = meta.at("adam_t").get<std::int64_t>();
    const std::uint64_t loss_bits = std::stoull(meta.at("best_val_loss_bits").get<std::string>());
    std::memcpy(&ckpt.best_val_loss, &loss_bits, 8);
    ckpt.best_epoch = meta.at("best_epoch").get<std::int64_t>();
    ckpt.epochs_since_improve = meta.at("epochs_since_improve").get<std::int64_t>();
    ckpt.class_names = meta.at("class_names").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint metadata missing fields: " + std::string(e.what()));
  }
  ckpt.spec.validate();

  // Rebuild parameter order from the spec and pull each named tensor.
  Params<float> reference = init_params<float>(ckpt.spec, 0);
  auto take = [&tensors, &path](const std::string& name, const Shape& expected) {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
      throw IoError("checkpoint " + path.string() + " is missing tensor " + name);
    }
    if (it->second.shape() != expected) {
      throw IoError("checkpoint tensor " + name + " has shape " + shape_str(it->second.shape()) +
                    ", spec expects " + shape_str(expected));
    }
    return it->second;
  };
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const std::string& name = reference.name(i);
    const Shape& shape = reference.tensor(i).shape();
    ckpt.params.add(name, take("param." + name, shape));
    ckpt.resume_params.add(name, take("resume." + name, shape));
    ckpt.opt.m.push_back(take("adam.m." + name, shape));
    ckpt.opt.v.push_back(take("adam.v." + name, shape));
  }
  return ckpt;
}

}  // namespace sxn
