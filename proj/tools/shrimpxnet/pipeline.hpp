#pragma once

// Shared plumbing for the shrimpxnet subcommands: prepared-directory
// loading, artifact writing and input hashing.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "shrimpxnet/checkpoint.hpp"
#include "shrimpxnet/config.hpp"
#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/manifest.hpp"
#include "shrimpxnet/trainer.hpp"

namespace sxn::cli {

namespace fs = std::filesystem;

struct PreparedData {
  DatasetSplit split;
  PreprocessSettings preprocess;
  fs::path data_root;
  std::uint64_t seed = 0;
};

inline std::vector<std::string> read_class_file(const fs::path& path) {
  std::vector<std::string> classes;
  std::istringstream stream(read_text_file(path));
  std::string line;
  while (std::getline(stream, line)) {
    if (!line.empty()) classes.push_back(line);
  }
  if (classes.empty()) throw DataError("class list is empty: " + path.string());
  return classes;
}

// Reloads the images referenced by a prepare output directory, reapplies
// the recorded preprocessing and reassembles the split from the manifest.
inline PreparedData load_prepared(const fs::path& prep_dir) {
  const fs::path classes_file = prep_dir / "classes.txt";
  const fs::path manifest_file = prep_dir / "split.tsv";
  const fs::path pp_file = prep_dir / "preprocess.json";
  for (const fs::path* p : {&classes_file, &manifest_file, &pp_file}) {
    if (!fs::exists(*p)) {
      throw DataError("prepared dataset directory " + prep_dir.string() +
                      " is missing " + p->filename().string() + "; run `shrimpxnet prepare` first");
    }
  }

  PreparedData out;
  nlohmann::json pp_json;
  try {
    pp_json = nlohmann::json::parse(read_text_file(pp_file));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt preprocess.json: " + std::string(e.what()));
  }
  out.preprocess = preprocess_from_json(pp_json);
  out.data_root = fs::path(pp_json.at("data_root").get<std::string>());
  out.seed = std::stoull(pp_json.at("seed").get<std::string>());

  std::vector<std::string> classes = read_class_file(classes_file);
  LoadedDataset loaded = load_dataset(out.data_root, out.preprocess.height, out.preprocess.width);
  if (loaded.class_names != classes) {
    throw DataError("dataset at " + out.data_root.string() +
                    " no longer matches the prepared class list");
  }
  for (Sample& s : loaded.samples) {
    try {
      s.image = remove_background(s.image, out.preprocess.bg_mode, out.preprocess.bg_threshold);
    } catch (const Error& e) {
      throw DataError(std::string(e.what()) + " (sample " + s.source_id + ")");
    }
  }
  out.split = apply_split_manifest(std::move(loaded.samples), std::move(classes),
                                   read_text_file(manifest_file), out.seed);
  return out;
}

inline const std::vector<Sample>& pick_split(const DatasetSplit& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "validation") return split.validation;
  if (name == "test") return split.test;
  throw ConfigError("unknown split '" + name + "' (expected train, validation or test)");
}

// Combined content hash over every image file under a dataset root.
inline std::string hash_dataset_tree(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string combined;
  for (const fs::path& p : files) {
    combined += fs::relative(p, root).generic_string();
    combined += ':';
    combined += hash_file(p);
    combined += '\n';
  }
  return fnv1a64_hex(combined);
}

inline std::string sanitize_id(const std::string& source_id) {
  std::string out = source_id;
  for (char& c : out) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    if (!ok) c = '_';
  }
  return out;
}

// Validates a checkpoint against a prepared dataset.
inline void check_compatibility(const Checkpoint& ckpt, const PreparedData& prepared) {
  if (ckpt.class_names != prepared.split.class_names) {
    std::string expected;
    for (const auto& c : ckpt.class_names) expected += (expected.empty() ? "" : ", ") + c;
    throw ConfigError("checkpoint/dataset mismatch: checkpoint was trained on classes [" +
                      expected + "]");
  }
  if (prepared.preprocess.height != prepared.preprocess.width ||
      prepared.preprocess.height != ckpt.spec.input_size) {
    throw ConfigError("checkpoint expects " + std::to_string(ckpt.spec.input_size) + "x" +
                      std::to_string(ckpt.spec.input_size) + " inputs; prepared data is " +
                      std::to_string(prepared.preprocess.height) + "x" +
                      std::to_string(prepared.preprocess.width));
  }
}

// Per-sample probability rows for a sample list.
inline std::vector<std::vector<double>> predict_rows(const ModelSpec& spec,
                                                     const Params<float>& params,
                                                     const std::vector<Sample>& samples,
                                                     std::size_t batch_size = 64) {
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size());
  for (std::size_t at = 0; at < samples.size(); at += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = at; i < std::min(samples.size(), at + batch_size); ++i) idx.push_back(i);
    Batch batch = gather_batch(samples, idx);
    Tensor<float> probs = predict(spec, params, batch.images);
    for (std::int64_t r = 0; r < probs.dim(0); ++r) {
      std::vector<double> row(static_cast<std::size_t>(probs.dim(1)));
      for (std::int64_t c = 0; c < probs.dim(1); ++c) row[static_cast<std::size_t>(c)] = probs.at2(r, c);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::string sweep_table_text(const std::vector<SweepRow>& rows) {
  std::string out = "epsilon\taccuracy\tloss\n";
  char buf[80];
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.6f\t%.6f\t%.6f\n", r.epsilon, r.accuracy, r.loss);
    out += buf;
  }
  return out;
}

}  // namespace sxn::cli
