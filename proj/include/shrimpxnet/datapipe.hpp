#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shrimpxnet/image.hpp"
#include "shrimpxnet/kernels.hpp"
#include "shrimpxnet/parallel.hpp"
#include "shrimpxnet/rng.hpp"
#include "shrimpxnet/tensor.hpp"

namespace sxn {

struct Sample {
  Tensor<float> image;  // [C,H,W], values in [0,1]
  int label = 0;
  std::string source_id;
};

struct DatasetSplit {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
  std::vector<std::string> class_names;
  std::uint64_t split_seed = 0;
};

enum class BgMode { none, alpha, threshold };

inline const char* bg_mode_name(BgMode m) {
  switch (m) {
    case BgMode::none: return "none";
    case BgMode::alpha: return "alpha";
    case BgMode::threshold: return "threshold";
  }
  return "none";
}

inline BgMode bg_mode_from_name(const std::string& name) {
  if (name == "none") return BgMode::none;
  if (name == "alpha") return BgMode::alpha;
  if (name == "threshold") return BgMode::threshold;
  throw ConfigError("unknown background mode '" + name + "' (expected alpha, threshold or none)");
}

struct PreprocessSettings {
  std::int64_t height = 128;
  std::int64_t width = 128;
  BgMode bg_mode = BgMode::none;
  double bg_threshold = 0.92;
};

inline double pixel_luminance(float r, float g, float b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

// Background suppression on a [3|4,H,W] tensor in [0,1]:
//   alpha     - multiply RGB by the alpha plane (4-channel input required)
//   threshold - zero the border-connected region whose luminance exceeds
//               the cutoff (flood fill, 4-connectivity)
//   none      - identity on the RGB planes
// Always returns a 3-channel tensor.
inline Tensor<float> remove_background(const Tensor<float>& image, BgMode mode,
                                       double threshold = 0.92) {
  if (image.rank() != 3 || (image.dim(0) != 3 && image.dim(0) != 4)) {
    throw ShapeError("remove_background expects [3|4,H,W], got " + shape_str(image.shape()));
  }
  const std::int64_t h = image.dim(1), w = image.dim(2), plane = h * w;

  Tensor<float> rgb({3, h, w});
  std::copy(image.data(), image.data() + 3 * plane, rgb.data());

  switch (mode) {
    case BgMode::none:
      return rgb;
    case BgMode::alpha: {
      if (image.dim(0) != 4) {
        throw DataError("alpha background mode requires a 4-channel image, got 3 channels");
      }
      const float* a = image.data() + 3 * plane;
      for (std::int64_t c = 0; c < 3; ++c) {
        float* p = rgb.data() + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) p[i] *= a[i];
      }
      return rgb;
    }
    case BgMode::threshold: {
      std::vector<std::uint8_t> bright(static_cast<std::size_t>(plane));
      for (std::int64_t i = 0; i < plane; ++i) {
        bright[static_cast<std::size_t>(i)] =
            pixel_luminance(rgb[i], rgb[plane + i], rgb[2 * plane + i]) > threshold ? 1 : 0;
      }
      std::vector<std::uint8_t> visited(static_cast<std::size_t>(plane), 0);
      std::deque<std::int64_t> queue;
      auto push = [&](std::int64_t y, std::int64_t x) {
        const std::int64_t i = y * w + x;
        if (!visited[static_cast<std::size_t>(i)] && bright[static_cast<std::size_t>(i)]) {
          visited[static_cast<std::size_t>(i)] = 1;
          queue.push_back(i);
        }
      };
      for (std::int64_t x = 0; x < w; ++x) {
        push(0, x);
        push(h - 1, x);
      }
      for (std::int64_t y = 0; y < h; ++y) {
        push(y, 0);
        push(y, w - 1);
      }
      while (!queue.empty()) {
        const std::int64_t i = queue.front();
        queue.pop_front();
        const std::int64_t y = i / w, x = i % w;
        if (y > 0) push(y - 1, x);
        if (y + 1 < h) push(y + 1, x);
        if (x > 0) push(y, x - 1);
        if (x + 1 < w) push(y, x + 1);
      }
      for (std::int64_t i = 0; i < plane; ++i) {
        if (visited[static_cast<std::size_t>(i)]) {
          rgb[i] = 0.0f;
          rgb[plane + i] = 0.0f;
          rgb[2 * plane + i] = 0.0f;
        }
      }
      return rgb;
    }
  }
  return rgb;
}

namespace detail {

inline bool has_image_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace detail

struct LoadedDataset {
  std::vector<Sample> samples;  // sorted by source_id
  std::vector<std::string> class_names;
};

// Loads a root/<class_name>/*.{png,jpg,jpeg} tree. Class names are the
// subdirectory names in lexicographic order and define the label indices;
// images are resized to target size and scaled to [0,1]. Channel count is
// preserved (3 or 4) so background masking can run afterwards.
inline LoadedDataset load_dataset(const std::filesystem::path& root, std::int64_t target_h,
                                  std::int64_t target_w) {
  if (!std::filesystem::is_directory(root)) {
    throw DataError("dataset root is not a directory: " + root.string());
  }
  std::vector<std::string> class_names;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory()) class_names.push_back(entry.path().filename().string());
  }
  std::sort(class_names.begin(), class_names.end());
  if (class_names.empty()) {
    throw DataError("dataset root contains no class directories: " + root.string());
  }

  struct PendingFile {
    std::filesystem::path path;
    std::string source_id;
    int label;
  };
  std::vector<PendingFile> files;
  for (std::size_t k = 0; k < class_names.size(); ++k) {
    std::vector<std::filesystem::path> in_class;
    for (const auto& entry : std::filesystem::directory_iterator(root / class_names[k])) {
      if (entry.is_regular_file() && detail::has_image_extension(entry.path())) {
        in_class.push_back(entry.path());
      }
    }
    if (in_class.empty()) {
      throw DataError("class folder '" + class_names[k] + "' contains no readable images");
    }
    std::sort(in_class.begin(), in_class.end());
    for (const auto& p : in_class) {
      files.push_back({p, class_names[k] + "/" + p.filename().string(), static_cast<int>(k)});
    }
  }
  std::sort(files.begin(), files.end(),
            [](const PendingFile& a, const PendingFile& b) { return a.source_id < b.source_id; });

  LoadedDataset out;
  out.class_names = std::move(class_names);
  out.samples.resize(files.size());
  std::string decode_error;
  std::mutex error_mutex;
  parallel_for(static_cast<std::int64_t>(files.size()), [&](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      const PendingFile& f = files[static_cast<std::size_t>(i)];
      try {
        Tensor<float> img = image_to_tensor(read_image(f.path));
        img = resize_bilinear(img, target_h, target_w);
        out.samples[static_cast<std::size_t>(i)] = Sample{std::move(img), f.label, f.source_id};
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (decode_error.empty()) decode_error = e.what();
      }
    }
  });
  if (!decode_error.empty()) throw DataError(decode_error);
  return out;
}

// Deterministic stratified 70/15/15 split. Within each class, indices are
// shuffled by a seed-derived stream and partitioned floor(0.70*n) /
// floor(0.15*n) / remainder-to-test.
inline DatasetSplit split_dataset(std::vector<Sample> samples,
                                  std::vector<std::string> class_names, std::uint64_t seed) {
  const std::size_t k = class_names.size();
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int label = samples[i].label;
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw DataError("sample " + samples[i].source_id + " has label " + std::to_string(label) +
                      " outside the " + std::to_string(k) + "-class range");
    }
    by_class[static_cast<std::size_t>(label)].push_back(i);
  }

  DatasetSplit split;
  split.class_names = std::move(class_names);
  split.split_seed = seed;
  for (std::size_t c = 0; c < k; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 3) {
      throw DataError("class '" + split.class_names[c] + "' has " + std::to_string(idx.size()) +
                      " samples; at least 3 are required to stratify the split");
    }
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    const std::size_t n_train = static_cast<std::size_t>(0.70 * static_cast<double>(n));
    const std::size_t n_val = static_cast<std::size_t>(0.15 * static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      Sample& s = samples[idx[i]];
      if (i < n_train) {
        split.train.push_back(std::move(s));
      } else if (i < n_train + n_val) {
        split.validation.push_back(std::move(s));
      } else {
        split.test.push_back(std::move(s));
      }
    }
  }
  // Canonical in-split order: sorted by source_id. Membership is decided
  // by the shuffle above; the stored order is reproducible from the
  // manifest alone.
  auto by_id = [](const Sample& a, const Sample& b) { return a.source_id < b.source_id; };
  std::sort(split.train.begin(), split.train.end(), by_id);
  std::sort(split.validation.begin(), split.validation.end(), by_id);
  std::sort(split.test.begin(), split.test.end(), by_id);
  return split;
}

// Per-epoch batch order: a (seed, epoch)-keyed shuffle chunked into
// batches, final short batch kept.
inline std::vector<std::vector<std::size_t>> batch_plan(std::size_t n_samples,
                                                        std::size_t batch_size,
                                                        std::uint64_t seed, std::int64_t epoch) {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<std::size_t> order(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) order[i] = i;
  Rng rng(derive_seed(seed, "batches", static_cast<std::uint64_t>(epoch)));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> plan;
  for (std::size_t at = 0; at < n_samples; at += batch_size) {
    const std::size_t end = std::min(n_samples, at + batch_size);
    plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                      order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return plan;
}

struct Batch {
  Tensor<float> images;      // [N,C,H,W]
  std::vector<int> labels;   // hard labels
};

inline Batch gather_batch(const std::vector<Sample>& samples,
                          const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw Error("cannot gather an empty batch");
  const Shape& s = samples[indices[0]].image.shape();
  const std::int64_t c = s[0], h = s[1], w = s[2];
  Batch batch;
  batch.images = Tensor<float>({static_cast<std::int64_t>(indices.size()), c, h, w});
  batch.labels.reserve(indices.size());
  const std::int64_t stride = c * h * w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Sample& sample = samples[indices[i]];
    if (sample.image.shape() != s) {
      throw ShapeError("sample " + sample.source_id + " shape " + shape_str(sample.image.shape()) +
                       " differs from batch shape " + shape_str(s));
    }
    std::copy(sample.image.data(), sample.image.data() + stride,
              batch.images.data() + static_cast<std::int64_t>(i) * stride);
    batch.labels.push_back(sample.label);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Synthetic dataset: one colored shape per class on a dark noisy field,
// jittered in position and scale. Desk-scale stand-in with a color cue
// strong enough that even a nearest-mean-color rule beats chance.

namespace detail {

struct Rgb {
  float r, g, b;
};

inline const Rgb& class_color(std::size_t k) {
  static const Rgb colors[8] = {
      {0.85f, 0.20f, 0.20f}, {0.20f, 0.80f, 0.25f}, {0.25f, 0.35f, 0.90f},
      {0.90f, 0.85f, 0.20f}, {0.85f, 0.25f, 0.85f}, {0.20f, 0.85f, 0.85f},
      {0.95f, 0.60f, 0.15f}, {0.90f, 0.90f, 0.90f}};
  return colors[k];
}

inline bool shape_hit(std::size_t shape_kind, double dx, double dy, double radius) {
  const double ax = std::abs(dx), ay = std::abs(dy);
  const double r2 = dx * dx + dy * dy;
  switch (shape_kind % 8) {
    case 0: return r2 <= radius * radius;                                        // disc
    case 1: return ax <= radius && ay <= radius;                                 // square
    case 2: return (ax <= radius * 0.35 && ay <= radius) ||
                   (ay <= radius * 0.35 && ax <= radius);                        // cross
    case 3: return r2 <= radius * radius && r2 >= 0.30 * radius * radius;        // ring
    case 4: return dy >= -radius && dy <= radius && ax <= (radius - dy) * 0.5;   // triangle
    case 5: return ax + ay <= radius;                                            // diamond
    case 6: return std::abs(ax - ay) <= radius * 0.35 && ax <= radius;           // x-cross
    case 7: return (ax <= radius && ay <= radius) &&
                   !(ax <= 0.55 * radius && ay <= 0.55 * radius);                // frame
  }
  return false;
}

}  // namespace detail

// Shape placement for one synthetic sample; derived from its own stream
// so tests can recover the geometry without regenerating pixels.
struct SyntheticShape {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;

  // Conservative bounding box (all shape kinds fit in the radius square),
  // clamped to the image.
  std::array<std::int64_t, 4> bounding_box(std::int64_t size) const {
    const auto clamp = [size](double v) {
      return std::max<std::int64_t>(0, std::min<std::int64_t>(size - 1,
                                                              static_cast<std::int64_t>(v)));
    };
    return {clamp(std::floor(cx - radius)), clamp(std::floor(cy - radius)),
            clamp(std::ceil(cx + radius)), clamp(std::ceil(cy + radius))};
  }
};

inline SyntheticShape synthetic_shape(std::uint64_t seed, std::size_t class_index,
                                      std::size_t sample_index, std::int64_t size) {
  Rng rng(derive_seed(seed, "synthetic-geom", static_cast<std::uint64_t>(class_index),
                      static_cast<std::uint64_t>(sample_index)));
  SyntheticShape s;
  s.radius = static_cast<double>(size) * (0.18 + 0.10 * rng.uniform());
  s.cx = static_cast<double>(size) * (0.35 + 0.30 * rng.uniform());
  s.cy = static_cast<double>(size) * (0.35 + 0.30 * rng.uniform());
  return s;
}

// K classes (K <= 8), n_per_class samples each, square images of the
// given size. Deterministic in the seed, byte for byte.
inline LoadedDataset generate_synthetic(std::size_t n_per_class, std::size_t k,
                                        std::int64_t size, std::uint64_t seed) {
  if (k < 2 || k > 8) throw ConfigError("generate_synthetic supports 2..8 classes");
  if (size < 8) throw ConfigError("synthetic image size must be >= 8");
  LoadedDataset out;
  for (std::size_t c = 0; c < k; ++c) out.class_names.push_back("class" + std::to_string(c));

  const float noise_sigma = 0.05f;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i) {
      Rng rng(derive_seed(seed, "synthetic-noise", static_cast<std::uint64_t>(c),
                          static_cast<std::uint64_t>(i)));
      const SyntheticShape shape = synthetic_shape(seed, c, i, size);
      const double radius = shape.radius;
      const double cx = shape.cx;
      const double cy = shape.cy;
      const detail::Rgb& color = detail::class_color(c);

      Tensor<float> img({3, size, size});
      const std::int64_t plane = size * size;
      for (std::int64_t y = 0; y < size; ++y) {
        for (std::int64_t x = 0; x < size; ++x) {
          const bool hit = detail::shape_hit(c, static_cast<double>(x) - cx,
                                             static_cast<double>(y) - cy, radius);
          const float base_r = hit ? color.r : 0.10f;
          const float base_g = hit ? color.g : 0.10f;
          const float base_b = hit ? color.b : 0.12f;
          const std::int64_t at = y * size + x;
          img[at] = base_r + noise_sigma * static_cast<float>(rng.normal());
          img[plane + at] = base_g + noise_sigma * static_cast<float>(rng.normal());
          img[2 * plane + at] = base_b + noise_sigma * static_cast<float>(rng.normal());
        }
      }
      for (std::int64_t p = 0; p < img.size(); ++p) {
        img[p] = img[p] < 0.0f ? 0.0f : (img[p] > 1.0f ? 1.0f : img[p]);
      }

      std::ostringstream sid;
      sid << out.class_names[c] << "/synthetic_" << std::setw(4) << std::setfill('0') << i
          << ".png";
      out.samples.push_back(Sample{std::move(img), static_cast<int>(c), sid.str()});
    }
  }
  std::sort(out.samples.begin(), out.samples.end(),
            [](const Sample& a, const Sample& b) { return a.source_id < b.source_id; });
  return out;
}

// ---------------------------------------------------------------------------
// Split manifest: `source_id<TAB>class<TAB>split`, LF endings, sorted by
// source_id. Byte-for-byte reproducible for a given (data, seed).

inline std::string split_manifest_text(const DatasetSplit& split) {
  struct Row {
    const std::string* id;
    const std::string* cls;
    const char* part;
  };
  std::vector<Row> rows;
  auto collect = [&](const std::vector<Sample>& samples, const char* part) {
    for (const Sample& s : samples) {
      rows.push_back({&s.source_id, &split.class_names[static_cast<std::size_t>(s.label)], part});
    }
  };
  collect(split.train, "train");
  collect(split.validation, "validation");
  collect(split.test, "test");
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return *a.id < *b.id; });
  std::string out;
  for (const Row& r : rows) {
    out += *r.id;
    out += '\t';
    out += *r.cls;
    out += '\t';
    out += r.part;
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open file for writing: " + path.string());
  file.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!file) throw IoError("failed to write file: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open file: " + path.string());
  return std::string((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
}

// Rebuilds a DatasetSplit from freshly loaded samples plus a manifest.
inline DatasetSplit apply_split_manifest(std::vector<Sample> samples,
                                         std::vector<std::string> class_names,
                                         const std::string& manifest_text,
                                         std::uint64_t seed) {
  std::map<std::string, std::string> assignment;
  std::istringstream stream(manifest_text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw DataError("split manifest line " + std::to_string(line_no) + " is malformed");
    }
    assignment[line.substr(0, tab1)] = line.substr(tab2 + 1);
  }
  DatasetSplit split;
  split.class_names = std::move(class_names);
  split.split_seed = seed;
  for (Sample& s : samples) {
    auto it = assignment.find(s.source_id);
    if (it == assignment.end()) {
      throw DataError("sample " + s.source_id + " missing from the split manifest");
    }
    if (it->second == "train") {
      split.train.push_back(std::move(s));
    } else if (it->second == "validation") {
      split.validation.push_back(std::move(s));
    } else if (it->second == "test") {
      split.test.push_back(std::move(s));
    } else {
      throw DataError("unknown split label '" + it->second + "' for sample " + s.source_id);
    }
  }
  return split;
}

inline nlohmann::ordered_json preprocess_to_json(const PreprocessSettings& pp) {
  nlohmann::ordered_json j;
  j["height"] = pp.height;
  j["width"] = pp.width;
  j["bg_mode"] = bg_mode_name(pp.bg_mode);
  j["bg_threshold"] = pp.bg_threshold;
  return j;
}

inline PreprocessSettings preprocess_from_json(const nlohmann::json& j) {
  PreprocessSettings pp;
  pp.height = j.at("height").get<std::int64_t>();
  pp.width = j.at("width").get<std::int64_t>();
  pp.bg_mode = bg_mode_from_name(j.at("bg_mode").get<std::string>());
  pp.bg_threshold = j.at("bg_threshold").get<double>();
  return pp;
}

}  // namespace sxn
