#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/image.hpp"
#include "test_util.hpp"

using namespace sxn;
namespace fs = std::filesystem;

namespace {

// Flat solid-color PNG tree with the given per-class file counts.
fs::path make_dataset_tree(const std::map<std::string, int>& counts, const std::string& tag) {
  const fs::path root = testutil::temp_dir(tag);
  int shade = 1;
  for (const auto& [cls, n] : counts) {
    fs::create_directories(root / cls);
    for (int i = 0; i < n; ++i) {
      Tensor<float> img =
          Tensor<float>::full({3, 6, 6}, static_cast<float>((shade * 37 + i) % 200) / 255.0f);
      char name[32];
      std::snprintf(name, sizeof(name), "img_%04d.png", i);
      write_png(root / cls / name, tensor_to_image(img));
    }
    ++shade;
  }
  return root;
}

std::set<std::string> ids(const std::vector<Sample>& samples) {
  std::set<std::string> out;
  for (const Sample& s : samples) out.insert(s.source_id);
  return out;
}

}  // namespace

TEST(Synthetic, CountsAndDeterminism) {
  LoadedDataset a = generate_synthetic(200, 4, 16, 5);
  EXPECT_EQ(a.samples.size(), 800u);
  std::map<int, int> per_class;
  for (const Sample& s : a.samples) ++per_class[s.label];
  for (const auto& [label, count] : per_class) EXPECT_EQ(count, 200);

  LoadedDataset b = generate_synthetic(200, 4, 16, 5);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    ASSERT_EQ(a.samples[i].source_id, b.samples[i].source_id);
    ASSERT_TRUE(a.samples[i].image == b.samples[i].image);
  }

  LoadedDataset c = generate_synthetic(10, 4, 16, 6);
  EXPECT_FALSE(a.samples[0].image == c.samples[0].image);

  for (const Sample& s : a.samples) {
    for (std::int64_t i = 0; i < s.image.size(); ++i) {
      ASSERT_GE(s.image[i], 0.0f);
      ASSERT_LE(s.image[i], 1.0f);
    }
  }
  EXPECT_THROW(generate_synthetic(5, 9, 16, 1), ConfigError);
}

// Nearest mean-color centroid already separates the classes better than
// chance, per the generator's contract.
TEST(Synthetic, CentroidBaselineBeatsChance) {
  LoadedDataset data = generate_synthetic(40, 4, 16, 9);
  std::vector<std::array<double, 3>> centroids(4, {0, 0, 0});
  std::vector<int> counts(4, 0);
  auto mean_color = [](const Tensor<float>& img) {
    const std::int64_t plane = img.dim(1) * img.dim(2);
    std::array<double, 3> m{0, 0, 0};
    for (int c = 0; c < 3; ++c) {
      for (std::int64_t i = 0; i < plane; ++i) m[c] += img[c * plane + i];
      m[c] /= static_cast<double>(plane);
    }
    return m;
  };
  for (const Sample& s : data.samples) {
    const auto m = mean_color(s.image);
    for (int c = 0; c < 3; ++c) centroids[s.label][c] += m[c];
    ++counts[s.label];
  }
  for (int k = 0; k < 4; ++k) {
    for (int c = 0; c < 3; ++c) centroids[k][c] /= counts[k];
  }
  int correct = 0;
  for (const Sample& s : data.samples) {
    const auto m = mean_color(s.image);
    int best = 0;
    double best_d = 1e9;
    for (int k = 0; k < 4; ++k) {
      double d = 0;
      for (int c = 0; c < 3; ++c) d += (m[c] - centroids[k][c]) * (m[c] - centroids[k][c]);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    correct += best == s.label ? 1 : 0;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(data.samples.size());
  EXPECT_GT(accuracy, 0.5);  // chance is 0.25
}

TEST(Split, PartitionAndFloorRule) {
  LoadedDataset data = generate_synthetic(50, 4, 8, 3);
  // Unequal classes: drop some samples from two classes.
  std::vector<Sample> samples;
  std::map<int, int> kept{{0, 50}, {1, 37}, {2, 23}, {3, 11}};
  std::map<int, int> seen;
  for (Sample& s : data.samples) {
    if (seen[s.label] < kept[s.label]) {
      samples.push_back(std::move(s));
      ++seen[s.label];
    }
  }
  DatasetSplit split = split_dataset(samples, data.class_names, 42);

  // Partition: no overlap, no loss.
  std::set<std::string> train_ids = ids(split.train), val_ids = ids(split.validation),
                        test_ids = ids(split.test);
  EXPECT_EQ(train_ids.size() + val_ids.size() + test_ids.size(), samples.size());
  for (const auto& id : val_ids) EXPECT_EQ(train_ids.count(id), 0u);
  for (const auto& id : test_ids) {
    EXPECT_EQ(train_ids.count(id), 0u);
    EXPECT_EQ(val_ids.count(id), 0u);
  }

  // Per-class floor arithmetic.
  std::map<int, std::array<int, 3>> by_class;
  for (const Sample& s : split.train) ++by_class[s.label][0];
  for (const Sample& s : split.validation) ++by_class[s.label][1];
  for (const Sample& s : split.test) ++by_class[s.label][2];
  for (const auto& [label, n] : kept) {
    const int expect_train = static_cast<int>(0.70 * n);
    const int expect_val = static_cast<int>(0.15 * n);
    EXPECT_EQ(by_class[label][0], expect_train) << "class " << label;
    EXPECT_EQ(by_class[label][1], expect_val) << "class " << label;
    EXPECT_EQ(by_class[label][2], n - expect_train - expect_val) << "class " << label;
    // Stratification keeps each class within one sample of 70/15/15.
    EXPECT_LE(std::abs(by_class[label][0] - 0.70 * n), 1.0);
    EXPECT_LE(std::abs(by_class[label][1] - 0.15 * n), 1.0);
    EXPECT_LE(std::abs(by_class[label][2] - 0.15 * n), 1.0 + 1.0);  // takes both floors' remainder
  }
}

TEST(Split, SingleClassHundred) {
  LoadedDataset data = generate_synthetic(100, 2, 8, 4);
  std::vector<Sample> one_class;
  for (Sample& s : data.samples) {
    if (s.label == 0) one_class.push_back(std::move(s));
  }
  DatasetSplit split = split_dataset(one_class, {"class0"}, 1);
  EXPECT_EQ(split.train.size(), 70u);
  EXPECT_EQ(split.validation.size(), 15u);
  EXPECT_EQ(split.test.size(), 15u);
}

TEST(Split, DeterminismAndSmallClassError) {
  LoadedDataset data = generate_synthetic(20, 3, 8, 7);
  DatasetSplit a = split_dataset(data.samples, data.class_names, 9);
  DatasetSplit b = split_dataset(data.samples, data.class_names, 9);
  EXPECT_EQ(ids(a.train), ids(b.train));
  EXPECT_EQ(ids(a.validation), ids(b.validation));
  EXPECT_EQ(ids(a.test), ids(b.test));
  DatasetSplit c = split_dataset(data.samples, data.class_names, 10);
  EXPECT_NE(ids(a.train), ids(c.train));

  std::vector<Sample> tiny(data.samples.begin(), data.samples.begin() + 2);
  EXPECT_THROW(split_dataset(tiny, data.class_names, 1), DataError);
}

TEST(Batches, PlanProperties) {
  auto plan = batch_plan(10, 4, 5, 0);
  ASSERT_EQ(plan.size(), 3u);
  EXPECT_EQ(plan[0].size(), 4u);
  EXPECT_EQ(plan[1].size(), 4u);
  EXPECT_EQ(plan[2].size(), 2u);

  // Union covers every index exactly once.
  std::set<std::size_t> seen;
  for (const auto& batch : plan) {
    for (std::size_t i : batch) seen.insert(i);
  }
  EXPECT_EQ(seen.size(), 10u);

  // Same epoch replays identically; different epochs reshuffle.
  auto replay = batch_plan(10, 4, 5, 0);
  EXPECT_EQ(plan, replay);
  auto epoch1 = batch_plan(10, 4, 5, 1);
  EXPECT_NE(plan, epoch1);
  EXPECT_THROW(batch_plan(10, 0, 5, 0), ConfigError);
}

TEST(LoadDataset, LexicographicClassesAndCounts) {
  const fs::path root =
      make_dataset_tree({{"Healthy", 3}, {"BG", 4}, {"WSSV", 5}, {"WSSV_BG", 3}}, "load");
  LoadedDataset data = load_dataset(root, 8, 8);
  ASSERT_EQ(data.class_names.size(), 4u);
  EXPECT_EQ(data.class_names[0], "BG");
  EXPECT_EQ(data.class_names[1], "Healthy");
  EXPECT_EQ(data.class_names[2], "WSSV");
  EXPECT_EQ(data.class_names[3], "WSSV_BG");
  EXPECT_EQ(data.samples.size(), 15u);
  for (const Sample& s : data.samples) {
    EXPECT_EQ(s.image.shape(), (Shape{3, 8, 8}));
    for (std::int64_t i = 0; i < s.image.size(); ++i) {
      ASSERT_GE(s.image[i], 0.0f);
      ASSERT_LE(s.image[i], 1.0f);
    }
  }
  fs::remove_all(root);
}

TEST(LoadDataset, ElevenFortyNineFiles) {
  const fs::path root =
      make_dataset_tree({{"a", 300}, {"b", 300}, {"c", 300}, {"d", 249}}, "count1149");
  LoadedDataset data = load_dataset(root, 4, 4);
  EXPECT_EQ(data.samples.size(), 1149u);
  fs::remove_all(root);
}

TEST(LoadDataset, JpegAndAlphaChannels) {
  const fs::path root = testutil::temp_dir("mixed");
  fs::create_directories(root / "only");
  write_jpeg(root / "only" / "a.jpg", tensor_to_image(Tensor<float>::full({3, 9, 9}, 0.5f)));
  ImageU8 rgba;
  rgba.width = 5;
  rgba.height = 5;
  rgba.channels = 4;
  rgba.pixels.assign(100, 128);
  write_png(root / "only" / "b.png", rgba);
  LoadedDataset data = load_dataset(root, 6, 6);
  ASSERT_EQ(data.samples.size(), 2u);
  EXPECT_EQ(data.samples[0].image.dim(0), 3);  // a.jpg
  EXPECT_EQ(data.samples[1].image.dim(0), 4);  // b.png keeps its alpha
  EXPECT_NEAR(data.samples[0].image[0], 0.5f, 0.02f);  // JPEG is lossy
  fs::remove_all(root);
}

TEST(LoadDataset, Errors) {
  EXPECT_THROW(load_dataset("/nonexistent/path", 8, 8), DataError);

  const fs::path root = testutil::temp_dir("errs");
  fs::create_directories(root / "empty_class");
  try {
    load_dataset(root, 8, 8);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("empty_class"), std::string::npos);
  }

  write_text_file(root / "empty_class" / "junk.png", "this is not a png");
  try {
    load_dataset(root, 8, 8);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.png"), std::string::npos);
  }
  fs::remove_all(root);
}

TEST(RemoveBackground, AlphaMode) {
  Tensor<float> rgba({4, 2, 2});
  for (std::int64_t i = 0; i < 12; ++i) rgba[i] = 0.5f;
  for (std::int64_t i = 12; i < 16; ++i) rgba[i] = 1.0f;  // alpha all ones
  Tensor<float> out = remove_background(rgba, BgMode::alpha);
  EXPECT_EQ(out.shape(), (Shape{3, 2, 2}));
  for (std::int64_t i = 0; i < out.size(); ++i) EXPECT_FLOAT_EQ(out[i], 0.5f);

  for (std::int64_t i = 12; i < 16; ++i) rgba[i] = 0.0f;  // alpha all zeros
  Tensor<float> black = remove_background(rgba, BgMode::alpha);
  for (std::int64_t i = 0; i < black.size(); ++i) EXPECT_EQ(black[i], 0.0f);

  Tensor<float> rgb({3, 2, 2});
  EXPECT_THROW(remove_background(rgb, BgMode::alpha), DataError);
  EXPECT_TRUE(remove_background(rgb, BgMode::none) == rgb);
}

TEST(RemoveBackground, ThresholdClearsWhiteBackground) {
  // Dark disc on a white field.
  const std::int64_t s = 32;
  Tensor<float> img = Tensor<float>::full({3, s, s}, 0.98f);
  for (std::int64_t y = 0; y < s; ++y) {
    for (std::int64_t x = 0; x < s; ++x) {
      const double dx = x - 15.5, dy = y - 15.5;
      if (dx * dx + dy * dy <= 8 * 8) {
        img.at3(0, y, x) = 0.3f;
        img.at3(1, y, x) = 0.2f;
        img.at3(2, y, x) = 0.25f;
      }
    }
  }
  auto bright_count = [s](const Tensor<float>& t) {
    std::int64_t count = 0;
    for (std::int64_t y = 0; y < s; ++y) {
      for (std::int64_t x = 0; x < s; ++x) {
        if (pixel_luminance(t.at3(0, y, x), t.at3(1, y, x), t.at3(2, y, x)) > 0.92) ++count;
      }
    }
    return count;
  };
  const std::int64_t before = bright_count(img);
  ASSERT_GT(before, s * s / 2);
  Tensor<float> cleaned = remove_background(img, BgMode::threshold, 0.92);
  EXPECT_LT(bright_count(cleaned), s * s * 2 / 100);
  // The disc survives.
  EXPECT_FLOAT_EQ(cleaned.at3(0, 15, 15), 0.3f);
}

TEST(SplitManifest, FormatAndRoundTrip) {
  LoadedDataset data = generate_synthetic(5, 3, 8, 11);
  DatasetSplit split = split_dataset(data.samples, data.class_names, 13);
  const std::string text = split_manifest_text(split);

  // Sorted by source_id, LF endings, three tab-separated fields.
  std::vector<std::string> lines;
  std::istringstream stream(text);
  std::string line;
  std::string prev;
  while (std::getline(stream, line)) {
    ASSERT_FALSE(line.empty());
    const auto t1 = line.find('\t');
    const auto t2 = line.find('\t', t1 + 1);
    ASSERT_NE(t1, std::string::npos);
    ASSERT_NE(t2, std::string::npos);
    const std::string id = line.substr(0, t1);
    EXPECT_LT(prev, id);
    prev = id;
    lines.push_back(line);
  }
  EXPECT_EQ(lines.size(), 15u);

  // Same data + seed reproduces the manifest byte for byte.
  DatasetSplit again = split_dataset(data.samples, data.class_names, 13);
  EXPECT_EQ(split_manifest_text(again), text);

  // Rebuilding from the manifest matches the original membership.
  DatasetSplit rebuilt = apply_split_manifest(data.samples, data.class_names, text, 13);
  EXPECT_EQ(ids(rebuilt.train), ids(split.train));
  EXPECT_EQ(ids(rebuilt.validation), ids(split.validation));
  EXPECT_EQ(ids(rebuilt.test), ids(split.test));
}

TEST(Resize, Bilinear) {
  Tensor<float> constant = Tensor<float>::full({3, 5, 7}, 0.4f);
  Tensor<float> up = resize_bilinear(constant, 11, 13);
  EXPECT_EQ(up.shape(), (Shape{3, 11, 13}));
  for (std::int64_t i = 0; i < up.size(); ++i) EXPECT_NEAR(up[i], 0.4f, 1e-6);

  // A horizontal ramp stays monotone when upscaled.
  Tensor<float> ramp({1, 1, 4});
  for (std::int64_t x = 0; x < 4; ++x) ramp[x] = static_cast<float>(x) / 3.0f;
  Tensor<float> wide = resize_bilinear(ramp, 1, 8);
  for (std::int64_t x = 1; x < 8; ++x) EXPECT_GE(wide[x], wide[x - 1]);
}

TEST(GatherBatch, AssemblesTensors) {
  LoadedDataset data = generate_synthetic(4, 2, 8, 2);
  Batch batch = gather_batch(data.samples, {0, 3, 5});
  EXPECT_EQ(batch.images.shape(), (Shape{3, 3, 8, 8}));
  ASSERT_EQ(batch.labels.size(), 3u);
  EXPECT_EQ(batch.labels[0], data.samples[0].label);
}
