// shrimpxnet: desk-scale shrimp disease classification pipeline.
// Subcommands cover the full flow: prepare / synth / train / gridsearch /
// evaluate / attack / explain / report.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shrimpxnet/adversarial.hpp"
#include "shrimpxnet/checkpoint.hpp"
#include "shrimpxnet/config.hpp"
#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/explain.hpp"
#include "shrimpxnet/gridsearch.hpp"
#include "shrimpxnet/manifest.hpp"
#include "shrimpxnet/metrics.hpp"
#include "shrimpxnet/trainer.hpp"
#include "shrimpxnet/version.hpp"

#include "pipeline.hpp"

namespace fs = std::filesystem;
using namespace sxn;
using namespace sxn::cli;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 2;
constexpr int kExitNumericError = 3;

struct PrepareArgs {
  std::string data;
  std::string out;
  std::vector<std::int64_t> size = {128, 128};
  std::string bg = "none";
  double bg_threshold = 0.92;
  std::uint64_t seed = 42;
};

void run_prepare(const PrepareArgs& args) {
  RunManifest manifest;
  manifest.command = "prepare";
  manifest.started = utc_timestamp();
  manifest.seed = args.seed;

  const fs::path data_root = fs::absolute(args.data);
  if (!fs::is_directory(data_root)) {
    throw DataError("dataset directory does not exist: " + data_root.string());
  }
  PreprocessSettings pp;
  pp.height = args.size.at(0);
  pp.width = args.size.at(1);
  pp.bg_mode = bg_mode_from_name(args.bg);
  pp.bg_threshold = args.bg_threshold;

  LoadedDataset loaded = load_dataset(data_root, pp.height, pp.width);
  for (Sample& s : loaded.samples) {
    try {
      s.image = remove_background(s.image, pp.bg_mode, pp.bg_threshold);
    } catch (const Error& e) {
      throw DataError(std::string(e.what()) + " (sample " + s.source_id + ")");
    }
  }
  std::vector<std::int64_t> class_counts(loaded.class_names.size(), 0);
  for (const Sample& s : loaded.samples) ++class_counts[static_cast<std::size_t>(s.label)];

  DatasetSplit split = split_dataset(std::move(loaded.samples), loaded.class_names, args.seed);

  const fs::path out_dir = fs::path(args.out);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "split.tsv", split_manifest_text(split));
  std::string class_text;
  for (const std::string& c : split.class_names) class_text += c + "\n";
  write_text_file(out_dir / "classes.txt", class_text);

  nlohmann::ordered_json pp_json = preprocess_to_json(pp);
  pp_json["data_root"] = data_root.string();
  pp_json["seed"] = std::to_string(args.seed);
  nlohmann::ordered_json counts;
  for (std::size_t i = 0; i < split.class_names.size(); ++i) {
    counts[split.class_names[i]] = class_counts[i];
  }
  pp_json["class_counts"] = counts;
  pp_json["total_samples"] =
      split.train.size() + split.validation.size() + split.test.size();
  pp_json["split_sizes"] = {{"train", split.train.size()},
                            {"validation", split.validation.size()},
                            {"test", split.test.size()}};
  write_text_file(out_dir / "preprocess.json", pp_json.dump(2) + "\n");

  manifest.config = {{"data", data_root.string()},
                     {"size", std::to_string(pp.height) + "x" + std::to_string(pp.width)},
                     {"bg", args.bg},
                     {"bg_threshold", std::to_string(args.bg_threshold)},
                     {"seed", std::to_string(args.seed)}};
  manifest.input_hashes = {{"data", hash_dataset_tree(data_root)}};
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);
  std::cout << "prepared " << (split.train.size() + split.validation.size() + split.test.size())
            << " samples (" << split.train.size() << " train / " << split.validation.size()
            << " validation / " << split.test.size() << " test) into " << out_dir.string()
            << "\n";
}

struct SynthArgs {
  std::string out;
  std::size_t classes = 4;
  std::size_t per_class = 200;
  std::int64_t size = 64;
  std::uint64_t seed = 7;
};

void run_synth(const SynthArgs& args) {
  RunManifest manifest;
  manifest.command = "synth";
  manifest.started = utc_timestamp();
  manifest.seed = args.seed;

  LoadedDataset data = generate_synthetic(args.per_class, args.classes, args.size, args.seed);
  const fs::path out_dir = fs::path(args.out);
  for (const std::string& c : data.class_names) fs::create_directories(out_dir / c);
  for (const Sample& s : data.samples) {
    write_png(out_dir / s.source_id, tensor_to_image(s.image));
  }

  manifest.config = {{"classes", std::to_string(args.classes)},
                     {"per_class", std::to_string(args.per_class)},
                     {"size", std::to_string(args.size)},
                     {"seed", std::to_string(args.seed)}};
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);
  std::cout << "wrote " << data.samples.size() << " synthetic images into " << out_dir.string()
            << "\n";
}

struct TrainArgs {
  std::string config_path;
  std::string data;
  std::string out;
  std::string resume;
  double mixup_alpha = 0.0;
  double cutmix_alpha = 0.0;
  double fgsm_eps = 0.0;
  double adv_fraction = 0.5;
  std::int64_t freeze = 0;
  std::vector<std::string> grid;  // gridsearch only

  CLI::Option* o_mixup = nullptr;
  CLI::Option* o_cutmix = nullptr;
  CLI::Option* o_fgsm = nullptr;
  CLI::Option* o_fraction = nullptr;
  CLI::Option* o_freeze = nullptr;
};

// Precedence: flags > config file > defaults.
PipelineConfig resolve_config(const TrainArgs& args) {
  PipelineConfig cfg;
  if (!args.config_path.empty()) cfg = parse_config_file(args.config_path);
  if (args.o_mixup && args.o_mixup->count()) cfg.train.augment.mixup_alpha = args.mixup_alpha;
  if (args.o_cutmix && args.o_cutmix->count()) cfg.train.augment.cutmix_alpha = args.cutmix_alpha;
  if (args.o_fgsm && args.o_fgsm->count()) cfg.train.attack.epsilon = args.fgsm_eps;
  if (args.o_fraction && args.o_fraction->count()) {
    cfg.train.attack.adversarial_fraction = args.adv_fraction;
  }
  if (args.o_freeze && args.o_freeze->count()) cfg.train.freeze_depth = args.freeze;
  return cfg;
}

PreparedData load_and_bind(const std::string& prep_dir, PipelineConfig& cfg) {
  PreparedData prepared = load_prepared(prep_dir);
  if (prepared.preprocess.height != prepared.preprocess.width) {
    throw ConfigError("model input must be square; prepared data is " +
                      std::to_string(prepared.preprocess.height) + "x" +
                      std::to_string(prepared.preprocess.width));
  }
  cfg.model.input_size = prepared.preprocess.height;
  cfg.model.in_channels = 3;
  cfg.model.num_classes = static_cast<std::int64_t>(prepared.split.class_names.size());
  cfg.model.validate();
  return prepared;
}

std::vector<std::pair<std::string, std::string>> training_input_hashes(
    const TrainArgs& args, const PreparedData& prepared) {
  std::vector<std::pair<std::string, std::string>> hashes;
  const fs::path prep(args.data);
  hashes.emplace_back("split.tsv", hash_file(prep / "split.tsv"));
  hashes.emplace_back("classes.txt", hash_file(prep / "classes.txt"));
  hashes.emplace_back("preprocess.json", hash_file(prep / "preprocess.json"));
  if (!args.config_path.empty()) hashes.emplace_back("config", hash_file(args.config_path));
  hashes.emplace_back("data", hash_dataset_tree(prepared.data_root));
  return hashes;
}

void run_train(const TrainArgs& args) {
  RunManifest manifest;
  manifest.command = "train";
  manifest.started = utc_timestamp();

  PipelineConfig cfg = resolve_config(args);
  PreparedData prepared = load_and_bind(args.data, cfg);
  manifest.seed = cfg.train.seed;

  TrainResult result;
  if (args.resume.empty()) {
    result = train(cfg.train, cfg.model, prepared.split);
  } else {
    Checkpoint from = load_checkpoint(args.resume);
    result = resume_train(from, cfg.train, prepared.split);
  }

  const fs::path out_dir = fs::path(args.out);
  fs::create_directories(out_dir);
  save_checkpoint(result.checkpoint, out_dir / "checkpoint.sxn");
  write_text_file(out_dir / "train.log", train_log_text(result.history, result.augment_log));

  manifest.config = config_to_kv(cfg);
  if (!args.resume.empty()) manifest.config.emplace_back("resume", args.resume);
  manifest.input_hashes = training_input_hashes(args, prepared);
  if (!args.resume.empty()) manifest.input_hashes.emplace_back("resume", hash_file(args.resume));
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);

  const EpochStats& last = result.history.epochs.back();
  std::printf("trained %lld epochs (best epoch %lld, val_loss %.6f, val_acc %.6f)\n",
              static_cast<long long>(result.checkpoint.epochs_completed),
              static_cast<long long>(result.checkpoint.best_epoch),
              result.checkpoint.best_val_loss, last.val_acc);
  std::cout << "checkpoint written to " << (out_dir / "checkpoint.sxn").string() << "\n";
}

GridAxes parse_grid_flags(const std::vector<std::string>& grid_flags, const PipelineConfig& base) {
  GridAxes axes;
  for (const std::string& spec : grid_flags) {
    const std::size_t eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size()) {
      throw ConfigError("--grid expects key=v1,v2,..., got '" + spec + "'");
    }
    const std::string key = spec.substr(0, eq);
    std::vector<std::string> values;
    std::istringstream stream(spec.substr(eq + 1));
    std::string part;
    while (std::getline(stream, part, ',')) values.push_back(part);
    axes.emplace_back(key, std::move(values));
  }
  // The search contract requires freeze_depth and initial_lr axes; fill
  // in singletons from the base config when the user omits them.
  auto has_axis = [&axes](const std::string& name) {
    for (const auto& [axis, values] : axes) {
      if (axis == name) return true;
    }
    return false;
  };
  char buf[64];
  if (!has_axis("freeze_depth")) {
    axes.emplace_back("freeze_depth",
                      std::vector<std::string>{std::to_string(base.train.freeze_depth)});
  }
  if (!has_axis("initial_lr")) {
    std::snprintf(buf, sizeof(buf), "%.10g", base.train.initial_lr);
    axes.emplace_back("initial_lr", std::vector<std::string>{buf});
  }
  return axes;
}

void run_gridsearch(const TrainArgs& args) {
  RunManifest manifest;
  manifest.command = "gridsearch";
  manifest.started = utc_timestamp();

  PipelineConfig base = resolve_config(args);
  PreparedData prepared = load_and_bind(args.data, base);
  manifest.seed = base.train.seed;

  GridAxes axes = parse_grid_flags(args.grid, base);
  GridSearchResult result = grid_search(axes, base, prepared.split);

  const fs::path out_dir = fs::path(args.out);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "gridsearch.tsv", grid_table_text(axes, result.ranked));
  save_checkpoint(result.best_run.checkpoint, out_dir / "checkpoint.sxn");
  write_text_file(out_dir / "train.log",
                  train_log_text(result.best_run.history, result.best_run.augment_log));

  manifest.config = config_to_kv(result.best_config);
  for (const auto& [axis, values] : axes) {
    std::string joined;
    for (std::size_t i = 0; i < values.size(); ++i) joined += (i ? "," : "") + values[i];
    manifest.config.emplace_back("grid." + axis, joined);
  }
  manifest.input_hashes = training_input_hashes(args, prepared);
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);

  std::cout << "grid search finished: " << result.ranked.size() << " cells; best ";
  for (const auto& [axis, value] : result.ranked.front().assignment) {
    std::cout << axis << "=" << value << " ";
  }
  std::printf("(val_acc %.6f)\n", result.ranked.front().val_accuracy);
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::vector<double> eps_list;
  std::string split = "test";
  std::string method;
  std::string image;
  std::string class_name;
  bool dump_heatmap = false;
  std::int64_t bootstrap_iterations = 1000;
  double z = 2.576;
  std::uint64_t bootstrap_seed = 0;  // 0 -> checkpoint's base seed
  CLI::Option* o_seed = nullptr;
};

EvalReport compute_report(const Checkpoint& ckpt, const PreparedData& prepared,
                          const EvalArgs& args) {
  const std::vector<Sample>& samples = prepared.split.test;
  if (samples.empty()) throw DataError("test split is empty");
  auto rows = predict_rows(ckpt.spec, ckpt.params, samples);
  std::vector<int> labels;
  for (const Sample& s : samples) labels.push_back(s.label);
  const std::uint64_t seed = (args.o_seed && args.o_seed->count()) ? args.bootstrap_seed
                                                                   : ckpt.base_seed;
  return build_report(rows, labels, prepared.split.class_names, args.bootstrap_iterations,
                      args.z, seed);
}

std::vector<std::pair<std::string, std::string>> eval_input_hashes(const EvalArgs& args,
                                                                   const PreparedData& prepared) {
  const fs::path prep(args.data);
  return {{"checkpoint", hash_file(args.checkpoint)},
          {"split.tsv", hash_file(prep / "split.tsv")},
          {"classes.txt", hash_file(prep / "classes.txt")},
          {"preprocess.json", hash_file(prep / "preprocess.json")},
          {"data", hash_dataset_tree(prepared.data_root)}};
}

void run_evaluate(const EvalArgs& args) {
  RunManifest manifest;
  manifest.command = "evaluate";
  manifest.started = utc_timestamp();

  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  PreparedData prepared = load_prepared(args.data);
  check_compatibility(ckpt, prepared);
  manifest.seed = ckpt.base_seed;

  EvalReport report = compute_report(ckpt, prepared, args);

  const fs::path out_dir = fs::path(args.out);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "report.json", report_to_json(report).dump(2) + "\n");
  write_text_file(out_dir / "report.txt", report_to_text(report));

  manifest.config = {{"checkpoint", args.checkpoint},
                     {"bootstrap_iterations", std::to_string(args.bootstrap_iterations)},
                     {"z", std::to_string(args.z)}};
  manifest.input_hashes = eval_input_hashes(args, prepared);
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);

  std::cout << report_to_text(report);
  std::printf("accuracy %.6f on %zu test samples; report written to %s\n",
              report.report.accuracy, prepared.split.test.size(),
              (out_dir / "report.json").string().c_str());
}

void run_attack(const EvalArgs& args) {
  RunManifest manifest;
  manifest.command = "attack";
  manifest.started = utc_timestamp();

  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  PreparedData prepared = load_prepared(args.data);
  check_compatibility(ckpt, prepared);
  manifest.seed = ckpt.base_seed;

  const std::vector<double>& ladder =
      args.eps_list.empty() ? default_epsilon_ladder() : args.eps_list;
  const std::vector<Sample>& samples = pick_split(prepared.split, args.split);
  std::vector<SweepRow> rows = robustness_sweep(ckpt.spec, ckpt.params, samples, ladder);

  const fs::path out_dir = fs::path(args.out);
  fs::create_directories(out_dir);
  write_text_file(out_dir / "robustness.tsv", sweep_table_text(rows));

  std::string eps_str;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    eps_str += (i ? "," : "") + std::to_string(ladder[i]);
  }
  manifest.config = {{"checkpoint", args.checkpoint}, {"eps_list", eps_str}, {"split", args.split}};
  manifest.input_hashes = eval_input_hashes(args, prepared);
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);

  std::cout << sweep_table_text(rows);
  std::cout << "robustness table written to " << (out_dir / "robustness.tsv").string() << "\n";
}

struct ExplainJob {
  const Sample* sample;
  int class_index;
};

const Sample* find_sample(const DatasetSplit& split, const std::string& source_id) {
  for (const std::vector<Sample>* part : {&split.test, &split.validation, &split.train}) {
    for (const Sample& s : *part) {
      if (s.source_id == source_id) return &s;
    }
  }
  throw DataError("image '" + source_id + "' not found in the prepared dataset");
}

int resolve_class_index(const std::vector<std::string>& names, const std::string& name) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  std::string valid;
  for (const std::string& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown class '" + name + "'; valid classes: " + valid);
}

// Writes overlay PNGs (and optional text dumps) for the chosen samples
// and methods; returns the written file names.
std::vector<std::string> explain_samples(const Checkpoint& ckpt, const PreparedData& prepared,
                                         const std::vector<ExplainJob>& jobs,
                                         const std::vector<CamMethod>& methods,
                                         const fs::path& out_dir, bool dump_heatmap) {
  std::vector<std::string> written;
  for (const ExplainJob& job : jobs) {
    for (CamMethod method : methods) {
      auto [activations, grads] =
          cam_activations_and_grads(ckpt.spec, ckpt.params, job.sample->image, job.class_index);
      Heatmap heatmap = cam_combine(activations, grads, method, job.class_index);
      const std::string base = sanitize_id(job.sample->source_id) + "_" +
                               cam_method_name(method) + "_" +
                               prepared.split.class_names[static_cast<std::size_t>(job.class_index)];
      render_overlay(heatmap, job.sample->image, out_dir / (base + ".png"));
      written.push_back(base + ".png");
      if (dump_heatmap) {
        write_text_file(out_dir / (base + ".txt"), heatmap_to_text(heatmap));
        written.push_back(base + ".txt");
      }
    }
  }
  return written;
}

std::vector<CamMethod> resolve_methods(const std::string& method_flag) {
  if (method_flag.empty()) {
    return {CamMethod::grad_cam, CamMethod::grad_cam_pp, CamMethod::xgrad_cam};
  }
  return {cam_method_from_name(method_flag)};
}

void run_explain(const EvalArgs& args) {
  RunManifest manifest;
  manifest.command = "explain";
  manifest.started = utc_timestamp();

  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  PreparedData prepared = load_prepared(args.data);
  check_compatibility(ckpt, prepared);
  manifest.seed = ckpt.base_seed;

  std::vector<ExplainJob> jobs;
  if (!args.image.empty()) {
    const Sample* s = find_sample(prepared.split, args.image);
    int class_index;
    if (!args.class_name.empty()) {
      class_index = resolve_class_index(prepared.split.class_names, args.class_name);
    } else {
      class_index = argmax_rows(predict(ckpt.spec, ckpt.params,
                                        Tensor<float>({1, s->image.dim(0), s->image.dim(1),
                                                       s->image.dim(2)},
                                                      s->image.vec())))[0];
    }
    jobs.push_back({s, class_index});
  } else {
    // First test image of each class, explained at its predicted class
    // (or the requested one).
    std::vector<const Sample*> firsts(prepared.split.class_names.size(), nullptr);
    for (const Sample& s : prepared.split.test) {
      if (!firsts[static_cast<std::size_t>(s.label)]) {
        firsts[static_cast<std::size_t>(s.label)] = &s;
      }
    }
    for (const Sample* s : firsts) {
      if (!s) continue;
      int class_index;
      if (!args.class_name.empty()) {
        class_index = resolve_class_index(prepared.split.class_names, args.class_name);
      } else {
        class_index = argmax_rows(predict(ckpt.spec, ckpt.params,
                                          Tensor<float>({1, s->image.dim(0), s->image.dim(1),
                                                         s->image.dim(2)},
                                                        s->image.vec())))[0];
      }
      jobs.push_back({s, class_index});
    }
  }

  const fs::path out_dir = fs::path(args.out);
  fs::create_directories(out_dir);
  std::vector<std::string> written = explain_samples(ckpt, prepared, jobs,
                                                     resolve_methods(args.method), out_dir,
                                                     args.dump_heatmap);

  manifest.config = {{"checkpoint", args.checkpoint},
                     {"method", args.method.empty() ? "all" : args.method},
                     {"image", args.image.empty() ? "auto" : args.image},
                     {"class", args.class_name.empty() ? "predicted" : args.class_name}};
  manifest.input_hashes = eval_input_hashes(args, prepared);
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);

  for (const std::string& f : written) std::cout << "wrote " << (out_dir / f).string() << "\n";
}

void run_report(const EvalArgs& args) {
  RunManifest manifest;
  manifest.command = "report";
  manifest.started = utc_timestamp();

  Checkpoint ckpt = load_checkpoint(args.checkpoint);
  PreparedData prepared = load_prepared(args.data);
  check_compatibility(ckpt, prepared);
  manifest.seed = ckpt.base_seed;

  EvalReport report = compute_report(ckpt, prepared, args);
  const std::vector<double>& ladder =
      args.eps_list.empty() ? default_epsilon_ladder() : args.eps_list;
  std::vector<SweepRow> sweep =
      robustness_sweep(ckpt.spec, ckpt.params, prepared.split.test, ladder);

  const fs::path out_dir = fs::path(args.out);
  fs::create_directories(out_dir);

  nlohmann::ordered_json j = report_to_json(report);
  j["robustness"] = nlohmann::ordered_json::array();
  for (const SweepRow& r : sweep) {
    j["robustness"].push_back(
        {{"epsilon", r.epsilon}, {"accuracy", round_half_up(r.accuracy, 6)},
         {"loss", round_half_up(r.loss, 6)}});
  }
  write_text_file(out_dir / "report.json", j.dump(2) + "\n");
  write_text_file(out_dir / "report.txt",
                  report_to_text(report) + "\nFGSM robustness sweep (test split)\n" +
                      sweep_table_text(sweep));
  write_text_file(out_dir / "robustness.tsv", sweep_table_text(sweep));

  // One explained image per class: the first correctly classified test
  // sample, falling back to the first test sample of the class.
  auto rows = predict_rows(ckpt.spec, ckpt.params, prepared.split.test);
  std::vector<const Sample*> chosen(prepared.split.class_names.size(), nullptr);
  std::vector<const Sample*> fallback(prepared.split.class_names.size(), nullptr);
  for (std::size_t i = 0; i < prepared.split.test.size(); ++i) {
    const Sample& s = prepared.split.test[i];
    const auto& row = rows[i];
    const int pred = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    const std::size_t cls = static_cast<std::size_t>(s.label);
    if (!fallback[cls]) fallback[cls] = &s;
    if (!chosen[cls] && pred == s.label) chosen[cls] = &s;
  }
  std::vector<ExplainJob> jobs;
  for (std::size_t cls = 0; cls < chosen.size(); ++cls) {
    const Sample* s = chosen[cls] ? chosen[cls] : fallback[cls];
    if (s) jobs.push_back({s, static_cast<int>(cls)});
  }
  explain_samples(ckpt, prepared, jobs,
                  {CamMethod::grad_cam, CamMethod::grad_cam_pp, CamMethod::xgrad_cam}, out_dir,
                  false);

  manifest.config = {{"checkpoint", args.checkpoint},
                     {"bootstrap_iterations", std::to_string(args.bootstrap_iterations)},
                     {"z", std::to_string(args.z)}};
  manifest.input_hashes = eval_input_hashes(args, prepared);
  manifest.finished = utc_timestamp();
  write_manifest(manifest, out_dir);

  std::cout << report_to_text(report);
  std::cout << "report bundle written to " << out_dir.string() << "\n";
}

void add_eval_common(CLI::App* cmd, EvalArgs& args) {
  cmd->add_option("--checkpoint", args.checkpoint, "Trained checkpoint file")->required();
  cmd->add_option("--data", args.data, "Prepared dataset directory (from `prepare`)")->required();
  cmd->add_option("--out", args.out, "Output directory")->required();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"shrimpxnet: shrimp disease classification pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  PrepareArgs prepare_args;
  auto* prepare = app.add_subcommand("prepare", "Load a class-folder image tree, split 70/15/15");
  prepare->add_option("--data", prepare_args.data, "Dataset root (one folder per class)")->required();
  prepare->add_option("--out", prepare_args.out, "Output directory")->required();
  prepare->add_option("--size", prepare_args.size, "Target image size H W")
      ->expected(2)
      ->capture_default_str();
  prepare->add_option("--bg", prepare_args.bg, "Background removal mode: alpha|threshold|none")
      ->capture_default_str();
  prepare->add_option("--bg-threshold", prepare_args.bg_threshold,
                      "Luminance cutoff for threshold mode")
      ->capture_default_str();
  prepare->add_option("--seed", prepare_args.seed, "Split shuffle seed")->capture_default_str();
  prepare->callback([&] { run_prepare(prepare_args); });

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled dataset");
  synth->add_option("--out", synth_args.out, "Output dataset directory")->required();
  synth->add_option("--classes", synth_args.classes, "Number of classes (2..8)")
      ->capture_default_str();
  synth->add_option("--per-class", synth_args.per_class, "Images per class")->capture_default_str();
  synth->add_option("--size", synth_args.size, "Square image size")->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "Generator seed")->capture_default_str();
  synth->callback([&] { run_synth(synth_args); });

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model on a prepared dataset");
  train_cmd->add_option("--config", train_args.config_path, "key=value config file");
  train_cmd->add_option("--data", train_args.data, "Prepared dataset directory")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to resume from");
  train_args.o_mixup = train_cmd->add_option("--mixup-alpha", train_args.mixup_alpha,
                                             "MixUp Beta(a,a) alpha; 0 disables")
                           ->capture_default_str();
  train_args.o_cutmix = train_cmd->add_option("--cutmix-alpha", train_args.cutmix_alpha,
                                              "CutMix Beta(a,a) alpha; 0 disables")
                            ->capture_default_str();
  train_args.o_fgsm = train_cmd->add_option("--fgsm-eps", train_args.fgsm_eps,
                                            "FGSM epsilon for adversarial training; 0 disables")
                          ->capture_default_str();
  train_args.o_fraction = train_cmd->add_option("--adv-fraction", train_args.adv_fraction,
                                                "Fraction of each batch replaced adversarially")
                              ->capture_default_str();
  train_args.o_freeze = train_cmd->add_option("--freeze", train_args.freeze,
                                              "Backbone blocks to freeze")
                            ->capture_default_str();
  train_cmd->callback([&] { run_train(train_args); });

  TrainArgs grid_args;
  auto* grid_cmd = app.add_subcommand("gridsearch", "Grid search over training hyperparameters");
  grid_cmd->add_option("--config", grid_args.config_path, "key=value config file");
  grid_cmd->add_option("--data", grid_args.data, "Prepared dataset directory")->required();
  grid_cmd->add_option("--out", grid_args.out, "Output directory")->required();
  grid_cmd->add_option("--grid", grid_args.grid,
                       "Axis as key=v1,v2,... (repeatable; freeze_depth and initial_lr axes "
                       "default to the base config)");
  grid_args.o_mixup = grid_cmd->add_option("--mixup-alpha", grid_args.mixup_alpha,
                                           "MixUp Beta(a,a) alpha; 0 disables")
                          ->capture_default_str();
  grid_args.o_cutmix = grid_cmd->add_option("--cutmix-alpha", grid_args.cutmix_alpha,
                                            "CutMix Beta(a,a) alpha; 0 disables")
                           ->capture_default_str();
  grid_args.o_fgsm = grid_cmd->add_option("--fgsm-eps", grid_args.fgsm_eps,
                                          "FGSM epsilon for adversarial training; 0 disables")
                         ->capture_default_str();
  grid_args.o_fraction = grid_cmd->add_option("--adv-fraction", grid_args.adv_fraction,
                                              "Fraction of each batch replaced adversarially")
                             ->capture_default_str();
  grid_args.o_freeze = grid_cmd->add_option("--freeze", grid_args.freeze,
                                            "Backbone blocks to freeze")
                           ->capture_default_str();
  grid_cmd->callback([&] { run_gridsearch(grid_args); });

  EvalArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  add_eval_common(evaluate, eval_args);
  evaluate->add_option("--bootstrap-iterations", eval_args.bootstrap_iterations,
                       "Bootstrap resampling iterations")
      ->capture_default_str();
  evaluate->add_option("--z", eval_args.z, "Confidence z-score")->capture_default_str();
  eval_args.o_seed = evaluate->add_option("--seed", eval_args.bootstrap_seed,
                                          "Bootstrap seed (default: checkpoint seed)");
  evaluate->callback([&] { run_evaluate(eval_args); });

  EvalArgs attack_args;
  auto* attack = app.add_subcommand("attack", "FGSM robustness sweep over an epsilon ladder");
  add_eval_common(attack, attack_args);
  attack->add_option("--eps-list", attack_args.eps_list,
                     "Epsilon ladder (ascending, first 0; default 0 0.1 0.12 0.14 0.16 0.18 0.2)")
      ->expected(-1);
  attack->add_option("--split", attack_args.split, "Split to attack: train|validation|test")
      ->capture_default_str();
  attack->callback([&] { run_attack(attack_args); });

  EvalArgs explain_args;
  auto* explain = app.add_subcommand("explain", "Render CAM overlay heatmaps");
  add_eval_common(explain, explain_args);
  explain->add_option("--method", explain_args.method,
                      "CAM method: gradcam|gradcampp|xgradcam (default: all three)");
  explain->add_option("--image", explain_args.image,
                      "Source id of the image to explain (default: first test image per class)");
  explain->add_option("--class", explain_args.class_name,
                      "Target class name (default: predicted class)");
  explain->add_flag("--dump-heatmap", explain_args.dump_heatmap,
                    "Also write the raw heatmap as a text matrix");
  explain->callback([&] { run_explain(explain_args); });

  EvalArgs report_args;
  auto* report = app.add_subcommand("report",
                                    "Bundle evaluation, robustness sweep and explanations");
  add_eval_common(report, report_args);
  report->add_option("--eps-list", report_args.eps_list, "Epsilon ladder for the sweep")
      ->expected(-1);
  report->add_option("--bootstrap-iterations", report_args.bootstrap_iterations,
                     "Bootstrap resampling iterations")
      ->capture_default_str();
  report->add_option("--z", report_args.z, "Confidence z-score")->capture_default_str();
  report_args.o_seed = report->add_option("--seed", report_args.bootstrap_seed,
                                          "Bootstrap seed (default: checkpoint seed)");
  report->callback([&] { run_report(report_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInputError;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}
