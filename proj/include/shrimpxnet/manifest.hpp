#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shrimpxnet/datapipe.hpp"
#include "shrimpxnet/rng.hpp"
#include "shrimpxnet/version.hpp"

namespace sxn {

// Provenance record written once per artifact directory. The
// "determinism" section (command, resolved config, input hashes, seed)
// fully determines the run's numeric outputs; "timing" is informational.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::pair<std::string, std::string>> input_hashes;
  std::uint64_t seed = 0;
  std::string started;
  std::string finished;
};

inline std::string fnv1a64_hex(const std::string& bytes) {
  const std::uint64_t h = detail::fnv1a64(bytes);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

inline std::string hash_file(const std::filesystem::path& path) {
  return fnv1a64_hex(read_text_file(path));
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc;
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return std::string(buf);
}

inline nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["tool"] = "shrimpxnet";
  j["version"] = kVersion;
  j["command"] = m.command;
  nlohmann::ordered_json det;
  nlohmann::ordered_json cfg;
  for (const auto& [k, v] : m.config) cfg[k] = v;
  det["config"] = cfg;
  nlohmann::ordered_json inputs;
  for (const auto& [k, v] : m.input_hashes) inputs[k] = v;
  det["inputs"] = inputs;
  det["seed"] = m.seed;
  j["determinism"] = det;
  j["timing"] = {{"start", m.started}, {"end", m.finished}};
  return j;
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& out_dir) {
  write_text_file(out_dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
}

}  // namespace sxn
