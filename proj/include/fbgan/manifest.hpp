#pragma once

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fbgan {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

/// Record of one CLI run, written as `manifest.json` next to its outputs.
struct RunManifest {
  std::string subcommand;
  nlohmann::json config = nlohmann::json::object();  // fully resolved options
  std::uint64_t seed = 0;
  std::string version{kToolkitVersion};
  std::string started;   // UTC, ISO 8601
  std::string finished;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  /// "bitwise" when reruns reproduce outputs byte for byte.
  std::string tolerance_mode = "bitwise";

  nlohmann::json to_json() const;
};

std::string utc_timestamp();

/// Atomically writes `<dir>/manifest.json`.
void write_manifest(const RunManifest& m, const std::filesystem::path& dir);

}  // namespace fbgan
