#include "fbgan/manifest.hpp"

#include "fbgan/io.hpp"

#include <chrono>
#include <ctime>

namespace fbgan {

nlohmann::json RunManifest::to_json() const {
  return {{"subcommand", subcommand}, {"config", config},   {"seed", seed},
          {"version", version},       {"started", started}, {"finished", finished},
          {"inputs", inputs},         {"outputs", outputs}, {"tolerance_mode", tolerance_mode}};
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
  ensure_directory(dir);
  write_file_atomic(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

}  // namespace fbgan
