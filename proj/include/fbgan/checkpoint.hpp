#pragma once

#include "fbgan/train.hpp"

#include "json.hpp"

#include <filesystem>
#include <memory>
#include <string_view>

namespace fbgan {

inline constexpr std::string_view kCheckpointFormat = "fbgan-ckpt/1";

/// Layout: the 8-byte magic "FBGANCK1", a little-endian u64 header length,
/// the JSON header (format, config, mode, counters, preprocessing, tensor
/// table), then for every tensor in table order its values, Adam first
/// moments and Adam second moments as float32, column-major.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);

std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);

/// Header only, without materializing the networks.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

/// Resuming may change the epoch target, output directory and checkpoint
/// cadence; anything else must match or a ConfigurationError is thrown.
void check_resume_compatible(const TrainConfig& stored, const TrainConfig& requested);

}  // namespace fbgan
