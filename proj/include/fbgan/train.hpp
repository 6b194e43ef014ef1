#pragma once

#include "fbgan/adam.hpp"
#include "fbgan/losses.hpp"
#include "fbgan/objective.hpp"
#include "fbgan/preprocess.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace fbgan {

/// Everything needed to reproduce a training run. Serialized as JSON; see
/// README for the schema.
struct TrainConfig {
  Mode mode = Mode::feedback;
  std::optional<bool> feedback;  // overrides the mode's default when set
  int batch_size = 4;
  int epochs = 200;
  AdamConfig adam;
  double lambda_cyc = 10.0;
  double weight_global = 1.0;
  double weight_local = 1.0;
  LocalReduction local_reduction = LocalReduction::mean;
  std::uint64_t seed = 0;
  std::string data_dir;
  std::string checkpoint_dir;
  Index image_size = 64;
  std::vector<Index> gen_widths{32, 64, 128, 256};
  std::vector<Index> disc_widths{32, 64, 128, 256};
  int convs_per_level = 2;
  int checkpoint_every = 10;
  double train_ratio = 30.0 / 35.0;
  PreprocessParams preprocess;

  ModelSpec model_spec() const;
  LossWeights loss_weights() const;
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Strict: unknown keys and wrong types are configuration errors. Missing keys
/// keep the values already in `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
TrainConfig load_train_config(const std::filesystem::path& path);

/// Model, optimizer state and counters. Optimizers hold pointers into the
/// models, so the state is pinned in memory.
struct TrainState {
  explicit TrainState(TrainConfig cfg);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  TrainConfig config;
  ModelBundle<float> models;
  Adam<float> disc_opt, gen_opt;
  long long epoch = 0;  // completed epochs
  long long step = 0;   // completed steps
};

/// One optimization step: both discriminators on detached fakes, then both
/// generators jointly. Losses of the discriminator phase are measured before
/// its update and those of the generator phase after it.
LossBreakdown train_step(TrainState& state, const Tensor<float>& x_real,
                         const Tensor<float>& y_real);

/// Throws DivergenceError naming the first non-finite field.
void check_finite(const LossBreakdown& b, long long step);

// ------------------------------------------------------------------- data

/// Pair ids `####` for which both `ct_####` and `cbct_####` volumes exist.
std::vector<std::string> list_pairs(const std::filesystem::path& dir);
std::filesystem::path ct_path(const std::filesystem::path& dir, const std::string& id);
std::filesystem::path cbct_path(const std::filesystem::path& dir, const std::string& id);

nlohmann::json to_json(const DatasetSplit& s);
DatasetSplit split_from_json(const nlohmann::json& j);

struct TrainingData {
  DatasetSplit split;
  SliceBatch x;  // CBCT slices of the training pairs
  SliceBatch y;  // CT slices of the training pairs
};

TrainingData load_training_data(const TrainConfig& cfg);

/// Item order of one epoch for each domain; depends on (seed, epoch) only.
std::vector<std::size_t> epoch_order(std::uint64_t seed, long long epoch, int domain,
                                     std::size_t count);

// ------------------------------------------------------------------ metrics

/// Fixed metrics CSV layout, one row per epoch holding step-averaged losses.
const std::vector<std::string>& metrics_columns();
std::string metrics_row(long long epoch, long long steps, const LossBreakdown& mean);

// -------------------------------------------------------------------- loop

struct TrainOptions {
  std::optional<std::filesystem::path> resume;
  std::ostream* log = nullptr;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics;
  long long epochs_run = 0;
};

/// Writes `split.json`, `metrics.csv`, `ckpt_epoch_####.fbck` every
/// checkpoint_every epochs and `final.fbck` into config.checkpoint_dir.
TrainResult train(const TrainConfig& config, const TrainOptions& options = {});

}  // namespace fbgan
