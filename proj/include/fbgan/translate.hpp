#pragma once

#include "fbgan/models.hpp"
#include "fbgan/train.hpp"
#include "fbgan/volume.hpp"

#include <filesystem>
#include <string_view>
#include <vector>

namespace fbgan {

/// x_to_y is CBCT -> CT (gen_xy judged by disc_y); y_to_x the reverse.
enum class Direction { x_to_y, y_to_x };

std::string_view direction_name(Direction d);
/// Accepts "x2y"/"y2x" and the aliases "cbct2ct"/"ct2cbct".
Direction parse_direction(std::string_view s);

/// Inference on normalized slices (N x 1 x H x W). With feedback the
/// discriminator's probability map of `x` becomes the generator's second
/// input channel; otherwise the generator sees `x` alone.
template <typename Scalar>
Tensor<Scalar> translate_slice(const Tensor<Scalar>& x, const Discriminator<Scalar>& d,
                               const Generator<Scalar>& g, bool feedback) {
  if (x.channels() != 1) {
    throw ConfigurationError("translate_slice expects 1-channel slices, got " +
                             std::to_string(x.channels()));
  }
  const Index want = feedback ? 2 : 1;
  if (g.config().in_channels != want) {
    throw ConfigurationError("generator takes " + std::to_string(g.config().in_channels) +
                             " channels but " + (feedback ? "feedback" : "baseline") +
                             " inference supplies " + std::to_string(want));
  }
  if (feedback && !d.has_local_head()) {
    throw ConfigurationError("feedback inference needs a discriminator with a map head");
  }
  const Index m = Index(1) << (std::max(g.config().widths.size(), d.config().widths.size()) - 1);
  if (x.rows() % m != 0 || x.cols() % m != 0) {
    throw ConfigurationError("slice dims " + to_string(x.shape()) + " are not multiples of " +
                             std::to_string(m));
  }
  if (!feedback) return g.forward(x);
  const Tensor<Scalar> map = d.forward(x).map;
  if (!map.data().allFinite() || map.array().minCoeff() < Scalar(0) ||
      map.array().maxCoeff() > Scalar(1)) {
    throw NumericError("probability map left [0, 1]");
  }
  return g.forward(concat_channels(x, map));
}

/// Preprocesses with the checkpoint's parameters, translates slice by slice,
/// and maps back to HU. The result keeps shape, spacing and FOV radius and is
/// tagged SYNTH.
Volume translate_volume(const Volume& vol, const TrainState& model, Direction dir);

struct TranslationJob {
  std::filesystem::path checkpoint;
  std::vector<std::filesystem::path> inputs;  // volume bases or directories
  std::filesystem::path out_dir;
  Direction direction = Direction::x_to_y;
};

/// Expands directories into their volumes, translates each, and saves
/// `<out_dir>/<input name>`. Returns the written bases.
std::vector<std::filesystem::path> run_translation(const TranslationJob& job);

/// Volume bases (`*.json` sidecars with a `.vol` payload) in a directory, sorted.
std::vector<std::filesystem::path> list_volumes(const std::filesystem::path& dir);

}  // namespace fbgan
