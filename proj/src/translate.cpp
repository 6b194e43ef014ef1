#include "fbgan/translate.hpp"

#include "fbgan/checkpoint.hpp"
#include "fbgan/error.hpp"
#include "fbgan/io.hpp"
#include "fbgan/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace fbgan {

namespace fs = std::filesystem;

std::string_view direction_name(Direction d) { return d == Direction::x_to_y ? "x2y" : "y2x"; }

Direction parse_direction(std::string_view s) {
  if (s == "x2y" || s == "cbct2ct") return Direction::x_to_y;
  if (s == "y2x" || s == "ct2cbct") return Direction::y_to_x;
  throw ConfigurationError("unknown direction '" + std::string(s) + "' (use x2y or y2x)");
}

Volume translate_volume(const Volume& vol, const TrainState& model, Direction dir) {
  vol.validate();
  const TrainConfig& cfg = model.config;
  const PreprocessParams& pp = cfg.preprocess;
  if (vol.rows() != cfg.image_size || vol.cols() != cfg.image_size) {
    throw ConfigurationError("volume slices are " + std::to_string(vol.rows()) + "x" +
                             std::to_string(vol.cols()) + " but the checkpoint was trained on " +
                             std::to_string(cfg.image_size) + "x" + std::to_string(cfg.image_size));
  }
  const double radius = pp.resolved_radius(vol);
  if (vol.fov_radius_px && std::abs(*vol.fov_radius_px - radius) > 1e-9) {
    throw ConfigurationError("volume was cropped to FOV radius " +
                             std::to_string(*vol.fov_radius_px) + " but the checkpoint uses " +
                             std::to_string(radius));
  }
  const SliceBatch in = preprocess_volume(vol, pp);

  const auto& m = model.models;
  const auto& g = dir == Direction::x_to_y ? m.gen_xy : m.gen_yx;
  const auto& d = dir == Direction::x_to_y ? m.disc_y : m.disc_x;
  Tensor<float> out(in.data.shape());
  for (Index z = 0; z < in.data.batch(); ++z) {
    Tensor<float> slice(1, 1, in.data.rows(), in.data.cols());
    slice.sample(0) = in.data.sample(z);
    out.sample(z) = translate_slice(slice, d, g, m.spec.feedback).sample(0);
  }
  Volume res = denormalize(out, pp.lo_hu, pp.hi_hu, vol);
  res.fov_radius_px = radius;
  res.modality = Modality::SYNTH;
  return res;
}

std::vector<fs::path> list_volumes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw StorageError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    fs::path base = e.path();
    base.replace_extension();
    fs::path payload = base;
    payload += ".vol";
    if (fs::exists(payload)) out.push_back(base);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> run_translation(const TranslationJob& job) {
  const auto model = load_checkpoint(job.checkpoint);
  std::vector<fs::path> inputs;
  for (const auto& p : job.inputs) {
    if (fs::is_directory(p)) {
      const auto found = list_volumes(p);
      inputs.insert(inputs.end(), found.begin(), found.end());
    } else {
      inputs.push_back(volume_base(p));
    }
  }
  if (inputs.empty()) throw ValidationError("no input volumes to translate");
  ensure_directory(job.out_dir);
  std::vector<fs::path> written;
  for (const auto& base : inputs) {
    const Volume out = translate_volume(load_volume(base), *model, job.direction);
    const fs::path dst = job.out_dir / base.filename();
    save_volume(out, dst);
    written.push_back(dst);
  }
  return written;
}

}  // namespace fbgan
