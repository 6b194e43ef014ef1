#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace fbgan {

enum class Modality { CT, CBCT, SYNTH };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);

/// Dense (z, y, x) grid of Hounsfield units. Storage is C-order: x varies
/// fastest, so `data` is bit-compatible with the on-disk payload.
struct Volume {
  std::array<Eigen::Index, 3> shape{0, 0, 0};  // z, y, x
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per axis, same order
  Modality modality = Modality::CT;
  std::optional<double> fov_radius_px;
  Eigen::ArrayXf data;

  Volume() = default;
  Volume(Eigen::Index nz, Eigen::Index ny, Eigen::Index nx, float fill = 0.0f);

  Eigen::Index depth() const { return shape[0]; }
  Eigen::Index rows() const { return shape[1]; }
  Eigen::Index cols() const { return shape[2]; }
  Eigen::Index size() const { return shape[0] * shape[1] * shape[2]; }
  Eigen::Index slice_size() const { return shape[1] * shape[2]; }

  Eigen::Index index(Eigen::Index z, Eigen::Index y, Eigen::Index x) const {
    return (z * shape[1] + y) * shape[2] + x;
  }
  float& operator()(Eigen::Index z, Eigen::Index y, Eigen::Index x) { return data[index(z, y, x)]; }
  float operator()(Eigen::Index z, Eigen::Index y, Eigen::Index x) const { return data[index(z, y, x)]; }

  /// Row-major y×x view of one slice.
  using SliceMap = Eigen::Map<Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstSliceMap =
      Eigen::Map<const Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  SliceMap slice(Eigen::Index z) { return {data.data() + z * slice_size(), shape[1], shape[2]}; }
  ConstSliceMap slice(Eigen::Index z) const {
    return {data.data() + z * slice_size(), shape[1], shape[2]};
  }

  /// Throws ValidationError when shape, spacing or values break the invariants.
  void validate() const;

  /// Bit-exact data and field-exact metadata comparison.
  bool identical(const Volume& other) const;
};

inline constexpr std::string_view kVolumeFormatVersion = "fbgan-vol/1";

/// `base` is the path without extension; writes `<base>.vol` and `<base>.json`.
void save_volume(const Volume& vol, const std::filesystem::path& base);
Volume load_volume(const std::filesystem::path& base);

/// Strips a trailing `.vol` or `.json` so either file names the pair.
std::filesystem::path volume_base(const std::filesystem::path& p);

}  // namespace fbgan
