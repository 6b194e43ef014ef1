#pragma once

#include "fbgan/volume.hpp"

#include <Eigen/Core>

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fbgan {

inline constexpr float kAirHU = -1000.0f;
/// Voxels above this value count as body for artifact injection.
inline constexpr float kBodyThresholdHU = -900.0f;

struct Ellipsoid {
  std::string label;
  Eigen::Vector3d center;  // z, y, x in voxels
  Eigen::Vector3d radii;   // z, y, x in voxels
  double hu = 0.0;

  bool contains(double z, double y, double x) const {
    const Eigen::Vector3d d((z - center[0]) / radii[0], (y - center[1]) / radii[1],
                            (x - center[2]) / radii[2]);
    return d.squaredNorm() <= 1.0;
  }
};

/// Anatomy of a CT phantom. A voxel takes the HU of the smallest inclusion
/// containing it, else `body.hu` inside the body, else air.
struct PhantomSpec {
  std::array<Eigen::Index, 3> shape{16, 64, 64};
  std::array<double, 3> spacing{2.5, 1.0, 1.0};
  /// Elliptic cylinder when the z radius exceeds the grid.
  Ellipsoid body{"body", {7.5, 31.5, 31.5}, {1e6, 26.0, 28.0}, 40.0};
  std::vector<Ellipsoid> inclusions;
  /// White tissue texture added inside the body; 0 gives piecewise-constant volumes.
  double texture_sd = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  /// Index into `inclusions` of the inclusion with this label, or -1.
  int find(const std::string& label) const;
  /// Rigid in-plane translation of the whole anatomy.
  PhantomSpec shifted(double dy, double dx) const;
};

struct ArtifactParams {
  double global_shift = -76.0;
  double cupping_amp = 0.0;
  double streak_amp = 0.0;
  int streak_count = 1;
  double noise_sd = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

Volume make_ct_phantom(const PhantomSpec& spec);
Volume degrade_to_cbct(const Volume& ct, const ArtifactParams& params);

/// Randomized pelvis-like anatomy: body, bladder, prostate, rectal gas and
/// two femoral heads, each perturbed in position and size by the seed.
PhantomSpec random_pelvis_spec(std::array<Eigen::Index, 3> shape, std::uint64_t seed,
                               double texture_sd = 0.0);

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ArtifactParams& p);

/// A batch of aligned CT/CBCT pairs written to disk.
struct PhantomJob {
  std::array<Eigen::Index, 3> shape{8, 64, 64};
  int pairs = 1;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  ArtifactParams artifacts;
  double texture_sd = 0.0;
  /// Largest in-plane shift, in whole pixels, of the CBCT anatomy relative to the CT.
  int jitter_px = 0;
};

/// Pair i gets anatomy, artifact and jitter seeds derived from (seed, i) and
/// is written as ct_####, cbct_#### and spec_####.json (the CT anatomy).
/// Returns the ids.
std::vector<std::string> write_phantom_pairs(const PhantomJob& job);

/// Mask of voxels treated as body by degrade_to_cbct.
Eigen::Array<bool, Eigen::Dynamic, 1> body_mask(const Volume& vol);

}  // namespace fbgan
