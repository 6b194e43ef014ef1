#pragma once

#include "fbgan/tensor.hpp"
#include "fbgan/volume.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace fbgan {

struct SliceRef {
  std::string volume_id;
  Index slice = 0;
  friend bool operator==(const SliceRef&, const SliceRef&) = default;
};

/// Normalized slices in [-1, 1] with the volume/slice each item came from.
struct SliceBatch {
  Tensor<float> data;
  std::vector<SliceRef> provenance;

  /// Throws on out-of-range values, unsupported channel counts or empty batches.
  void validate() const;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

/// Parameters that must match between training and inference.
struct PreprocessParams {
  double fov_radius_px = 0.0;  // 0 selects the inscribed circle of the slice
  double fill_hu = -1000.0;
  double lo_hu = -1000.0;
  double hi_hu = 1000.0;

  double resolved_radius(const Volume& vol) const;
  friend bool operator==(const PreprocessParams&, const PreprocessParams&) = default;
};

Volume apply_fov_mask(const Volume& vol, double radius_px, float fill = -1000.0f);
Volume clip_hu(const Volume& vol, double lo, double hi);

/// Clamp to [lo, hi] then map affinely onto [-1, 1]; one batch item per slice.
SliceBatch normalize(const Volume& vol, double lo, double hi, const std::string& volume_id = {});
/// Inverse of normalize on [lo, hi]. `like` supplies shape and metadata.
Volume denormalize(const Tensor<float>& slices, double lo, double hi, const Volume& like);

/// Scalar form of the normalization map, usable at any precision.
template <typename Scalar>
Scalar normalize_value(Scalar hu, Scalar lo, Scalar hi) {
  const Scalar c = hu < lo ? lo : (hu > hi ? hi : hu);
  return (c - lo) / (hi - lo) * Scalar(2) - Scalar(1);
}
template <typename Scalar>
Scalar denormalize_value(Scalar v, Scalar lo, Scalar hi) {
  return (v + Scalar(1)) * Scalar(0.5) * (hi - lo) + lo;
}

/// FOV mask, clip and normalize in one pass, as used for training and inference.
SliceBatch preprocess_volume(const Volume& vol, const PreprocessParams& p,
                             const std::string& volume_id = {});

/// Deterministic shuffle-and-cut. The train count is round(ratio * N) clamped
/// to [1, N - 1] so both sides stay non-empty.
DatasetSplit split_dataset(const std::vector<std::string>& ids, double ratio_train,
                           std::uint64_t seed);

/// Stack selected items of several batches into one.
SliceBatch gather(const std::vector<const SliceBatch*>& sources,
                  const std::vector<std::pair<std::size_t, Index>>& picks);

}  // namespace fbgan
