#include "fbgan/preprocess.hpp"

#include "fbgan/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fbgan {

void SliceBatch::validate() const {
  if (data.batch() < 1) throw ValidationError("slice batch is empty");
  if (data.channels() != 1 && data.channels() != 2) {
    throw ShapeError("slice batch must have 1 or 2 channels, got " +
                     std::to_string(data.channels()));
  }
  if (!data.data().allFinite() || data.array().abs().maxCoeff() > 1.0f) {
    throw ValidationError("slice batch values must lie in [-1, 1]");
  }
  if (!provenance.empty() && static_cast<Index>(provenance.size()) != data.batch()) {
    throw ValidationError("slice batch provenance does not match batch size");
  }
}

double PreprocessParams::resolved_radius(const Volume& vol) const {
  return fov_radius_px > 0.0 ? fov_radius_px
                             : 0.5 * static_cast<double>(std::min(vol.rows(), vol.cols()));
}

Volume apply_fov_mask(const Volume& vol, double radius_px, float fill) {
  const double max_radius = 0.5 * static_cast<double>(std::min(vol.rows(), vol.cols()));
  if (!(radius_px >= 0.0) || radius_px > max_radius) {
    throw ValidationError("FOV radius " + std::to_string(radius_px) + " outside [0, " +
                          std::to_string(max_radius) + "]");
  }
  Volume out = vol;
  const double cy = 0.5 * static_cast<double>(vol.rows() - 1);
  const double cx = 0.5 * static_cast<double>(vol.cols() - 1);
  const double r2 = radius_px * radius_px;
  for (Eigen::Index y = 0; y < vol.rows(); ++y) {
    for (Eigen::Index x = 0; x < vol.cols(); ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      if (dy * dy + dx * dx <= r2) continue;
      for (Eigen::Index z = 0; z < vol.depth(); ++z) out(z, y, x) = fill;
    }
  }
  out.fov_radius_px = radius_px;
  return out;
}

Volume clip_hu(const Volume& vol, double lo, double hi) {
  if (!(lo < hi)) throw ValidationError("clip window requires lo < hi");
  Volume out = vol;
  out.data = vol.data.max(static_cast<float>(lo)).min(static_cast<float>(hi));
  return out;
}

SliceBatch normalize(const Volume& vol, double lo, double hi, const std::string& volume_id) {
  if (!(lo < hi)) throw ValidationError("normalization window requires lo < hi");
  SliceBatch batch;
  batch.data = Tensor<float>(vol.depth(), 1, vol.rows(), vol.cols());
  // Computed in double, then rounded once.
  const Eigen::ArrayXd v = vol.data.cast<double>().max(lo).min(hi);
  batch.data.data() = ((v - lo) / (hi - lo) * 2.0 - 1.0).cast<float>().matrix();
  batch.provenance.reserve(static_cast<std::size_t>(vol.depth()));
  for (Eigen::Index z = 0; z < vol.depth(); ++z) batch.provenance.push_back({volume_id, z});
  return batch;
}

Volume denormalize(const Tensor<float>& slices, double lo, double hi, const Volume& like) {
  if (!(lo < hi)) throw ValidationError("normalization window requires lo < hi");
  if (slices.channels() != 1 || slices.batch() != like.depth() || slices.rows() != like.rows() ||
      slices.cols() != like.cols()) {
    throw ShapeError("denormalize: slices " + to_string(slices.shape()) +
                     " do not match the template volume");
  }
  Volume out = like;
  const Eigen::ArrayXd v = slices.data().array().cast<double>();
  out.data = ((v + 1.0) * 0.5 * (hi - lo) + lo).cast<float>();
  return out;
}

SliceBatch preprocess_volume(const Volume& vol, const PreprocessParams& p,
                             const std::string& volume_id) {
  const auto masked =
      apply_fov_mask(vol, p.resolved_radius(vol), static_cast<float>(p.fill_hu));
  return normalize(masked, p.lo_hu, p.hi_hu, volume_id);
}

DatasetSplit split_dataset(const std::vector<std::string>& ids, double ratio_train,
                           std::uint64_t seed) {
  const auto n = ids.size();
  if (n < 2) throw ValidationError("split_dataset needs at least 2 pairs");
  if (!(ratio_train >= 0.0 && ratio_train <= 1.0)) {
    throw ValidationError("train ratio must lie in [0, 1]");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation is library independent.
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  const auto wanted = static_cast<long long>(std::llround(ratio_train * static_cast<double>(n)));
  const auto n_train =
      static_cast<std::size_t>(std::clamp<long long>(wanted, 1, static_cast<long long>(n) - 1));

  DatasetSplit split;
  split.seed = seed;
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
  std::vector<std::size_t> test_idx(order.begin() + n_train, order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  for (auto i : train_idx) split.train.push_back(ids[i]);
  for (auto i : test_idx) split.test.push_back(ids[i]);
  return split;
}

SliceBatch gather(const std::vector<const SliceBatch*>& sources,
                  const std::vector<std::pair<std::size_t, Index>>& picks) {
  if (picks.empty() || sources.empty()) throw ValidationError("gather needs at least one pick");
  const auto& first = sources.front()->data;
  SliceBatch out;
  out.data = Tensor<float>(static_cast<Index>(picks.size()), first.channels(), first.rows(),
                           first.cols());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto& [s, item] = picks[i];
    const auto& src = *sources.at(s);
    if (src.data.channels() != first.channels() || src.data.rows() != first.rows() ||
        src.data.cols() != first.cols()) {
      throw ShapeError("gather: inconsistent slice shapes");
    }
    out.data.sample(static_cast<Index>(i)) = src.data.sample(item);
    if (!src.provenance.empty()) out.provenance.push_back(src.provenance.at(item));
  }
  return out;
}

}  // namespace fbgan
