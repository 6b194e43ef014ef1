#pragma once

// L1 adversarial objectives of the dual-output discriminator and the cycle
// term. Every loss here averages over batch items; the local terms reduce
// over pixels with `LocalReduction` (mean by default, sum on request).

#include "fbgan/error.hpp"
#include "fbgan/tensor.hpp"

#include <cmath>
#include <string>
#include <string_view>

namespace fbgan {

enum class LocalReduction { mean, sum };

inline std::string_view reduction_name(LocalReduction r) {
  return r == LocalReduction::mean ? "mean" : "sum";
}
inline LocalReduction parse_reduction(std::string_view s) {
  if (s == "mean") return LocalReduction::mean;
  if (s == "sum") return LocalReduction::sum;
  throw ConfigurationError("local_reduction must be 'mean' or 'sum', got '" + std::string(s) + "'");
}

struct LossWeights {
  double global = 1.0;  // weight of the global terms
  double local = 1.0;   // weight of the probability-map terms
  double cycle = 10.0;  // lambda_cyc
  LocalReduction reduction = LocalReduction::mean;
};

/// Losses of one translation direction; X->Y pairs D_Y with G_Y.
struct DirectionLosses {
  double d_global = 0.0;  // global discriminator term
  double d_local = 0.0;   // probability-map discriminator term
  double d_total = 0.0;   // weighted sum of the two
  double g_global = 0.0;  // generator fooling the global head
  double g_local = 0.0;   // generator fooling the map head
  double g_adv = 0.0;     // weighted sum of the two
};

struct LossBreakdown {
  DirectionLosses xy;  // X (CBCT) -> Y (CT)
  DirectionLosses yx;  // Y -> X
  double cycle = 0.0;
  double total = 0.0;
};

namespace detail {

template <typename Scalar>
void require_finite(const auto& a, const char* what) {
  if (!a.allFinite()) throw NumericError(std::string(what) + ": non-finite input");
}

template <typename Scalar>
Scalar sign(Scalar v) {
  return v > Scalar(0) ? Scalar(1) : (v < Scalar(0) ? Scalar(-1) : Scalar(0));
}

}  // namespace detail

/// Batch mean of |d - target| for per-item scalars.
template <typename Scalar>
Scalar l1_to_target(const ArrayX<Scalar>& d, Scalar target) {
  detail::require_finite<Scalar>(d, "l1_to_target");
  if (d.size() == 0) return Scalar(0);
  return (d - target).abs().mean();
}

template <typename Scalar>
ArrayX<Scalar> l1_to_target_grad(const ArrayX<Scalar>& d, Scalar target, Scalar scale) {
  const Scalar k = scale / static_cast<Scalar>(d.size());
  return (d - target).unaryExpr([k](Scalar v) { return k * detail::sign(v); });
}

/// Per-item pixel reduction of |map - target|, averaged over items.
template <typename Scalar>
Scalar map_l1_to_target(const Tensor<Scalar>& map, Scalar target, LocalReduction r) {
  detail::require_finite<Scalar>(map.data(), "map_l1_to_target");
  if (map.empty()) return Scalar(0);
  const Scalar total = (map.array() - target).abs().sum();
  const Scalar per_item = r == LocalReduction::mean ? static_cast<Scalar>(map.sample_size())
                                                    : Scalar(1);
  return total / (per_item * static_cast<Scalar>(map.batch()));
}

template <typename Scalar>
Tensor<Scalar> map_l1_to_target_grad(const Tensor<Scalar>& map, Scalar target, LocalReduction r,
                                     Scalar scale) {
  const Scalar per_item = r == LocalReduction::mean ? static_cast<Scalar>(map.sample_size())
                                                    : Scalar(1);
  const Scalar k = scale / (per_item * static_cast<Scalar>(map.batch()));
  Tensor<Scalar> g(map.shape());
  g.array() = (map.array() - target).unaryExpr([k](Scalar v) { return k * detail::sign(v); });
  return g;
}

/// |g_real - 1| + |g_fake - 0|, each averaged over the batch.
template <typename Scalar>
Scalar disc_global_loss(const ArrayX<Scalar>& g_real, const ArrayX<Scalar>& g_fake) {
  return l1_to_target(g_real, Scalar(1)) + l1_to_target(g_fake, Scalar(0));
}

template <typename Scalar>
Scalar disc_global_loss(Scalar g_real, Scalar g_fake) {
  if (!std::isfinite(g_real) || !std::isfinite(g_fake)) {
    throw NumericError("disc_global_loss: non-finite input");
  }
  return std::abs(g_real - Scalar(1)) + std::abs(g_fake);
}

/// Map term: reduce |map_real - 1| and |map_fake - 0| over pixels.
template <typename Scalar>
Scalar disc_local_loss(const Tensor<Scalar>& map_real, const Tensor<Scalar>& map_fake,
                       LocalReduction r = LocalReduction::mean) {
  return map_l1_to_target(map_real, Scalar(1), r) + map_l1_to_target(map_fake, Scalar(0), r);
}

/// Unit-weight combination of the global and map discriminator terms.
template <typename Scalar>
Scalar disc_total_loss(Scalar global_part, Scalar local_part) {
  if (!(global_part >= Scalar(0)) || !(local_part >= Scalar(0))) {
    throw NumericError("disc_total_loss: parts must be finite and >= 0");
  }
  return global_part + local_part;
}

/// |g_fake - 1| + pixel-reduced |map_fake - 1|; an empty map drops the local part.
template <typename Scalar>
Scalar gen_adv_loss(const ArrayX<Scalar>& g_fake, const Tensor<Scalar>& map_fake,
                    LocalReduction r = LocalReduction::mean) {
  return l1_to_target(g_fake, Scalar(1)) + map_l1_to_target(map_fake, Scalar(1), r);
}

template <typename Scalar>
Scalar gen_adv_loss(Scalar g_fake, const Tensor<Scalar>& map_fake,
                    LocalReduction r = LocalReduction::mean) {
  ArrayX<Scalar> g(1);
  g[0] = g_fake;
  return gen_adv_loss(g, map_fake, r);
}

/// Pixel mean of |a - b|.
template <typename Scalar>
Scalar mean_abs_diff(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError("shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  detail::require_finite<Scalar>(a.data(), "mean_abs_diff");
  detail::require_finite<Scalar>(b.data(), "mean_abs_diff");
  return (a.array() - b.array()).abs().mean();
}

/// d/d(cycled) of scale * mean|cycled - real|.
template <typename Scalar>
Tensor<Scalar> mean_abs_diff_grad(const Tensor<Scalar>& cycled, const Tensor<Scalar>& real,
                                  Scalar scale) {
  const Scalar k = scale / static_cast<Scalar>(cycled.size());
  Tensor<Scalar> g(cycled.shape());
  g.array() = (cycled.array() - real.array()).unaryExpr([k](Scalar v) {
    return k * detail::sign(v);
  });
  return g;
}

template <typename Scalar>
Scalar cycle_loss(const Tensor<Scalar>& x_real, const Tensor<Scalar>& x_cycled,
                  const Tensor<Scalar>& y_real, const Tensor<Scalar>& y_cycled) {
  return mean_abs_diff(x_cycled, x_real) + mean_abs_diff(y_cycled, y_real);
}

/// L_DY + L_GY + L_DX + L_GX + lambda_cyc * L_cyc.
inline double total_loss(const LossBreakdown& parts, const LossWeights& w) {
  return parts.xy.d_total + parts.xy.g_adv + parts.yx.d_total + parts.yx.g_adv +
         w.cycle * parts.cycle;
}

/// Fills d_total, g_adv and total from the raw terms.
inline void finalize(LossBreakdown& b, const LossWeights& w) {
  for (auto* d : {&b.xy, &b.yx}) {
    d->d_total = w.global * d->d_global + w.local * d->d_local;
    d->g_adv = w.global * d->g_global + w.local * d->g_local;
  }
  b.total = total_loss(b, w);
}

}  // namespace fbgan
