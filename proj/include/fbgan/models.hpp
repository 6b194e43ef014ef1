#pragma once

#include "fbgan/layers.hpp"
#include "fbgan/tensor.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fbgan {

/// Which parts of the feedback mechanism a model bundle carries.
enum class Mode { feedback, unetgan, cyclegan };

std::string_view mode_name(Mode m);
Mode parse_mode(std::string_view name);

inline bool mode_has_local_head(Mode m) { return m != Mode::cyclegan; }
inline bool mode_uses_feedback(Mode m) { return m == Mode::feedback; }

struct UNetConfig {
  Index in_channels = 1;
  Index out_channels = 1;
  std::vector<Index> widths{32, 64, 128, 256};
  int convs_per_level = 2;
  bool instance_norm = false;
  bool decoder = true;

  /// Number of 2x poolings between the input and the bottleneck.
  Index pool_stages() const { return static_cast<Index>(widths.size()) - 1; }
  /// Spatial sizes must be divisible by this.
  Index size_multiple() const { return Index(1) << pool_stages(); }
  void validate() const;
};

inline void UNetConfig::validate() const {
  if (widths.empty()) throw ConfigurationError("network needs at least one level");
  for (auto w : widths) {
    if (w < 1) throw ConfigurationError("network widths must be positive");
  }
  if (convs_per_level < 1) throw ConfigurationError("convs_per_level must be >= 1");
  if (in_channels < 1 || out_channels < 1) throw ConfigurationError("channel counts must be >= 1");
}

template <typename Scalar>
struct BlockTape {
  ConvCache<Scalar> conv;
  NormCache<Scalar> norm;
  Tensor<Scalar> pre_act;
};

template <typename Scalar>
struct UNetTape {
  std::vector<std::vector<BlockTape<Scalar>>> enc, dec;
  std::vector<Index> skip_channels;
  ConvCache<Scalar> head;
  bool has_head = false;

  void append_kinks(std::vector<std::uint8_t>& out) const {
    for (const auto& level : enc) {
      for (const auto& b : level) append_signs(b.pre_act, out);
    }
    for (const auto& level : dec) {
      for (const auto& b : level) append_signs(b.pre_act, out);
    }
  }
};

template <typename Scalar>
struct UNetOutput {
  Tensor<Scalar> bottleneck;
  Tensor<Scalar> head;  // empty without a decoder
};

/// Encoder/decoder with skip connections: [conv3x3 -> (instance norm) ->
/// leaky ReLU] x convs_per_level per level, 2x average pooling down, nearest
/// 2x upsampling and concatenation with the skip on the way up, and a 1x1
/// projection head.
template <typename Scalar>
class UNet {
 public:
  static constexpr Scalar kSlope = Scalar(0.2);

  UNet() = default;
  explicit UNet(UNetConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    const auto levels = cfg_.widths.size();
    enc_.resize(levels);
    Index in = cfg_.in_channels;
    for (std::size_t l = 0; l < levels; ++l) {
      for (int b = 0; b < cfg_.convs_per_level; ++b) {
        enc_[l].emplace_back(in, cfg_.widths[l], 3);
        in = cfg_.widths[l];
      }
    }
    if (cfg_.decoder) {
      dec_.resize(levels - 1);
      for (std::size_t l = 0; l + 1 < levels; ++l) {
        Index din = cfg_.widths[l + 1] + cfg_.widths[l];
        for (int b = 0; b < cfg_.convs_per_level; ++b) {
          dec_[l].emplace_back(din, cfg_.widths[l], 3);
          din = cfg_.widths[l];
        }
      }
      head_ = Conv2d<Scalar>(cfg_.widths[0], cfg_.out_channels, 1);
    }
  }

  const UNetConfig& config() const { return cfg_; }

  /// Encoder first so that a decoder-less network shares the encoder's draws.
  void init_encoder(std::mt19937_64& rng) {
    for (auto& level : enc_) {
      for (auto& c : level) c.init(rng);
    }
  }
  void init_decoder(std::mt19937_64& rng, double head_scale) {
    for (auto& level : dec_) {
      for (auto& c : level) c.init(rng);
    }
    if (cfg_.decoder) head_.init(rng, head_scale);
  }

  void collect_encoder(const std::string& prefix, std::vector<ParamRef<Scalar>>& out) {
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      for (std::size_t b = 0; b < enc_[l].size(); ++b) {
        enc_[l][b].collect(prefix + ".enc" + std::to_string(l) + "." + std::to_string(b), out);
      }
    }
  }
  void collect_decoder(const std::string& prefix, std::vector<ParamRef<Scalar>>& out) {
    for (std::size_t l = 0; l < dec_.size(); ++l) {
      for (std::size_t b = 0; b < dec_[l].size(); ++b) {
        dec_[l][b].collect(prefix + ".dec" + std::to_string(l) + "." + std::to_string(b), out);
      }
    }
    if (cfg_.decoder) head_.collect(prefix + ".head", out);
  }

  void check_input(const Tensor<Scalar>& x) const {
    if (x.channels() != cfg_.in_channels) {
      throw ShapeError("network expects " + std::to_string(cfg_.in_channels) +
                       " input channels, got " + std::to_string(x.channels()));
    }
    const Index m = cfg_.size_multiple();
    if (x.rows() % m != 0 || x.cols() % m != 0 || x.rows() < m || x.cols() < m) {
      throw ShapeError("spatial dims " + to_string(x.shape()) + " must be multiples of " +
                       std::to_string(m));
    }
  }

  UNetOutput<Scalar> forward(const Tensor<Scalar>& x, UNetTape<Scalar>* tape) const {
    check_input(x);
    const auto levels = enc_.size();
    if (tape) {
      tape->enc.assign(levels, {});
      tape->dec.assign(dec_.size(), {});
      tape->skip_channels.clear();
    }
    std::vector<Tensor<Scalar>> skips;
    Tensor<Scalar> h = x;
    for (std::size_t l = 0; l < levels; ++l) {
      if (l > 0) h = avg_pool2(h);
      for (std::size_t b = 0; b < enc_[l].size(); ++b) {
        BlockTape<Scalar>* bt = nullptr;
        if (tape) bt = &tape->enc[l].emplace_back();
        h = block_forward(enc_[l][b], h, bt);
      }
      if (cfg_.decoder && l + 1 < levels) skips.push_back(h);
    }
    UNetOutput<Scalar> out;
    out.bottleneck = h;
    if (!cfg_.decoder) return out;

    for (std::size_t li = dec_.size(); li-- > 0;) {
      h = concat_channels(upsample2(h), skips[li]);
      if (tape) tape->skip_channels.push_back(skips[li].channels());
      for (std::size_t b = 0; b < dec_[li].size(); ++b) {
        BlockTape<Scalar>* bt = nullptr;
        if (tape) bt = &tape->dec[li].emplace_back();
        h = block_forward(dec_[li][b], h, bt);
      }
    }
    out.head = head_.forward(h, tape ? &tape->head : nullptr);
    if (tape) tape->has_head = true;
    return out;
  }

  /// Either gradient may be empty. Returns d/d(input) when requested.
  Tensor<Scalar> backward(const UNetTape<Scalar>& tape, const Tensor<Scalar>* d_bottleneck,
                          const Tensor<Scalar>* d_head, BackwardFlags flags) {
    const auto levels = enc_.size();
    std::vector<Tensor<Scalar>> d_skips(levels);
    Tensor<Scalar> dh;
    const BackwardFlags inner{true, flags.param_grads};

    if (cfg_.decoder && d_head && !d_head->empty()) {
      dh = head_.backward(tape.head, *d_head, inner);
      for (std::size_t li = 0; li < dec_.size(); ++li) {
        for (std::size_t b = dec_[li].size(); b-- > 0;) {
          dh = block_backward(dec_[li][b], tape.dec[li][b], dh, inner);
        }
        const Index skip_c = tape.skip_channels[dec_.size() - 1 - li];
        const Index up_c = dh.channels() - skip_c;
        d_skips[li] = slice_channels(dh, up_c, skip_c);
        dh = upsample2_backward(slice_channels(dh, 0, up_c));
      }
    }
    if (d_bottleneck && !d_bottleneck->empty()) {
      if (dh.empty()) {
        dh = *d_bottleneck;
      } else {
        dh.data() += d_bottleneck->data();
      }
    }
    if (dh.empty()) return {};

    for (std::size_t l = levels; l-- > 0;) {
      if (!d_skips[l].empty()) dh.data() += d_skips[l].data();
      for (std::size_t b = enc_[l].size(); b-- > 0;) {
        const bool first = (l == 0 && b == 0);
        BackwardFlags f = inner;
        if (first) f.input_grad = flags.input_grad;
        dh = block_backward(enc_[l][b], tape.enc[l][b], dh, f);
      }
      if (l > 0) dh = avg_pool2_backward(dh);
    }
    return dh;
  }

 private:
  Tensor<Scalar> block_forward(const Conv2d<Scalar>& conv, const Tensor<Scalar>& x,
                               BlockTape<Scalar>* bt) const {
    Tensor<Scalar> h = conv.forward(x, bt ? &bt->conv : nullptr);
    if (cfg_.instance_norm) h = instance_norm(h, bt ? &bt->norm : nullptr);
    if (bt) bt->pre_act = h;
    return leaky_relu(h, kSlope);
  }

  Tensor<Scalar> block_backward(Conv2d<Scalar>& conv, const BlockTape<Scalar>& bt,
                                const Tensor<Scalar>& gy, BackwardFlags flags) {
    Tensor<Scalar> g = leaky_relu_backward(bt.pre_act, gy, kSlope);
    if (cfg_.instance_norm) g = instance_norm_backward(bt.norm, g);
    return conv.backward(bt.conv, g, flags);
  }

  UNetConfig cfg_;
  std::vector<std::vector<Conv2d<Scalar>>> enc_, dec_;
  Conv2d<Scalar> head_;
};

// ----------------------------------------------------------------- generator

struct GeneratorConfig {
  Index in_channels = 2;  // image + probability map in feedback mode
  std::vector<Index> widths{32, 64, 128, 256};
  int convs_per_level = 2;

  UNetConfig unet() const {
    return {in_channels, 1, widths, convs_per_level, /*instance_norm=*/true, /*decoder=*/true};
  }
};

template <typename Scalar>
struct GeneratorTape {
  UNetTape<Scalar> unet;
  Tensor<Scalar> pre_clamp;
  Index in_channels = 0;

  void append_kinks(std::vector<std::uint8_t>& out) const {
    unet.append_kinks(out);
    for (Index i = 0; i < pre_clamp.size(); ++i) {
      const Scalar v = pre_clamp.data()[i];
      out.push_back(v < Scalar(-1) ? 0 : (v > Scalar(1) ? 2 : 1));
    }
  }
};

/// Residual U-net translator: output = clamp(image + U(input), -1, 1), where
/// the image is input channel 0 and any extra channel is the feedback map.
template <typename Scalar>
class Generator {
 public:
  Generator() = default;
  explicit Generator(GeneratorConfig cfg) : cfg_(std::move(cfg)), net_(cfg_.unet()) {}

  const GeneratorConfig& config() const { return cfg_; }

  void init(std::mt19937_64& rng) {
    net_.init_encoder(rng);
    net_.init_decoder(rng, 0.1);
  }

  std::vector<ParamRef<Scalar>> parameters(const std::string& prefix) {
    std::vector<ParamRef<Scalar>> out;
    net_.collect_encoder(prefix, out);
    net_.collect_decoder(prefix, out);
    return out;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, GeneratorTape<Scalar>* tape = nullptr) const {
    auto u = net_.forward(x, tape ? &tape->unet : nullptr);
    Tensor<Scalar> pre = std::move(u.head);
    for (Index n = 0; n < x.batch(); ++n) pre.sample(n).row(0) += x.sample(n).row(0);
    Tensor<Scalar> y(pre.shape());
    y.array() = pre.array().max(Scalar(-1)).min(Scalar(1));
    if (tape) {
      tape->pre_clamp = std::move(pre);
      tape->in_channels = x.channels();
    }
    return y;
  }

  Tensor<Scalar> backward(const GeneratorTape<Scalar>& tape, const Tensor<Scalar>& gy,
                          BackwardFlags flags) {
    Tensor<Scalar> g(gy.shape());
    g.array() = (tape.pre_clamp.array().abs() <= Scalar(1)).select(gy.array(), Scalar(0));
    Tensor<Scalar> gx = net_.backward(tape.unet, nullptr, &g, flags);
    if (flags.input_grad) {
      for (Index n = 0; n < g.batch(); ++n) gx.sample(n).row(0) += g.sample(n).row(0);
    }
    return gx;
  }

 private:
  GeneratorConfig cfg_;
  UNet<Scalar> net_;
};

// ------------------------------------------------------------- discriminator

struct DiscriminatorConfig {
  std::vector<Index> widths{32, 64, 128, 256};
  int convs_per_level = 2;
  bool local_head = true;

  UNetConfig unet() const {
    return {1, 1, widths, convs_per_level, /*instance_norm=*/false, /*decoder=*/local_head};
  }
};

/// Global verdict per item and, when the local head exists, a per-pixel
/// probability map with the input's spatial dims. Both lie in (0, 1).
template <typename Scalar>
struct DualDiscOutput {
  ArrayX<Scalar> global;
  Tensor<Scalar> map;
};

template <typename Scalar>
struct DiscriminatorTape {
  UNetTape<Scalar> unet;
  Shape4 bottleneck_shape;
  MatrixX<Scalar> pooled;  // channels × batch
  ArrayX<Scalar> global;
  Tensor<Scalar> map;

  void append_kinks(std::vector<std::uint8_t>& out) const { unet.append_kinks(out); }
};

/// U-net discriminator with a global head (spatial mean of the bottleneck,
/// affine, sigmoid) and a local head (decoder, 1x1 projection, sigmoid).
template <typename Scalar>
class Discriminator {
 public:
  Discriminator() = default;
  explicit Discriminator(DiscriminatorConfig cfg)
      : cfg_(std::move(cfg)), net_(cfg_.unet()), global_(cfg_.widths.back(), 1) {}

  const DiscriminatorConfig& config() const { return cfg_; }
  bool has_local_head() const { return cfg_.local_head; }

  void init(std::mt19937_64& rng) {
    net_.init_encoder(rng);
    global_.init(rng);
    net_.init_decoder(rng, 1.0);
  }

  std::vector<ParamRef<Scalar>> parameters(const std::string& prefix) {
    std::vector<ParamRef<Scalar>> out;
    net_.collect_encoder(prefix, out);
    global_.collect(prefix + ".global", out);
    net_.collect_decoder(prefix, out);
    return out;
  }

  DualDiscOutput<Scalar> forward(const Tensor<Scalar>& x,
                                 DiscriminatorTape<Scalar>* tape = nullptr) const {
    if (x.channels() != 1) {
      throw ShapeError("discriminator expects 1 channel, got " + std::to_string(x.channels()));
    }
    auto u = net_.forward(x, tape ? &tape->unet : nullptr);
    DualDiscOutput<Scalar> out;
    MatrixX<Scalar> pooled = spatial_mean(u.bottleneck);
    out.global = sigmoid<Scalar>(global_.forward(pooled).row(0).transpose().array());
    if (cfg_.local_head) {
      out.map = Tensor<Scalar>(u.head.shape());
      out.map.array() = sigmoid<Scalar>(u.head.array());
    }
    if (tape) {
      tape->bottleneck_shape = u.bottleneck.shape();
      tape->pooled = std::move(pooled);
      tape->global = out.global;
      tape->map = out.map;
    }
    return out;
  }

  /// `d_map` may be empty (or null) when the local term does not contribute.
  Tensor<Scalar> backward(const DiscriminatorTape<Scalar>& tape, const ArrayX<Scalar>& d_global,
                          const Tensor<Scalar>* d_map, BackwardFlags flags) {
    const BackwardFlags inner{true, flags.param_grads};
    const ArrayX<Scalar> d_logit = sigmoid_backward<Scalar>(tape.global, d_global);
    MatrixX<Scalar> d_pooled = global_.backward(tape.pooled, d_logit.matrix().transpose(), inner);
    Tensor<Scalar> d_bottleneck = spatial_mean_backward<Scalar>(d_pooled, tape.bottleneck_shape);

    Tensor<Scalar> d_head;
    if (cfg_.local_head && d_map && !d_map->empty()) {
      d_head = Tensor<Scalar>(d_map->shape());
      d_head.array() = sigmoid_backward<Scalar>(tape.map.array(), d_map->array());
    }
    return net_.backward(tape.unet, &d_bottleneck, d_head.empty() ? nullptr : &d_head, flags);
  }

 private:
  DiscriminatorConfig cfg_;
  UNet<Scalar> net_;
  Linear<Scalar> global_;
};

inline std::string_view mode_name(Mode m) {
  switch (m) {
    case Mode::feedback: return "feedback";
    case Mode::unetgan: return "unetgan";
    case Mode::cyclegan: return "cyclegan";
  }
  return "feedback";
}

inline Mode parse_mode(std::string_view name) {
  if (name == "feedback") return Mode::feedback;
  if (name == "unetgan") return Mode::unetgan;
  if (name == "cyclegan") return Mode::cyclegan;
  throw ConfigurationError("unknown mode '" + std::string(name) + "'");
}

}  // namespace fbgan
