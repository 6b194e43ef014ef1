#pragma once

// Forward/backward assembly of the bidirectional adversarial objective.
// X is the source domain (CBCT), Y the target domain (CT). gen_xy maps X->Y
// and is judged by disc_y; gen_yx maps Y->X and is judged by disc_x. With
// feedback, each generator receives its input concatenated with the
// probability map that the judging discriminator of its output domain
// assigns to that input.

#include "fbgan/losses.hpp"
#include "fbgan/models.hpp"
#include "fbgan/random.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace fbgan {

struct ModelSpec {
  Mode mode = Mode::feedback;
  bool feedback = true;    // generator receives the probability map
  bool local_head = true;  // discriminators carry the map head
  std::vector<Index> gen_widths{32, 64, 128, 256};
  std::vector<Index> disc_widths{32, 64, 128, 256};
  int convs_per_level = 2;

  static ModelSpec for_mode(Mode m) {
    ModelSpec s;
    s.mode = m;
    s.feedback = mode_uses_feedback(m);
    s.local_head = mode_has_local_head(m);
    return s;
  }

  Index size_multiple() const {
    const auto levels = std::max(gen_widths.size(), disc_widths.size());
    return Index(1) << (levels - 1);
  }

  void validate() const {
    if (feedback && !local_head) {
      throw ConfigurationError("feedback needs the discriminator's probability-map head");
    }
    if (gen_widths.empty() || disc_widths.empty()) {
      throw ConfigurationError("network widths must be non-empty");
    }
  }
};

template <typename Scalar>
struct ModelBundle {
  ModelSpec spec;
  Generator<Scalar> gen_xy, gen_yx;
  Discriminator<Scalar> disc_y, disc_x;

  static std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    return derive_seed(seed, stream);
  }

  ModelBundle() = default;
  ModelBundle(ModelSpec s, std::uint64_t seed) : spec(std::move(s)) {
    spec.validate();
    const Index gin = spec.feedback ? 2 : 1;
    gen_xy = Generator<Scalar>({gin, spec.gen_widths, spec.convs_per_level});
    gen_yx = Generator<Scalar>({gin, spec.gen_widths, spec.convs_per_level});
    disc_y = Discriminator<Scalar>({spec.disc_widths, spec.convs_per_level, spec.local_head});
    disc_x = Discriminator<Scalar>({spec.disc_widths, spec.convs_per_level, spec.local_head});
    std::mt19937_64 r0(stream_seed(seed, 0)), r1(stream_seed(seed, 1)), r2(stream_seed(seed, 2)),
        r3(stream_seed(seed, 3));
    gen_xy.init(r0);
    gen_yx.init(r1);
    disc_y.init(r2);
    disc_x.init(r3);
  }

  std::vector<ParamRef<Scalar>> generator_params() {
    auto a = gen_xy.parameters("gen_xy");
    auto b = gen_yx.parameters("gen_yx");
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  std::vector<ParamRef<Scalar>> discriminator_params() {
    auto a = disc_y.parameters("disc_y");
    auto b = disc_x.parameters("disc_x");
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }
  std::vector<ParamRef<Scalar>> all_params() {
    auto a = generator_params();
    auto b = discriminator_params();
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  /// Generator input for translating `x` with `gen`, whose output domain is judged by `disc`.
  Tensor<Scalar> generator_input(const Discriminator<Scalar>& disc, const Tensor<Scalar>& x) const {
    if (!spec.feedback) return x;
    return concat_channels(x, disc.forward(x).map);
  }
};

template <typename Scalar>
void zero_grads(std::vector<ParamRef<Scalar>> params) {
  for (auto& p : params) p.grad->setZero();
}

/// Fakes of both directions plus the tapes needed to backpropagate into the generators.
template <typename Scalar>
struct Translation {
  Tensor<Scalar> map_x;   // disc_y's map of the real X batch (feedback only)
  Tensor<Scalar> map_y;   // disc_x's map of the real Y batch (feedback only)
  Tensor<Scalar> y_fake;  // gen_xy output
  Tensor<Scalar> x_fake;  // gen_yx output
  GeneratorTape<Scalar> tape_xy, tape_yx;
};

/// Maps consumed by the cycle reconstructions. Held fixed by callers that
/// need the objective as a function of generator parameters only.
template <typename Scalar>
struct CycleMaps {
  Tensor<Scalar> for_x_rec;  // disc_x map of y_fake
  Tensor<Scalar> for_y_rec;  // disc_y map of x_fake
};

template <typename Scalar>
Translation<Scalar> translate_both(const ModelBundle<Scalar>& m, const Tensor<Scalar>& x_real,
                                   const Tensor<Scalar>& y_real) {
  Translation<Scalar> t;
  Tensor<Scalar> in_xy = x_real, in_yx = y_real;
  if (m.spec.feedback) {
    t.map_x = m.disc_y.forward(x_real).map;
    t.map_y = m.disc_x.forward(y_real).map;
    in_xy = concat_channels(x_real, t.map_x);
    in_yx = concat_channels(y_real, t.map_y);
  }
  t.y_fake = m.gen_xy.forward(in_xy, &t.tape_xy);
  t.x_fake = m.gen_yx.forward(in_yx, &t.tape_yx);
  return t;
}

namespace detail {

/// Runs `f`, prefixing any numeric failure with the loss term it belongs to.
template <typename F>
auto labelled(const std::string& term, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError(term + ": " + e.what());
  }
}

/// Terms of one discriminator on a (real, fake) pair; optionally accumulates
/// its parameter gradients with the fakes held constant.
template <typename Scalar>
void disc_terms(Discriminator<Scalar>& d, const Tensor<Scalar>& real, const Tensor<Scalar>& fake,
                const LossWeights& w, DirectionLosses& out, bool backward,
                std::vector<std::uint8_t>* kinks, const std::string& dir) {
  DiscriminatorTape<Scalar> tr, tf;
  const bool keep = backward || kinks;
  const auto o_real = d.forward(real, keep ? &tr : nullptr);
  const auto o_fake = d.forward(fake, keep ? &tf : nullptr);
  if (kinks) {
    tr.append_kinks(*kinks);
    tf.append_kinks(*kinks);
  }
  out.d_global = labelled(dir + ".d_global", [&] {
    return static_cast<double>(disc_global_loss(o_real.global, o_fake.global));
  });
  out.d_local = labelled(dir + ".d_local", [&] {
    return d.has_local_head()
               ? static_cast<double>(disc_local_loss(o_real.map, o_fake.map, w.reduction))
               : 0.0;
  });
  if (!backward) return;

  const auto wg = static_cast<Scalar>(w.global), wl = static_cast<Scalar>(w.local);
  const BackwardFlags params_only{false, true};
  const bool use_map = d.has_local_head() && w.local != 0.0;
  Tensor<Scalar> gm_real, gm_fake;
  if (use_map) {
    gm_real = map_l1_to_target_grad(o_real.map, Scalar(1), w.reduction, wl);
    gm_fake = map_l1_to_target_grad(o_fake.map, Scalar(0), w.reduction, wl);
  }
  d.backward(tr, l1_to_target_grad(o_real.global, Scalar(1), wg), use_map ? &gm_real : nullptr,
             params_only);
  d.backward(tf, l1_to_target_grad(o_fake.global, Scalar(0), wg), use_map ? &gm_fake : nullptr,
             params_only);
}

}  // namespace detail

/// Discriminator objective with fakes treated as constants. When `backward`
/// is set, discriminator gradients are zeroed and then accumulated.
template <typename Scalar>
void disc_objective(ModelBundle<Scalar>& m, const Tensor<Scalar>& x_real,
                    const Tensor<Scalar>& y_real, const Translation<Scalar>& t,
                    const LossWeights& w, LossBreakdown& out, bool backward,
                    std::vector<std::uint8_t>* kinks = nullptr) {
  if (backward) zero_grads(m.discriminator_params());
  detail::disc_terms(m.disc_y, y_real, t.y_fake, w, out.xy, backward, kinks, "xy");
  detail::disc_terms(m.disc_x, x_real, t.x_fake, w, out.yx, backward, kinks, "yx");
}

/// Generator objective: adversarial terms against both discriminators plus
/// lambda_cyc times the cycle term. Feedback maps are detached: no gradient
/// reaches discriminator parameters, and discriminator gradient buffers are
/// left untouched. `frozen`, when given, supplies the cycle maps instead of
/// recomputing them. Returns the cycle maps that were used.
template <typename Scalar>
CycleMaps<Scalar> gen_objective(ModelBundle<Scalar>& m, const Tensor<Scalar>& x_real,
                                const Tensor<Scalar>& y_real, Translation<Scalar>& t,
                                const LossWeights& w, LossBreakdown& out, bool backward,
                                const CycleMaps<Scalar>* frozen = nullptr,
                                std::vector<std::uint8_t>* kinks = nullptr) {
  if (backward) zero_grads(m.generator_params());
  const bool keep = backward || kinks;
  const auto wg = static_cast<Scalar>(w.global), wl = static_cast<Scalar>(w.local);
  const BackwardFlags input_only{true, false};

  // Adversarial terms.
  auto adversarial = [&](Discriminator<Scalar>& d, const Tensor<Scalar>& fake,
                         DirectionLosses& dl, const std::string& dir) -> Tensor<Scalar> {
    DiscriminatorTape<Scalar> tape;
    const auto o = d.forward(fake, keep ? &tape : nullptr);
    if (kinks) tape.append_kinks(*kinks);
    dl.g_global = detail::labelled(dir + ".g_global", [&] {
      return static_cast<double>(l1_to_target(o.global, Scalar(1)));
    });
    dl.g_local = detail::labelled(dir + ".g_local", [&] {
      return d.has_local_head()
                 ? static_cast<double>(map_l1_to_target(o.map, Scalar(1), w.reduction))
                 : 0.0;
    });
    if (!backward) return {};
    const bool use_map = d.has_local_head() && w.local != 0.0;
    Tensor<Scalar> gm;
    if (use_map) gm = map_l1_to_target_grad(o.map, Scalar(1), w.reduction, wl);
    return d.backward(tape, l1_to_target_grad(o.global, Scalar(1), wg), use_map ? &gm : nullptr,
                      input_only);
  };
  Tensor<Scalar> d_yfake = adversarial(m.disc_y, t.y_fake, out.xy, "xy");
  Tensor<Scalar> d_xfake = adversarial(m.disc_x, t.x_fake, out.yx, "yx");

  // Cycle reconstructions.
  CycleMaps<Scalar> maps;
  Tensor<Scalar> in_x_rec = t.y_fake, in_y_rec = t.x_fake;
  if (m.spec.feedback) {
    maps.for_x_rec = frozen ? frozen->for_x_rec : m.disc_x.forward(t.y_fake).map;
    maps.for_y_rec = frozen ? frozen->for_y_rec : m.disc_y.forward(t.x_fake).map;
    in_x_rec = concat_channels(t.y_fake, maps.for_x_rec);
    in_y_rec = concat_channels(t.x_fake, maps.for_y_rec);
  }
  GeneratorTape<Scalar> tape_x_rec, tape_y_rec;
  const auto x_rec = m.gen_yx.forward(in_x_rec, keep ? &tape_x_rec : nullptr);
  const auto y_rec = m.gen_xy.forward(in_y_rec, keep ? &tape_y_rec : nullptr);
  out.cycle = detail::labelled("cycle", [&] {
    return static_cast<double>(cycle_loss(x_real, x_rec, y_real, y_rec));
  });
  finalize(out, w);
  if (kinks) {
    t.tape_xy.append_kinks(*kinks);
    t.tape_yx.append_kinks(*kinks);
    tape_x_rec.append_kinks(*kinks);
    tape_y_rec.append_kinks(*kinks);
    for (auto [a, b] : {std::pair{&x_rec, &x_real}, std::pair{&y_rec, &y_real}}) {
      for (Index i = 0; i < a->size(); ++i) kinks->push_back(a->data()[i] > b->data()[i] ? 1 : 0);
    }
  }
  if (!backward) return maps;

  const auto lc = static_cast<Scalar>(w.cycle);
  const BackwardFlags both{true, true};
  // x -> y_fake -> x_rec: gradient into gen_yx params and, through its image channel, y_fake.
  Tensor<Scalar> g_in = m.gen_yx.backward(tape_x_rec, mean_abs_diff_grad(x_rec, x_real, lc), both);
  d_yfake.data() += slice_channels(g_in, 0, 1).data();
  g_in = m.gen_xy.backward(tape_y_rec, mean_abs_diff_grad(y_rec, y_real, lc), both);
  d_xfake.data() += slice_channels(g_in, 0, 1).data();

  const BackwardFlags params_only{false, true};
  m.gen_xy.backward(t.tape_xy, d_yfake, params_only);
  m.gen_yx.backward(t.tape_yx, d_xfake, params_only);
  return maps;
}

/// Sum of every term (both directions, discriminator and generator parts,
/// weighted cycle) with nothing detached: maps and fakes carry gradients back
/// into every network. Used to verify the backward passes end to end.
template <typename Scalar>
Scalar full_objective(ModelBundle<Scalar>& m, const Tensor<Scalar>& x_real,
                      const Tensor<Scalar>& y_real, const LossWeights& w, bool backward,
                      std::vector<std::uint8_t>* kinks = nullptr) {
  if (backward) zero_grads(m.all_params());
  const auto wg = static_cast<Scalar>(w.global), wl = static_cast<Scalar>(w.local);
  const auto lc = static_cast<Scalar>(w.cycle);
  const BackwardFlags both{true, true};
  const bool fb = m.spec.feedback;

  // Generator with optional feedback; keeps tapes for the backward pass.
  struct Gen {
    DiscriminatorTape<Scalar> map_tape;
    Tensor<Scalar> map;
    GeneratorTape<Scalar> tape;
    Tensor<Scalar> out;
  };
  auto run_gen = [&](Generator<Scalar>& g, Discriminator<Scalar>& d, const Tensor<Scalar>& in) {
    Gen r;
    Tensor<Scalar> gin = in;
    if (fb) {
      r.map = d.forward(in, &r.map_tape).map;
      gin = concat_channels(in, r.map);
    }
    r.out = g.forward(gin, &r.tape);
    return r;
  };
  // Backprop d(out) through generator and map path; returns d(in).
  auto back_gen = [&](Generator<Scalar>& g, Discriminator<Scalar>& d, const Gen& r,
                      const Tensor<Scalar>& g_out) {
    Tensor<Scalar> g_in = g.backward(r.tape, g_out, both);
    Tensor<Scalar> d_img = slice_channels(g_in, 0, 1);
    if (fb) {
      const Tensor<Scalar> d_map = slice_channels(g_in, 1, 1);
      Tensor<Scalar> via_map =
          d.backward(r.map_tape, ArrayX<Scalar>::Zero(g_out.batch()), &d_map, both);
      d_img.data() += via_map.data();
    }
    return d_img;
  };

  Gen fy = run_gen(m.gen_xy, m.disc_y, x_real);
  Gen fx = run_gen(m.gen_yx, m.disc_x, y_real);
  Gen rx = run_gen(m.gen_yx, m.disc_x, fy.out);  // reconstruction of x_real
  Gen ry = run_gen(m.gen_xy, m.disc_y, fx.out);  // reconstruction of y_real

  Scalar total(0);
  Tensor<Scalar> d_fy(fy.out.shape()), d_fx(fx.out.shape());

  // Discriminator terms on reals, and the fake terms shared by both players.
  auto judge = [&](Discriminator<Scalar>& d, const Tensor<Scalar>& real, const Tensor<Scalar>& fake,
                   Tensor<Scalar>& d_fake) {
    DiscriminatorTape<Scalar> tr, tf;
    const auto o_r = d.forward(real, &tr);
    const auto o_f = d.forward(fake, &tf);
    Scalar s = wg * (l1_to_target(o_r.global, Scalar(1)) + l1_to_target(o_f.global, Scalar(0)) +
                     l1_to_target(o_f.global, Scalar(1)));
    if (d.has_local_head()) {
      s += wl * (map_l1_to_target(o_r.map, Scalar(1), w.reduction) +
                 map_l1_to_target(o_f.map, Scalar(0), w.reduction) +
                 map_l1_to_target(o_f.map, Scalar(1), w.reduction));
    }
    if (kinks) {
      tr.append_kinks(*kinks);
      tf.append_kinks(*kinks);
    }
    if (!backward) return s;
    Tensor<Scalar> gm_r, gm_f;
    if (d.has_local_head()) {
      gm_r = map_l1_to_target_grad(o_r.map, Scalar(1), w.reduction, wl);
      gm_f = map_l1_to_target_grad(o_f.map, Scalar(0), w.reduction, wl);
      gm_f.data() += map_l1_to_target_grad(o_f.map, Scalar(1), w.reduction, wl).data();
    }
    d.backward(tr, l1_to_target_grad(o_r.global, Scalar(1), wg),
               d.has_local_head() ? &gm_r : nullptr, both);
    const ArrayX<Scalar> gg = l1_to_target_grad(o_f.global, Scalar(0), wg) +
                              l1_to_target_grad(o_f.global, Scalar(1), wg);
    d_fake.data() += d.backward(tf, gg, d.has_local_head() ? &gm_f : nullptr, both).data();
    return s;
  };
  total += judge(m.disc_y, y_real, fy.out, d_fy);
  total += judge(m.disc_x, x_real, fx.out, d_fx);
  total += lc * cycle_loss(x_real, rx.out, y_real, ry.out);

  if (kinks) {
    for (const Gen* g : {&fy, &fx, &rx, &ry}) {
      g->tape.append_kinks(*kinks);
      if (fb) g->map_tape.append_kinks(*kinks);
    }
    for (auto [a, b] : {std::pair{&rx.out, &x_real}, std::pair{&ry.out, &y_real}}) {
      for (Index i = 0; i < a->size(); ++i) kinks->push_back(a->data()[i] > b->data()[i] ? 1 : 0);
    }
  }
  if (!backward) return total;

  d_fy.data() += back_gen(m.gen_yx, m.disc_x, rx, mean_abs_diff_grad(rx.out, x_real, lc)).data();
  d_fx.data() += back_gen(m.gen_xy, m.disc_y, ry, mean_abs_diff_grad(ry.out, y_real, lc)).data();
  back_gen(m.gen_xy, m.disc_y, fy, d_fy);
  back_gen(m.gen_yx, m.disc_x, fx, d_fx);
  return total;
}

}  // namespace fbgan
