#include "fbgan/phantom.hpp"

#include "fbgan/error.hpp"
#include "fbgan/io.hpp"
#include "fbgan/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstdio>
#include <random>

namespace fbgan {

namespace {

bool finite_all(std::initializer_list<double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double ellipsoid_volume(const Ellipsoid& e) { return e.radii.prod(); }

}  // namespace

void PhantomSpec::validate() const {
  for (auto d : shape) {
    if (d < 1) throw ValidationError("phantom shape must be positive");
  }
  for (double s : spacing) {
    if (!(s > 0.0)) throw ValidationError("phantom spacing must be positive");
  }
  if ((body.radii.array() <= 0.0).any()) throw ValidationError("body radii must be positive");
  if (!std::isfinite(texture_sd) || texture_sd < 0.0) {
    throw ValidationError("texture_sd must be finite and >= 0");
  }
  for (const auto& inc : inclusions) {
    if ((inc.radii.array() <= 0.0).any() || !inc.radii.allFinite()) {
      throw ValidationError("inclusion '" + inc.label + "' has non-positive radii");
    }
    if (!(inc.hu >= -1000.0 && inc.hu <= 1000.0)) {
      throw ValidationError("inclusion '" + inc.label + "' HU outside [-1000, 1000]");
    }
    for (int a = 0; a < 3; ++a) {
      const double lo = inc.center[a] - inc.radii[a];
      const double hi = inc.center[a] + inc.radii[a];
      if (lo < -0.5 || hi > static_cast<double>(shape[a]) - 0.5) {
        throw ValidationError("inclusion '" + inc.label + "' extends outside the grid");
      }
    }
  }
}

int PhantomSpec::find(const std::string& label) const {
  for (std::size_t i = 0; i < inclusions.size(); ++i) {
    if (inclusions[i].label == label) return static_cast<int>(i);
  }
  return -1;
}

PhantomSpec PhantomSpec::shifted(double dy, double dx) const {
  PhantomSpec out = *this;
  const Eigen::Vector3d d(0.0, dy, dx);
  out.body.center += d;
  for (auto& inc : out.inclusions) inc.center += d;
  return out;
}

void ArtifactParams::validate() const {
  if (!finite_all({global_shift, cupping_amp, streak_amp, noise_sd})) {
    throw ValidationError("artifact parameters must be finite");
  }
  if (cupping_amp < 0.0 || streak_amp < 0.0 || noise_sd < 0.0) {
    throw ValidationError("artifact amplitudes must be >= 0");
  }
  if (streak_count < 1) throw ValidationError("streak_count must be positive");
}

Volume make_ct_phantom(const PhantomSpec& spec) {
  spec.validate();
  Volume vol(spec.shape[0], spec.shape[1], spec.shape[2], kAirHU);
  vol.spacing = spec.spacing;
  vol.modality = Modality::CT;

  // Smallest inclusion first so the first hit is the innermost one.
  std::vector<const Ellipsoid*> order;
  for (const auto& inc : spec.inclusions) order.push_back(&inc);
  std::stable_sort(order.begin(), order.end(), [](const Ellipsoid* a, const Ellipsoid* b) {
    return ellipsoid_volume(*a) < ellipsoid_volume(*b);
  });

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> texture(0.0, 1.0);

  for (Eigen::Index z = 0; z < vol.depth(); ++z) {
    for (Eigen::Index y = 0; y < vol.rows(); ++y) {
      for (Eigen::Index x = 0; x < vol.cols(); ++x) {
        const double zd = static_cast<double>(z), yd = static_cast<double>(y),
                     xd = static_cast<double>(x);
        double hu = kAirHU;
        bool inside = false;
        for (const auto* inc : order) {
          if (inc->contains(zd, yd, xd)) {
            hu = inc->hu;
            inside = true;
            break;
          }
        }
        const bool in_body = spec.body.contains(zd, yd, xd);
        if (!inside && in_body) hu = spec.body.hu;
        if (spec.texture_sd > 0.0 && in_body) hu += spec.texture_sd * texture(rng);
        vol(z, y, x) = static_cast<float>(hu);
      }
    }
  }
  return vol;
}

Eigen::Array<bool, Eigen::Dynamic, 1> body_mask(const Volume& vol) {
  return vol.data > kBodyThresholdHU;
}

Volume degrade_to_cbct(const Volume& ct, const ArtifactParams& p) {
  ct.validate();
  p.validate();
  Volume out = ct;
  out.modality = Modality::CBCT;

  const Eigen::Index ny = ct.rows(), nx = ct.cols();
  const double cy = 0.5 * static_cast<double>(ny - 1);
  const double cx = 0.5 * static_cast<double>(nx - 1);
  const double rim = ct.fov_radius_px.value_or(0.5 * static_cast<double>(std::min(ny, nx)));

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  std::vector<double> phase(static_cast<std::size_t>(ct.depth()));
  for (auto& ph : phase) ph = phase_dist(rng);
  std::normal_distribution<double> noise(0.0, 1.0);

  const auto mask = body_mask(ct);
  for (Eigen::Index z = 0; z < ct.depth(); ++z) {
    for (Eigen::Index y = 0; y < ny; ++y) {
      for (Eigen::Index x = 0; x < nx; ++x) {
        const auto i = ct.index(z, y, x);
        if (!mask[i]) continue;
        const double dy = static_cast<double>(y) - cy;
        const double dx = static_cast<double>(x) - cx;
        double v = ct.data[i] + p.global_shift;
        if (p.cupping_amp > 0.0 && rim > 0.0) {
          const double rr = (dy * dy + dx * dx) / (rim * rim);
          v += p.cupping_amp * rr;
        }
        if (p.streak_amp > 0.0) {
          const double theta = std::atan2(dy, dx);
          v += p.streak_amp * std::sin(p.streak_count * theta + phase[static_cast<std::size_t>(z)]);
        }
        if (p.noise_sd > 0.0) v += p.noise_sd * noise(rng);
        out.data[i] = static_cast<float>(v);
      }
    }
  }
  return out;
}

PhantomSpec random_pelvis_spec(std::array<Eigen::Index, 3> shape, std::uint64_t seed,
                               double texture_sd) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);

  const double nz = static_cast<double>(shape[0]);
  const double ny = static_cast<double>(shape[1]);
  const double nx = static_cast<double>(shape[2]);
  const double cz = 0.5 * (nz - 1.0), cy = 0.5 * (ny - 1.0), cx = 0.5 * (nx - 1.0);
  const double fov = 0.5 * std::min(ny, nx);

  PhantomSpec spec;
  spec.shape = shape;
  spec.seed = seed;
  spec.texture_sd = texture_sd;
  spec.body = {"body",
               {cz, cy + 0.02 * ny * u(rng), cx + 0.02 * nx * u(rng)},
               {1e6, fov * (0.72 + 0.06 * u(rng)), fov * (0.84 + 0.04 * u(rng))},
               40.0};

  // z extent kept inside the grid; nested organs shrink toward the ends.
  const double zr = std::max(0.5, 0.5 * (nz - 1.0));
  auto organ = [&](std::string label, double oy, double ox, Eigen::Vector3d radii, double hu) {
    const double scale = 1.0 + 0.1 * u(rng);
    Ellipsoid e{std::move(label),
                {cz, cy + oy * ny + 1.5 * u(rng), cx + ox * nx + 1.5 * u(rng)},
                {std::min(zr, radii[0] * zr), radii[1] * ny * scale, radii[2] * nx * scale},
                hu};
    spec.inclusions.push_back(std::move(e));
  };
  organ("bladder", -0.14, 0.0, {1.0, 0.11, 0.15}, 15.0);
  organ("prostate", 0.04, 0.0, {0.9, 0.07, 0.08}, 60.0);
  organ("rectum", 0.17, 0.0, {1.0, 0.05, 0.06}, -300.0);
  organ("femur_left", 0.02, -0.29, {0.9, 0.08, 0.08}, 700.0);
  organ("femur_right", 0.02, 0.29, {0.9, 0.08, 0.08}, 700.0);
  spec.validate();
  return spec;
}

namespace {

nlohmann::json ellipsoid_json(const Ellipsoid& e) {
  return {{"label", e.label},
          {"center", {e.center[0], e.center[1], e.center[2]}},
          {"radii", {e.radii[0], e.radii[1], e.radii[2]}},
          {"hu", e.hu}};
}

Ellipsoid ellipsoid_from(const nlohmann::json& j) {
  const auto c = j.at("center").get<std::array<double, 3>>();
  const auto r = j.at("radii").get<std::array<double, 3>>();
  return {j.at("label").get<std::string>(), {c[0], c[1], c[2]}, {r[0], r[1], r[2]},
          j.at("hu").get<double>()};
}

}  // namespace

nlohmann::json to_json(const PhantomSpec& spec) {
  nlohmann::json inc = nlohmann::json::array();
  for (const auto& e : spec.inclusions) inc.push_back(ellipsoid_json(e));
  return {{"shape", spec.shape},       {"spacing", spec.spacing},
          {"body", ellipsoid_json(spec.body)}, {"inclusions", inc},
          {"texture_sd", spec.texture_sd}, {"seed", spec.seed}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  try {
    PhantomSpec s;
    s.shape = j.at("shape").get<std::array<Eigen::Index, 3>>();
    s.spacing = j.at("spacing").get<std::array<double, 3>>();
    s.body = ellipsoid_from(j.at("body"));
    s.inclusions.clear();
    for (const auto& e : j.at("inclusions")) s.inclusions.push_back(ellipsoid_from(e));
    s.texture_sd = j.at("texture_sd").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad phantom spec: ") + e.what());
  }
}

nlohmann::json to_json(const ArtifactParams& p) {
  return {{"global_shift", p.global_shift}, {"cupping_amp", p.cupping_amp},
          {"streak_amp", p.streak_amp},     {"streak_count", p.streak_count},
          {"noise_sd", p.noise_sd},         {"seed", p.seed}};
}

std::vector<std::string> write_phantom_pairs(const PhantomJob& job) {
  if (job.pairs < 1) throw ValidationError("pairs must be >= 1");
  if (job.jitter_px < 0) throw ValidationError("jitter must be >= 0");
  job.artifacts.validate();
  ensure_directory(job.out_dir);
  std::vector<std::string> ids;
  for (int i = 0; i < job.pairs; ++i) {
    const auto k = static_cast<std::uint64_t>(i);
    char id[16];
    std::snprintf(id, sizeof id, "%04d", i);
    const PhantomSpec spec = random_pelvis_spec(job.shape, derive_seed(job.seed, 3 * k), job.texture_sd);
    ArtifactParams art = job.artifacts;
    art.seed = derive_seed(job.seed, 3 * k + 1);

    PhantomSpec moved = spec;
    if (job.jitter_px > 0) {
      std::mt19937_64 rng(derive_seed(job.seed, 3 * k + 2));
      const auto span = static_cast<std::uint64_t>(2 * job.jitter_px + 1);
      const double dy = static_cast<double>(rng() % span) - job.jitter_px;
      const double dx = static_cast<double>(rng() % span) - job.jitter_px;
      moved = spec.shifted(dy, dx);
    }
    const Volume ct = make_ct_phantom(spec);
    const Volume cbct = degrade_to_cbct(job.jitter_px > 0 ? make_ct_phantom(moved) : ct, art);
    save_volume(ct, job.out_dir / ("ct_" + std::string(id)));
    save_volume(cbct, job.out_dir / ("cbct_" + std::string(id)));
    nlohmann::json meta = to_json(spec);
    meta["artifacts"] = to_json(art);
    write_file_atomic(job.out_dir / ("spec_" + std::string(id) + ".json"), meta.dump(2) + "\n");
    ids.emplace_back(id);
  }
  return ids;
}

}  // namespace fbgan
