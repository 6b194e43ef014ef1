#include "fbgan/volume.hpp"

#include "fbgan/error.hpp"

#include "json.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fbgan {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "payload is written in host order");

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::CT: return "CT";
    case Modality::CBCT: return "CBCT";
    case Modality::SYNTH: return "SYNTH";
  }
  return "CT";
}

Modality parse_modality(std::string_view name) {
  if (name == "CT") return Modality::CT;
  if (name == "CBCT") return Modality::CBCT;
  if (name == "SYNTH") return Modality::SYNTH;
  throw FormatError("unknown modality '" + std::string(name) + "'");
}

Volume::Volume(Eigen::Index nz, Eigen::Index ny, Eigen::Index nx, float fill)
    : shape{nz, ny, nx}, data(Eigen::ArrayXf::Constant(nz * ny * nx, fill)) {}

void Volume::validate() const {
  for (auto d : shape) {
    if (d < 1) throw ValidationError("volume dimensions must be >= 1");
  }
  for (double s : spacing) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ValidationError("volume spacing must be positive");
  }
  if (data.size() != size()) throw ValidationError("volume data size does not match shape");
  if (!data.allFinite()) throw ValidationError("volume contains non-finite values");
  if (fov_radius_px && !(*fov_radius_px >= 0.0)) {
    throw ValidationError("fov_radius_px must be non-negative");
  }
}

bool Volume::identical(const Volume& other) const {
  if (shape != other.shape || spacing != other.spacing || modality != other.modality ||
      fov_radius_px != other.fov_radius_px || data.size() != other.data.size()) {
    return false;
  }
  return std::memcmp(data.data(), other.data.data(), sizeof(float) * data.size()) == 0;
}

fs::path volume_base(const fs::path& p) {
  auto ext = p.extension();
  if (ext == ".vol" || ext == ".json") {
    auto base = p;
    base.replace_extension();
    return base;
  }
  return p;
}

static fs::path with_suffix(const fs::path& base, const char* suffix) {
  return fs::path(base.string() + suffix);
}

void save_volume(const Volume& vol, const fs::path& base_in) {
  vol.validate();
  const auto base = volume_base(base_in);
  const auto vol_path = with_suffix(base, ".vol");
  const auto json_path = with_suffix(base, ".json");

  {
    std::ofstream out(vol_path, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot open '" + vol_path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(vol.data.data()),
              static_cast<std::streamsize>(sizeof(float) * vol.data.size()));
    if (!out) throw StorageError("write failed for '" + vol_path.string() + "'");
  }

  json meta;
  meta["format"] = kVolumeFormatVersion;
  meta["shape"] = {vol.shape[0], vol.shape[1], vol.shape[2]};
  meta["spacing"] = {vol.spacing[0], vol.spacing[1], vol.spacing[2]};
  meta["modality"] = modality_name(vol.modality);
  meta["fov_radius_px"] = vol.fov_radius_px ? json(*vol.fov_radius_px) : json(nullptr);
  meta["dtype"] = "float32-le";
  meta["order"] = "C(z,y,x)";

  std::ofstream out(json_path, std::ios::trunc);
  if (!out) throw StorageError("cannot open '" + json_path.string() + "' for writing");
  out << meta.dump(2) << '\n';
  if (!out) throw StorageError("write failed for '" + json_path.string() + "'");
}

Volume load_volume(const fs::path& base_in) {
  const auto base = volume_base(base_in);
  const auto vol_path = with_suffix(base, ".vol");
  const auto json_path = with_suffix(base, ".json");

  std::ifstream meta_in(json_path);
  if (!meta_in) throw FormatError("missing sidecar '" + json_path.string() + "'");
  json meta;
  try {
    meta_in >> meta;
  } catch (const json::exception& e) {
    throw FormatError("malformed sidecar '" + json_path.string() + "': " + e.what());
  }

  Volume vol;
  try {
    if (meta.at("format").get<std::string>() != kVolumeFormatVersion) {
      throw FormatError("unsupported volume format '" + meta.at("format").get<std::string>() + "'");
    }
    const auto shape = meta.at("shape").get<std::array<long long, 3>>();
    const auto spacing = meta.at("spacing").get<std::array<double, 3>>();
    for (int i = 0; i < 3; ++i) {
      if (shape[i] < 1) throw FormatError("sidecar shape must be positive");
      vol.shape[i] = shape[i];
      vol.spacing[i] = spacing[i];
    }
    vol.modality = parse_modality(meta.at("modality").get<std::string>());
    if (meta.contains("fov_radius_px") && !meta["fov_radius_px"].is_null()) {
      vol.fov_radius_px = meta["fov_radius_px"].get<double>();
    }
  } catch (const json::exception& e) {
    throw FormatError("invalid sidecar '" + json_path.string() + "': " + e.what());
  }

  std::ifstream in(vol_path, std::ios::binary | std::ios::ate);
  if (!in) throw StorageError("missing payload '" + vol_path.string() + "'");
  const auto bytes = static_cast<std::uintmax_t>(in.tellg());
  const auto expected = static_cast<std::uintmax_t>(vol.size()) * sizeof(float);
  if (bytes != expected) {
    std::ostringstream msg;
    msg << "payload '" << vol_path.string() << "' has " << bytes << " bytes, expected " << expected;
    throw CorruptionError(msg.str());
  }
  in.seekg(0);
  vol.data.resize(vol.size());
  in.read(reinterpret_cast<char*>(vol.data.data()), static_cast<std::streamsize>(expected));
  if (!in) throw StorageError("read failed for '" + vol_path.string() + "'");

  if (!vol.data.allFinite()) {
    throw ValidationError("payload '" + vol_path.string() + "' contains non-finite values");
  }
  vol.validate();
  return vol;
}

}  // namespace fbgan
