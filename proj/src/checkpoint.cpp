#include "fbgan/checkpoint.hpp"

#include "fbgan/error.hpp"
#include "fbgan/io.hpp"

#include <bit>
#include <cstring>
#include <type_traits>

namespace fbgan {

namespace fs = std::filesystem;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint payload is host order");

namespace {

constexpr char kMagic[8] = {'F', 'B', 'G', 'A', 'N', 'C', 'K', '1'};

template <typename State>
auto blocks(State& st) {
  using M = std::conditional_t<std::is_const_v<State>, const MatrixX<float>, MatrixX<float>>;
  struct Block {
    std::string name;
    M* value;
    M* m;
    M* v;
  };
  std::vector<Block> out;
  for (auto* opt : {&st.disc_opt, &st.gen_opt}) {
    for (std::size_t i = 0; i < opt->params().size(); ++i) {
      out.push_back({opt->params()[i].name, opt->params()[i].value, &opt->first_moments()[i],
                     &opt->second_moments()[i]});
    }
  }
  return out;
}

template <typename Blocks>
json tensor_table(const Blocks& bs) {
  json t = json::array();
  for (const auto& b : bs) {
    t.push_back({{"name", b.name}, {"rows", b.value->rows()}, {"cols", b.value->cols()}});
  }
  return t;
}

void append(std::string& out, const MatrixX<float>& m) {
  out.append(reinterpret_cast<const char*>(m.data()), sizeof(float) * static_cast<std::size_t>(m.size()));
}

}  // namespace

void save_checkpoint(const TrainState& st, const fs::path& path) {
  const auto bs = blocks(st);
  json h;
  h["format"] = std::string(kCheckpointFormat);
  h["config"] = to_json(st.config);
  h["mode"] = std::string(mode_name(st.config.mode));
  h["epoch"] = st.epoch;
  h["step"] = st.step;
  h["preprocess"] = {{"fov_radius_px", st.config.preprocess.fov_radius_px},
                     {"fill_hu", st.config.preprocess.fill_hu},
                     {"norm_lo_hu", st.config.preprocess.lo_hu},
                     {"norm_hi_hu", st.config.preprocess.hi_hu}};
  h["adam_steps"] = {{"disc", st.disc_opt.steps()}, {"gen", st.gen_opt.steps()}};
  h["tensors"] = tensor_table(bs);
  const std::string header = h.dump();

  std::string bytes(kMagic, sizeof kMagic);
  const std::uint64_t len = header.size();
  bytes.append(reinterpret_cast<const char*>(&len), sizeof len);
  bytes += header;
  for (const auto& b : bs) {
    append(bytes, *b.value);
    append(bytes, *b.m);
    append(bytes, *b.v);
  }
  write_file_atomic(path, bytes);
}

namespace {

json parse_header(const std::string& bytes, const fs::path& path, std::size_t& payload_at) {
  if (bytes.size() < sizeof kMagic + 8 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + sizeof kMagic, sizeof len);
  const std::size_t at = sizeof kMagic + sizeof len;
  if (len > bytes.size() - at) throw CorruptionError(path.string() + ": truncated header");
  json h;
  try {
    h = json::parse(bytes.substr(at, len));
  } catch (const json::parse_error& e) {
    throw FormatError(path.string() + ": unreadable header: " + e.what());
  }
  if (!h.is_object() || h.value("format", "") != kCheckpointFormat) {
    throw FormatError(path.string() + ": unsupported checkpoint format");
  }
  payload_at = at + len;
  return h;
}

}  // namespace

json read_checkpoint_header(const fs::path& path) {
  std::size_t at = 0;
  return parse_header(read_file(path), path, at);
}

std::unique_ptr<TrainState> load_checkpoint(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t at = 0;
  const json h = parse_header(bytes, path, at);

  std::unique_ptr<TrainState> st;
  try {
    st = std::make_unique<TrainState>(train_config_from_json(h.at("config")));
    st->epoch = h.at("epoch").get<long long>();
    st->step = h.at("step").get<long long>();
    st->disc_opt.set_steps(h.at("adam_steps").at("disc").get<long long>());
    st->gen_opt.set_steps(h.at("adam_steps").at("gen").get<long long>());
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": incomplete header: " + e.what());
  }
  if (h.value("mode", "") != mode_name(st->config.mode)) {
    throw ConfigurationError(path.string() + ": recorded mode disagrees with its config");
  }

  const auto bs = blocks(*st);
  if (h.at("tensors") != tensor_table(bs)) {
    throw ConfigurationError(path.string() + ": tensor table does not match the configured networks");
  }
  std::size_t need = 0;
  for (const auto& b : bs) need += 3 * sizeof(float) * static_cast<std::size_t>(b.value->size());
  if (bytes.size() - at != need) {
    throw CorruptionError(path.string() + ": payload has " + std::to_string(bytes.size() - at) +
                          " bytes, expected " + std::to_string(need));
  }
  const char* p = bytes.data() + at;
  auto read = [&p](MatrixX<float>& m) {
    const std::size_t n = sizeof(float) * static_cast<std::size_t>(m.size());
    std::memcpy(m.data(), p, n);
    p += n;
  };
  for (const auto& b : bs) {
    read(*b.value);
    read(*b.m);
    read(*b.v);
  }
  return st;
}

void check_resume_compatible(const TrainConfig& stored, const TrainConfig& requested) {
  json a = to_json(stored), b = to_json(requested);
  for (const char* k : {"epochs", "checkpoint_dir", "checkpoint_every"}) {
    a.erase(k);
    b.erase(k);
  }
  if (a != b) {
    std::string diff;
    for (const auto& [k, v] : a.items()) {
      if (b[k] != v) diff += (diff.empty() ? "" : ", ") + k;
    }
    throw ConfigurationError("resume config differs from the checkpoint in: " + diff);
  }
}

}  // namespace fbgan
