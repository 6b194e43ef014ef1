#include "fbgan/train.hpp"

#include "fbgan/checkpoint.hpp"
#include "fbgan/error.hpp"
#include "fbgan/io.hpp"
#include "fbgan/random.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

namespace fbgan {

namespace fs = std::filesystem;
using json = nlohmann::json;

// ------------------------------------------------------------------- config

ModelSpec TrainConfig::model_spec() const {
  ModelSpec s = ModelSpec::for_mode(mode);
  if (feedback) s.feedback = *feedback;
  s.gen_widths = gen_widths;
  s.disc_widths = disc_widths;
  s.convs_per_level = convs_per_level;
  return s;
}

LossWeights TrainConfig::loss_weights() const {
  return {weight_global, weight_local, lambda_cyc, local_reduction};
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigurationError(msg);
  };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(checkpoint_every >= 1, "checkpoint_every must be >= 1");
  require(adam.lr > 0.0 && std::isfinite(adam.lr), "lr must be positive");
  require(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "beta1 must lie in [0, 1)");
  require(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "beta2 must lie in [0, 1)");
  require(adam.eps > 0.0, "adam_eps must be positive");
  for (double w : {lambda_cyc, weight_global, weight_local}) {
    require(w >= 0.0 && std::isfinite(w), "loss weights must be finite and >= 0");
  }
  require(train_ratio >= 0.0 && train_ratio <= 1.0, "train_ratio must lie in [0, 1]");
  require(preprocess.lo_hu < preprocess.hi_hu, "norm_lo_hu must be below norm_hi_hu");
  require(preprocess.fov_radius_px >= 0.0, "fov_radius_px must be >= 0");
  const ModelSpec spec = model_spec();
  spec.validate();
  UNetConfig{1, 1, gen_widths, convs_per_level}.validate();
  UNetConfig{1, 1, disc_widths, convs_per_level}.validate();
  const Index m = spec.size_multiple();
  require(image_size >= m && image_size % m == 0,
          "image_size " + std::to_string(image_size) + " must be a positive multiple of " +
              std::to_string(m));
}

json to_json(const TrainConfig& c) {
  json j;
  j["mode"] = std::string(mode_name(c.mode));
  j["feedback"] = c.feedback ? json(*c.feedback) : json(nullptr);
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["lr"] = c.adam.lr;
  j["beta1"] = c.adam.beta1;
  j["beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps;
  j["lambda_cyc"] = c.lambda_cyc;
  j["weight_global"] = c.weight_global;
  j["weight_local"] = c.weight_local;
  j["local_reduction"] = std::string(reduction_name(c.local_reduction));
  j["seed"] = c.seed;
  j["data_dir"] = c.data_dir;
  j["checkpoint_dir"] = c.checkpoint_dir;
  j["image_size"] = c.image_size;
  j["gen_widths"] = c.gen_widths;
  j["disc_widths"] = c.disc_widths;
  j["convs_per_level"] = c.convs_per_level;
  j["checkpoint_every"] = c.checkpoint_every;
  j["train_ratio"] = c.train_ratio;
  j["fov_radius_px"] = c.preprocess.fov_radius_px;
  j["fill_hu"] = c.preprocess.fill_hu;
  j["norm_lo_hu"] = c.preprocess.lo_hu;
  j["norm_hi_hu"] = c.preprocess.hi_hu;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigurationError("training config must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "mode") c.mode = parse_mode(v.get<std::string>());
      else if (key == "feedback") c.feedback = v.is_null() ? std::nullopt : std::optional(v.get<bool>());
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "lr") c.adam.lr = v.get<double>();
      else if (key == "beta1") c.adam.beta1 = v.get<double>();
      else if (key == "beta2") c.adam.beta2 = v.get<double>();
      else if (key == "adam_eps") c.adam.eps = v.get<double>();
      else if (key == "lambda_cyc") c.lambda_cyc = v.get<double>();
      else if (key == "weight_global") c.weight_global = v.get<double>();
      else if (key == "weight_local") c.weight_local = v.get<double>();
      else if (key == "local_reduction") c.local_reduction = parse_reduction(v.get<std::string>());
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "data_dir") c.data_dir = v.get<std::string>();
      else if (key == "checkpoint_dir") c.checkpoint_dir = v.get<std::string>();
      else if (key == "image_size") c.image_size = v.get<Index>();
      else if (key == "gen_widths") c.gen_widths = v.get<std::vector<Index>>();
      else if (key == "disc_widths") c.disc_widths = v.get<std::vector<Index>>();
      else if (key == "convs_per_level") c.convs_per_level = v.get<int>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<int>();
      else if (key == "train_ratio") c.train_ratio = v.get<double>();
      else if (key == "fov_radius_px") c.preprocess.fov_radius_px = v.get<double>();
      else if (key == "fill_hu") c.preprocess.fill_hu = v.get<double>();
      else if (key == "norm_lo_hu") c.preprocess.lo_hu = v.get<double>();
      else if (key == "norm_hi_hu") c.preprocess.hi_hu = v.get<double>();
      else throw ConfigurationError("unknown training config key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigurationError(std::string("bad training config value: ") + e.what());
  }
  return c;
}

TrainConfig load_train_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigurationError("cannot parse " + path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

// -------------------------------------------------------------------- state

namespace {

TrainConfig validated(TrainConfig c) {
  c.validate();
  return c;
}

}  // namespace

TrainState::TrainState(TrainConfig cfg)
    : config(validated(std::move(cfg))),
      models(config.model_spec(), config.seed),
      disc_opt(models.discriminator_params(), config.adam),
      gen_opt(models.generator_params(), config.adam) {}

void check_finite(const LossBreakdown& b, long long step) {
  const std::pair<const char*, double> fields[] = {
      {"xy.d_global", b.xy.d_global}, {"xy.d_local", b.xy.d_local},
      {"xy.d_total", b.xy.d_total},   {"xy.g_global", b.xy.g_global},
      {"xy.g_local", b.xy.g_local},   {"xy.g_adv", b.xy.g_adv},
      {"yx.d_global", b.yx.d_global}, {"yx.d_local", b.yx.d_local},
      {"yx.d_total", b.yx.d_total},   {"yx.g_global", b.yx.g_global},
      {"yx.g_local", b.yx.g_local},   {"yx.g_adv", b.yx.g_adv},
      {"cycle", b.cycle},             {"total", b.total},
  };
  for (const auto& [name, v] : fields) {
    if (!std::isfinite(v)) {
      throw DivergenceError("step " + std::to_string(step) + ": loss term " + name +
                            " is not finite");
    }
  }
}

LossBreakdown train_step(TrainState& st, const Tensor<float>& x_real,
                         const Tensor<float>& y_real) {
  const auto& cfg = st.config;
  const Shape4 want{cfg.batch_size, 1, cfg.image_size, cfg.image_size};
  if (!(x_real.shape() == want) || !(y_real.shape() == want)) {
    throw ShapeError("train_step expects batches of " + to_string(want) + ", got " +
                     to_string(x_real.shape()) + " and " + to_string(y_real.shape()));
  }
  const LossWeights w = cfg.loss_weights();
  const long long step = st.step + 1;
  LossBreakdown b;
  try {
    auto t = translate_both(st.models, x_real, y_real);
    disc_objective(st.models, x_real, y_real, t, w, b, true);
    st.disc_opt.step();
    gen_objective(st.models, x_real, y_real, t, w, b, true);
    st.gen_opt.step();
  } catch (const NumericError& e) {
    throw DivergenceError("step " + std::to_string(step) + ": loss term " + e.what());
  }
  check_finite(b, step);
  st.step = step;
  return b;
}

// --------------------------------------------------------------------- data

std::vector<std::string> list_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw StorageError("data directory " + dir.string() + " not found");
  static const std::regex pattern(R"(ct_(\d+)\.json)");
  std::set<std::string> ids;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (!std::regex_match(name, m, pattern)) continue;
    if (fs::exists(cbct_path(dir, m[1].str()).replace_extension(".json"))) ids.insert(m[1].str());
  }
  return {ids.begin(), ids.end()};
}

fs::path ct_path(const fs::path& dir, const std::string& id) { return dir / ("ct_" + id); }
fs::path cbct_path(const fs::path& dir, const std::string& id) { return dir / ("cbct_" + id); }

json to_json(const DatasetSplit& s) {
  return {{"train", s.train}, {"test", s.test}, {"seed", s.seed}};
}

DatasetSplit split_from_json(const json& j) {
  try {
    DatasetSplit s;
    s.train = j.at("train").get<std::vector<std::string>>();
    s.test = j.at("test").get<std::vector<std::string>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad split file: ") + e.what());
  }
}

TrainingData load_training_data(const TrainConfig& cfg) {
  const auto ids = list_pairs(cfg.data_dir);
  if (ids.empty()) throw ValidationError("no ct_/cbct_ pairs in " + cfg.data_dir);
  TrainingData d;
  d.split = split_dataset(ids, cfg.train_ratio, cfg.seed);

  std::vector<SliceBatch> xs, ys;
  for (const auto& id : d.split.train) {
    const Volume ct = load_volume(ct_path(cfg.data_dir, id));
    const Volume cbct = load_volume(cbct_path(cfg.data_dir, id));
    for (const Volume* v : {&ct, &cbct}) {
      if (v->rows() != cfg.image_size || v->cols() != cfg.image_size) {
        throw ConfigurationError("pair " + id + " has slices of " + std::to_string(v->rows()) +
                                 "x" + std::to_string(v->cols()) + ", config expects " +
                                 std::to_string(cfg.image_size));
      }
    }
    ys.push_back(preprocess_volume(ct, cfg.preprocess, "ct_" + id));
    xs.push_back(preprocess_volume(cbct, cfg.preprocess, "cbct_" + id));
  }
  auto stack = [](const std::vector<SliceBatch>& parts) {
    std::vector<const SliceBatch*> src;
    std::vector<std::pair<std::size_t, Index>> picks;
    for (std::size_t i = 0; i < parts.size(); ++i) {
      src.push_back(&parts[i]);
      for (Index z = 0; z < parts[i].data.batch(); ++z) picks.emplace_back(i, z);
    }
    return gather(src, picks);
  };
  d.x = stack(xs);
  d.y = stack(ys);
  return d;
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, long long epoch, int domain,
                                     std::size_t count) {
  std::mt19937_64 rng(derive_seed(seed, (std::uint64_t{1} << 32) +
                                            2 * static_cast<std::uint64_t>(epoch) +
                                            static_cast<std::uint64_t>(domain)));
  return permutation(count, rng);
}

// ------------------------------------------------------------------ metrics

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols{
      "epoch",       "steps",       "xy_d_global", "xy_d_local", "xy_d_total",
      "xy_g_global", "xy_g_local",  "xy_g_adv",    "yx_d_global", "yx_d_local",
      "yx_d_total",  "yx_g_global", "yx_g_local",  "yx_g_adv",   "cycle",
      "total"};
  return cols;
}

std::string metrics_row(long long epoch, long long steps, const LossBreakdown& b) {
  std::string row = std::to_string(epoch) + "," + std::to_string(steps);
  char buf[32];
  for (double v : {b.xy.d_global, b.xy.d_local, b.xy.d_total, b.xy.g_global, b.xy.g_local,
                   b.xy.g_adv, b.yx.d_global, b.yx.d_local, b.yx.d_total, b.yx.g_global,
                   b.yx.g_local, b.yx.g_adv, b.cycle, b.total}) {
    std::snprintf(buf, sizeof buf, ",%.9g", v);
    row += buf;
  }
  return row;
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double k) {
  auto dir = [k](DirectionLosses& a, const DirectionLosses& d) {
    a.d_global += k * d.d_global;
    a.d_local += k * d.d_local;
    a.d_total += k * d.d_total;
    a.g_global += k * d.g_global;
    a.g_local += k * d.g_local;
    a.g_adv += k * d.g_adv;
  };
  dir(acc.xy, b.xy);
  dir(acc.yx, b.yx);
  acc.cycle += k * b.cycle;
  acc.total += k * b.total;
}

std::string header_line() {
  std::string h;
  for (const auto& c : metrics_columns()) h += (h.empty() ? "" : ",") + c;
  return h;
}

/// Header plus the rows of epochs <= `keep_through` from an existing log.
std::string retained_metrics(const fs::path& path, long long keep_through) {
  std::string out = header_line() + "\n";
  if (keep_through <= 0 || !fs::exists(path)) return out;
  std::istringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const long long e = std::stoll(line.substr(0, line.find(',')));
    if (e <= keep_through) out += line + "\n";
  }
  return out;
}

std::string epoch_tag(long long e) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld", e);
  return buf;
}

}  // namespace

TrainResult train(const TrainConfig& config, const TrainOptions& options) {
  std::unique_ptr<TrainState> st;
  if (options.resume) {
    st = load_checkpoint(*options.resume);
    check_resume_compatible(st->config, config);
    st->config.epochs = config.epochs;
    st->config.checkpoint_dir = config.checkpoint_dir;
    st->config.checkpoint_every = config.checkpoint_every;
    st->config.validate();
  } else {
    st = std::make_unique<TrainState>(config);
  }
  const TrainConfig& cfg = st->config;
  if (cfg.checkpoint_dir.empty()) throw ConfigurationError("checkpoint_dir is not set");
  const fs::path out = cfg.checkpoint_dir;
  ensure_directory(out);

  const TrainingData data = load_training_data(cfg);
  write_file_atomic(out / "split.json", to_json(data.split).dump(2) + "\n");

  const auto nx = static_cast<std::size_t>(data.x.data.batch());
  const auto ny = static_cast<std::size_t>(data.y.data.batch());
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  const long long steps = static_cast<long long>(std::min(nx, ny) / bs);
  if (steps == 0) {
    throw ValidationError("training set has fewer slices than batch_size " +
                          std::to_string(cfg.batch_size));
  }

  TrainResult result;
  result.metrics = out / "metrics.csv";
  write_file_atomic(result.metrics, retained_metrics(result.metrics, st->epoch));
  std::ofstream metrics(result.metrics, std::ios::app);
  if (!metrics) throw StorageError("cannot append to " + result.metrics.string());

  const std::vector<const SliceBatch*> xsrc{&data.x}, ysrc{&data.y};
  while (st->epoch < cfg.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    const long long epoch = st->epoch;
    const auto ox = epoch_order(cfg.seed, epoch, 0, nx);
    const auto oy = epoch_order(cfg.seed, epoch, 1, ny);
    LossBreakdown mean;
    for (long long s = 0; s < steps; ++s) {
      std::vector<std::pair<std::size_t, Index>> px, py;
      for (std::size_t i = 0; i < bs; ++i) {
        px.emplace_back(0, static_cast<Index>(ox[static_cast<std::size_t>(s) * bs + i]));
        py.emplace_back(0, static_cast<Index>(oy[static_cast<std::size_t>(s) * bs + i]));
      }
      const auto xb = gather(xsrc, px);
      const auto yb = gather(ysrc, py);
      accumulate(mean, train_step(*st, xb.data, yb.data), 1.0 / static_cast<double>(steps));
    }
    st->epoch = epoch + 1;
    metrics << metrics_row(st->epoch, steps, mean) << "\n" << std::flush;
    if (!metrics) throw StorageError("write failed: " + result.metrics.string());

    if (st->epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(*st, out / ("ckpt_epoch_" + epoch_tag(st->epoch) + ".fbck"));
    }
    ++result.epochs_run;
    if (options.log) {
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char buf[160];
      std::snprintf(buf, sizeof buf, "[%s] epoch %lld/%d  total %.4f  cycle %.4f  (%.1f s)\n",
                    std::string(mode_name(cfg.mode)).c_str(), st->epoch, cfg.epochs, mean.total,
                    mean.cycle, sec);
      *options.log << buf << std::flush;
    }
  }
  result.final_checkpoint = out / "final.fbck";
  save_checkpoint(*st, result.final_checkpoint);
  return result;
}

}  // namespace fbgan
