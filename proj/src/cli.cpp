#include "fbgan/cli.hpp"

#include "fbgan/checkpoint.hpp"
#include "fbgan/error.hpp"
#include "fbgan/evaluate.hpp"
#include "fbgan/io.hpp"
#include "fbgan/manifest.hpp"
#include "fbgan/phantom.hpp"
#include "fbgan/repro.hpp"
#include "fbgan/train.hpp"
#include "fbgan/translate.hpp"

#include "CLI11.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <functional>
#include <memory>
#include <optional>
#include <sstream>

namespace fbgan {

namespace fs = std::filesystem;
using json = nlohmann::json;

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

namespace {

std::vector<double> split_numbers(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument(item);
    out.push_back(v);
  }
  return out;
}

/// CLI11 validator for a comma list of `n` numbers (integers when `integral`).
CLI::Validator number_list(std::size_t n, bool integral) {
  return CLI::Validator(
      [n, integral](std::string& s) -> std::string {
        try {
          const auto v = split_numbers(s);
          if (v.size() != n) return "expected " + std::to_string(n) + " comma-separated values";
          for (double x : v) {
            if (integral && x != std::floor(x)) return "expected integers";
          }
        } catch (const std::exception&) {
          return "expected " + std::to_string(n) + " comma-separated numbers";
        }
        return {};
      },
      integral ? "INT,INT,..." : "NUM,NUM");
}

std::array<Eigen::Index, 3> triple(const std::string& s) {
  const auto v = split_numbers(s);
  return {static_cast<Eigen::Index>(v[0]), static_cast<Eigen::Index>(v[1]),
          static_cast<Eigen::Index>(v[2])};
}

std::vector<Index> index_list(const std::string& s) {
  std::vector<Index> out;
  for (double v : split_numbers(s)) {
    if (v < 1 || v != std::floor(v)) throw ConfigurationError("widths must be positive integers");
    out.push_back(static_cast<Index>(v));
  }
  return out;
}

// ------------------------------------------------------------ subcommands

struct PhantomArgs {
  std::string shape = "8,64,64";
  int pairs = 4;
  std::string out;
  std::uint64_t seed = 0;
  ArtifactParams art;
  double texture_sd = 20.0;
  int jitter = 0;
};

struct TrainArgs {
  std::optional<std::string> mode, config, resume, out, data;
  std::optional<int> epochs, batch_size, checkpoint_every;
  std::optional<std::uint64_t> seed;
  std::optional<Index> image_size;
};

struct TranslateArgs {
  std::string ckpt;
  std::vector<std::string> inputs;
  std::string out;
  std::string direction = "x2y";
};

struct EvaluateArgs {
  std::string ref, orig;
  std::vector<std::string> synth;
  std::optional<std::string> roi;
  std::string clip = "-300,150";
  std::optional<std::string> ref_clip;
  double bin_width = 1.0;
  std::string out;
  std::optional<std::string> case_name;
};

struct DeskArgs {
  std::uint64_t seed = 7;
  std::string out;
  std::optional<int> epochs, pairs, train_pairs, batch_size, convs_per_level;
  std::optional<std::string> shape, modes, widths, roi;
};

struct Cli {
  CLI::App app{"Feedback-assisted adversarial CBCT-to-CT translation toolkit", "fbgan"};
  CLI::App* phantom = nullptr;
  CLI::App* train = nullptr;
  CLI::App* translate = nullptr;
  CLI::App* evaluate = nullptr;
  CLI::App* desk = nullptr;
  PhantomArgs pa;
  TrainArgs ta;
  TranslateArgs tr;
  EvaluateArgs ev;
  DeskArgs da;

  Cli() {
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    phantom = app.add_subcommand("phantom", "Generate aligned CT/CBCT phantom pairs");
    phantom->add_option("--shape", pa.shape, "Volume shape z,y,x")->check(number_list(3, true))->capture_default_str();
    phantom->add_option("--pairs", pa.pairs, "Number of pairs")->check(CLI::PositiveNumber)->capture_default_str();
    phantom->add_option("--out", pa.out, "Output directory")->required();
    phantom->add_option("--seed", pa.seed, "Random seed")->capture_default_str();
    phantom->add_option("--shift", pa.art.global_shift, "Global HU shift of the CBCT")->capture_default_str();
    phantom->add_option("--cupping", pa.art.cupping_amp, "Cupping amplitude in HU at the FOV rim")->capture_default_str();
    phantom->add_option("--streak", pa.art.streak_amp, "Angular streak amplitude in HU")->capture_default_str();
    phantom->add_option("--streak-count", pa.art.streak_count, "Angular streak frequency")->capture_default_str();
    phantom->add_option("--noise", pa.art.noise_sd, "CBCT noise SD in HU")->capture_default_str();
    phantom->add_option("--texture-sd", pa.texture_sd, "CT tissue texture SD in HU")->capture_default_str();
    phantom->add_option("--jitter", pa.jitter, "Max rigid in-plane CBCT shift in pixels")->capture_default_str();

    train = app.add_subcommand("train", "Train a model bundle (flags override --config)");
    train->add_option("--mode", ta.mode, "feedback | unetgan | cyclegan");
    train->add_option("--config", ta.config, "JSON training config");
    train->add_option("--resume", ta.resume, "Checkpoint to resume from");
    train->add_option("--out", ta.out, "Output (checkpoint) directory");
    train->add_option("--data", ta.data, "Directory with ct_####/cbct_#### pairs");
    train->add_option("--epochs", ta.epochs, "Total epochs");
    train->add_option("--batch-size", ta.batch_size, "Slices per batch");
    train->add_option("--seed", ta.seed, "Random seed");
    train->add_option("--image-size", ta.image_size, "In-plane slice size");
    train->add_option("--checkpoint-every", ta.checkpoint_every, "Epochs between checkpoints");

    translate = app.add_subcommand("translate", "Translate volumes with a trained checkpoint");
    translate->add_option("--ckpt", tr.ckpt, "Checkpoint file")->required();
    translate->add_option("--in", tr.inputs, "Input volume or directory (repeatable)")->required();
    translate->add_option("--out", tr.out, "Output directory")->required();
    translate->add_option("--direction", tr.direction, "x2y (CBCT to CT) or y2x")->capture_default_str();

    evaluate = app.add_subcommand("evaluate", "ROI statistics and histogram correlation report");
    evaluate->add_option("--ref", ev.ref, "Reference volume")->required();
    evaluate->add_option("--orig", ev.orig, "Original (untranslated) volume")->required();
    evaluate->add_option("--synth", ev.synth, "Translated volume as NAME=FILE (repeatable)");
    evaluate->add_option("--roi", ev.roi, "ROI z,y,x,dz,dy,dx (center and size; default whole volume)")->check(number_list(6, true));
    evaluate->add_option("--clip", ev.clip, "HU window lo,hi")->check(number_list(2, false))->capture_default_str();
    evaluate->add_option("--ref-clip", ev.ref_clip, "HU window of the reference histogram (default --clip)")->check(number_list(2, false));
    evaluate->add_option("--bin-width", ev.bin_width, "Histogram bin width in HU")->capture_default_str();
    evaluate->add_option("--out", ev.out, "Output directory")->required();
    evaluate->add_option("--case", ev.case_name, "Case name (default: reference file name)");

    desk = app.add_subcommand("repro-desk", "Seeded phantom -> train -> translate -> evaluate run");
    desk->add_option("--seed", da.seed, "Random seed")->capture_default_str();
    desk->add_option("--out", da.out, "Output directory")->required();
    desk->add_option("--epochs", da.epochs, "Epochs per mode");
    desk->add_option("--pairs", da.pairs, "Phantom pairs");
    desk->add_option("--train-pairs", da.train_pairs, "Pairs used for training");
    desk->add_option("--batch-size", da.batch_size, "Slices per batch");
    desk->add_option("--shape", da.shape, "Phantom shape z,y,x")->check(number_list(3, true));
    desk->add_option("--modes", da.modes, "Comma list of modes to train");
    desk->add_option("--widths", da.widths, "Comma list of network widths");
    desk->add_option("--convs-per-level", da.convs_per_level, "Convolutions per U-net level");
    desk->add_option("--roi", da.roi, "ROI size dz,dy,dx")->check(number_list(3, true));
  }
};

std::vector<std::string> strings(const std::vector<fs::path>& ps) {
  std::vector<std::string> out;
  for (const auto& p : ps) out.push_back(p.string());
  return out;
}

int do_phantom(const PhantomArgs& a, std::ostream& out) {
  RunManifest man;
  man.subcommand = "phantom";
  man.started = utc_timestamp();
  PhantomJob job;
  job.shape = triple(a.shape);
  job.pairs = a.pairs;
  job.out_dir = a.out;
  job.seed = a.seed;
  job.artifacts = a.art;
  job.texture_sd = a.texture_sd;
  job.jitter_px = a.jitter;
  const auto ids = write_phantom_pairs(job);
  man.config = {{"shape", job.shape},           {"pairs", job.pairs},
                {"artifacts", to_json(job.artifacts)}, {"texture_sd", job.texture_sd},
                {"jitter_px", job.jitter_px},   {"out", a.out}};
  man.seed = a.seed;
  for (const auto& id : ids) {
    man.outputs.push_back((job.out_dir / ("ct_" + id)).string());
    man.outputs.push_back((job.out_dir / ("cbct_" + id)).string());
  }
  man.finished = utc_timestamp();
  write_manifest(man, job.out_dir);
  out << "wrote " << ids.size() << " pairs to " << a.out << "\n";
  return 0;
}

int do_train(const TrainArgs& a, std::ostream& out) {
  RunManifest man;
  man.subcommand = "train";
  man.started = utc_timestamp();
  TrainConfig cfg;
  if (a.resume) {
    cfg = train_config_from_json(read_checkpoint_header(*a.resume).at("config"));
    man.inputs.push_back(*a.resume);
  }
  if (a.config) {
    json j;
    try {
      j = json::parse(read_file(*a.config));
    } catch (const json::parse_error& e) {
      throw ConfigurationError("cannot parse " + *a.config + ": " + e.what());
    }
    cfg = train_config_from_json(j, cfg);
    man.inputs.push_back(*a.config);
  }
  if (a.mode) cfg.mode = parse_mode(*a.mode);
  if (a.out) cfg.checkpoint_dir = *a.out;
  if (a.data) cfg.data_dir = *a.data;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.seed) cfg.seed = *a.seed;
  if (a.image_size) cfg.image_size = *a.image_size;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (cfg.data_dir.empty()) throw ConfigurationError("no data directory (use --data or the config)");
  if (cfg.checkpoint_dir.empty()) throw ConfigurationError("no output directory (use --out or the config)");
  cfg.validate();

  TrainOptions opts;
  if (a.resume) opts.resume = fs::path(*a.resume);
  opts.log = &out;
  const TrainResult res = train(cfg, opts);
  man.config = to_json(cfg);
  man.seed = cfg.seed;
  man.inputs.push_back(cfg.data_dir);
  man.outputs = {res.final_checkpoint.string(), res.metrics.string(),
                 (fs::path(cfg.checkpoint_dir) / "split.json").string()};
  man.finished = utc_timestamp();
  write_manifest(man, cfg.checkpoint_dir);
  out << "final checkpoint " << res.final_checkpoint.string() << "\n";
  return 0;
}

int do_translate(const TranslateArgs& a, std::ostream& out) {
  RunManifest man;
  man.subcommand = "translate";
  man.started = utc_timestamp();
  TranslationJob job;
  job.checkpoint = a.ckpt;
  for (const auto& i : a.inputs) job.inputs.emplace_back(i);
  job.out_dir = a.out;
  job.direction = parse_direction(a.direction);
  const auto written = run_translation(job);
  man.config = {{"ckpt", a.ckpt}, {"in", a.inputs}, {"out", a.out},
                {"direction", std::string(direction_name(job.direction))}};
  man.inputs = a.inputs;
  man.inputs.push_back(a.ckpt);
  man.outputs = strings(written);
  man.finished = utc_timestamp();
  write_manifest(man, job.out_dir);
  out << "translated " << written.size() << " volume(s) into " << a.out << "\n";
  return 0;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
  RunManifest man;
  man.subcommand = "evaluate";
  man.started = utc_timestamp();
  EvalCase c;
  c.reference = load_volume(volume_base(a.ref));
  c.original = load_volume(volume_base(a.orig));
  c.name = a.case_name.value_or(volume_base(a.ref).filename().string());
  for (const auto& s : a.synth) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
      throw ConfigurationError("--synth expects NAME=FILE, got '" + s + "'");
    }
    c.synthetic.emplace_back(s.substr(0, eq), load_volume(volume_base(s.substr(eq + 1))));
  }
  if (a.roi) {
    const auto v = split_numbers(*a.roi);
    c.roi.center = {static_cast<Index>(v[0]), static_cast<Index>(v[1]), static_cast<Index>(v[2])};
    c.roi.size = {static_cast<Index>(v[3]), static_cast<Index>(v[4]), static_cast<Index>(v[5])};
  } else {
    c.roi.size = c.reference.shape;
    c.roi.center = {c.reference.shape[0] / 2, c.reference.shape[1] / 2, c.reference.shape[2] / 2};
  }
  EvalWindow w;
  const auto clip = split_numbers(a.clip);
  w.lo = clip[0];
  w.hi = clip[1];
  w.bin_width = a.bin_width;
  if (a.ref_clip) {
    const auto rc = split_numbers(*a.ref_clip);
    w.ref_clip = std::pair{rc[0], rc[1]};
  }
  const EvalReport rep = evaluate_run({c}, w, fs::path(a.out));
  write_report_csv(rep, fs::path(a.out) / "report.csv");

  man.config = {{"ref", a.ref},   {"orig", a.orig}, {"synth", a.synth},
                {"roi", {c.roi.center[0], c.roi.center[1], c.roi.center[2], c.roi.size[0], c.roi.size[1], c.roi.size[2]}},
                {"clip", {w.lo, w.hi}}, {"bin_width", w.bin_width}, {"case", c.name}};
  if (w.ref_clip) man.config["ref_clip"] = {w.ref_clip->first, w.ref_clip->second};
  man.inputs = {a.ref, a.orig};
  for (const auto& s : a.synth) man.inputs.push_back(s);
  man.outputs = {(fs::path(a.out) / "report.csv").string(),
                 (fs::path(a.out) / ("hist_" + c.name + ".png")).string()};
  man.finished = utc_timestamp();
  write_manifest(man, a.out);
  out << report_csv(rep);
  return 0;
}

int do_desk(const DeskArgs& a, std::ostream& out) {
  RunManifest man;
  man.subcommand = "repro-desk";
  man.started = utc_timestamp();
  DeskConfig cfg;
  cfg.seed = a.seed;
  cfg.out_dir = a.out;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.pairs) cfg.pairs = *a.pairs;
  if (a.train_pairs) cfg.train_pairs = *a.train_pairs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.convs_per_level) cfg.convs_per_level = *a.convs_per_level;
  if (a.shape) cfg.shape = triple(*a.shape);
  if (a.roi) cfg.roi_size = triple(*a.roi);
  if (a.widths) cfg.gen_widths = cfg.disc_widths = index_list(*a.widths);
  if (a.modes) {
    cfg.modes.clear();
    std::stringstream ss(*a.modes);
    std::string m;
    while (std::getline(ss, m, ',')) cfg.modes.push_back(parse_mode(m));
  }
  const DeskSummary s = repro_desk(cfg, &out);
  man.config = cfg.to_json();
  man.seed = cfg.seed;
  man.outputs = {(cfg.out_dir / "report.csv").string(), (cfg.out_dir / "summary.txt").string()};
  for (const auto& c : s.report.cases()) man.outputs.push_back((cfg.out_dir / ("hist_" + c + ".png")).string());
  man.tolerance_mode = "bitwise";
  man.finished = utc_timestamp();
  write_manifest(man, cfg.out_dir);
  return 0;
}

}  // namespace

std::vector<std::string> cli_subcommands() {
  return {"phantom", "train", "translate", "evaluate", "repro-desk"};
}

std::vector<std::string> cli_flags(const std::string& sub) {
  Cli cli;
  const CLI::App* app = cli.app.get_subcommand(sub);
  std::vector<std::string> out;
  for (const CLI::Option* o : app->get_options()) {
    for (const auto& name : o->get_lnames()) {
      if (name != "help") out.push_back("--" + name);
    }
  }
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Cli cli;
  try {
    std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    cli.app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = cli.app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    if (cli.phantom->parsed()) return do_phantom(cli.pa, out);
    if (cli.train->parsed()) return do_train(cli.ta, out);
    if (cli.translate->parsed()) return do_translate(cli.tr, out);
    if (cli.evaluate->parsed()) return do_evaluate(cli.ev, out);
    if (cli.desk->parsed()) return do_desk(cli.da, out);
  } catch (const Error& e) {
    err << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const json::exception& e) {
    err << "error [format]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error [internal]: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace fbgan
