#include "fbgan/repro.hpp"

#include "fbgan/checkpoint.hpp"
#include "fbgan/error.hpp"
#include "fbgan/io.hpp"
#include "fbgan/train.hpp"
#include "fbgan/translate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace fbgan {

namespace fs = std::filesystem;
using json = nlohmann::json;

void DeskConfig::validate() const {
  if (pairs < 2 || train_pairs < 1 || train_pairs >= pairs) {
    throw ConfigurationError("need 1 <= train_pairs < pairs");
  }
  if (modes.empty()) throw ConfigurationError("no modes to train");
  if (std::find(modes.begin(), modes.end(), Mode::feedback) == modes.end()) {
    throw ConfigurationError("the desk run must include the feedback mode");
  }
  if (out_dir.empty()) throw ConfigurationError("output directory is not set");
  for (int a = 0; a < 3; ++a) {
    if (roi_size[a] < 1 || roi_size[a] > shape[a]) {
      throw ConfigurationError("ROI size exceeds the phantom shape");
    }
  }
  artifacts.validate();
}

json DeskConfig::to_json() const {
  std::vector<std::string> names;
  for (Mode m : modes) names.emplace_back(mode_name(m));
  return {{"seed", seed},
          {"pairs", pairs},
          {"train_pairs", train_pairs},
          {"shape", shape},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"modes", names},
          {"gen_widths", gen_widths},
          {"disc_widths", disc_widths},
          {"convs_per_level", convs_per_level},
          {"artifacts", fbgan::to_json(artifacts)},
          {"texture_sd", texture_sd},
          {"roi_size", roi_size},
          {"clip", {window.lo, window.hi}},
          {"bin_width", window.bin_width},
          {"out_dir", out_dir.string()}};
}

RoiSpec roi_on(const PhantomSpec& spec, const std::string& label,
               std::array<Eigen::Index, 3> size) {
  const int i = spec.find(label);
  if (i < 0) throw ValidationError("phantom has no inclusion '" + label + "'");
  const auto& c = spec.inclusions[static_cast<std::size_t>(i)].center;
  RoiSpec roi;
  roi.size = size;
  roi.center = {spec.shape[0] / 2, static_cast<Eigen::Index>(std::lround(c[1])),
                static_cast<Eigen::Index>(std::lround(c[2]))};
  // Slide the block back inside the grid when the organ sits near an edge.
  for (int a = 0; a < 3; ++a) {
    const Eigen::Index lo = size[a] / 2, hi = spec.shape[a] - (size[a] - size[a] / 2);
    roi.center[a] = std::clamp(roi.center[a], lo, std::max(lo, hi));
  }
  return roi;
}

DeskSummary summarize_desk(const EvalReport& report) {
  DeskSummary s;
  s.report = report;
  const auto cases = report.cases();
  s.cases = static_cast<int>(cases.size());
  for (const auto& c : cases) {
    const double ref = report.row(c, "reference").mean_hu;
    const double orig = std::abs(report.row(c, "original").mean_hu - ref);
    const double fb = std::abs(report.row(c, "feedback").mean_hu - ref);
    if (fb < orig) ++s.cases_closer;
  }
  s.r_gain = report.row("mean", "feedback").r - report.row("mean", "original").r;

  std::vector<std::pair<double, std::string>> ranked;
  for (const auto& m : report.methods()) {
    if (m == "reference") continue;
    ranked.emplace_back(report.row("mean", m).r, m);
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (const auto& [r, m] : ranked) s.ordering += (s.ordering.empty() ? "" : " > ") + m;

  auto mean_r = [&](const char* m) { return report.row("mean", m).r; };
  const auto ms = report.methods();
  const bool have_all = std::find(ms.begin(), ms.end(), "unetgan") != ms.end() &&
                        std::find(ms.begin(), ms.end(), "cyclegan") != ms.end();
  s.ordering_holds = have_all && mean_r("feedback") >= mean_r("unetgan") &&
                     mean_r("unetgan") >= mean_r("cyclegan");
  return s;
}

std::string summary_text(const DeskSummary& s) {
  char buf[512];
  std::string out;
  for (const auto& m : s.report.methods()) {
    const auto& r = s.report.row("mean", m);
    std::snprintf(buf, sizeof buf, "%-10s mean %9.3f HU  sd %8.3f HU  r %.4f\n", m.c_str(),
                  r.mean_hu, r.sd_hu, r.r);
    out += buf;
  }
  std::snprintf(buf, sizeof buf,
                "r gain (feedback - original): %.4f\n"
                "cases with feedback mean closer to reference: %d of %d\n"
                "ranking by mean r: %s\n"
                "feedback >= unetgan >= cyclegan: %s\n",
                s.r_gain, s.cases_closer, s.cases, s.ordering.c_str(),
                s.ordering_holds ? "yes" : "no");
  out += buf;
  return out;
}

DeskSummary repro_desk(const DeskConfig& cfg, std::ostream* log) {
  cfg.validate();
  const fs::path out = cfg.out_dir;
  const fs::path data = out / "data";
  ensure_directory(out);

  PhantomJob job;
  job.shape = cfg.shape;
  job.pairs = cfg.pairs;
  job.out_dir = data;
  job.seed = cfg.seed;
  job.artifacts = cfg.artifacts;
  job.texture_sd = cfg.texture_sd;
  write_phantom_pairs(job);
  if (log) *log << "wrote " << cfg.pairs << " phantom pairs to " << data.string() << "\n";

  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.data_dir = data.string();
  tc.image_size = cfg.shape[1];
  tc.gen_widths = cfg.gen_widths;
  tc.disc_widths = cfg.disc_widths;
  tc.convs_per_level = cfg.convs_per_level;
  tc.checkpoint_every = cfg.epochs;
  tc.train_ratio = static_cast<double>(cfg.train_pairs) / static_cast<double>(cfg.pairs);
  if (cfg.shape[1] != cfg.shape[2]) throw ConfigurationError("desk phantoms must have square slices");

  const DatasetSplit split = split_dataset(list_pairs(data), tc.train_ratio, tc.seed);
  if (static_cast<int>(split.train.size()) != cfg.train_pairs) {
    throw ConfigurationError("split produced " + std::to_string(split.train.size()) +
                             " training pairs instead of " + std::to_string(cfg.train_pairs));
  }

  std::vector<EvalCase> cases;
  for (const auto& id : split.test) {
    EvalCase c;
    c.name = "case_" + id;
    c.reference = load_volume(ct_path(data, id));
    c.original = load_volume(cbct_path(data, id));
    const auto spec = phantom_spec_from_json(json::parse(read_file(data / ("spec_" + id + ".json"))));
    c.roi = roi_on(spec, "prostate", cfg.roi_size);
    cases.push_back(std::move(c));
  }

  for (Mode m : cfg.modes) {
    tc.mode = m;
    tc.checkpoint_dir = (out / mode_name(m)).string();
    TrainOptions opts;
    opts.log = log;
    const TrainResult res = train(tc, opts);
    const auto model = load_checkpoint(res.final_checkpoint);
    const fs::path synth = out / mode_name(m) / "synth";
    ensure_directory(synth);
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      Volume v = translate_volume(cases[i].original, *model, Direction::x_to_y);
      save_volume(v, synth / ("cbct_" + split.test[i]));
      cases[i].synthetic.emplace_back(std::string(mode_name(m)), std::move(v));
    }
  }

  const EvalReport report = evaluate_run(cases, cfg.window, out);
  write_report_csv(report, out / "report.csv");
  DeskSummary s = summarize_desk(report);
  const std::string text = summary_text(s);
  write_file_atomic(out / "summary.txt", text);
  if (log) *log << text;
  return s;
}

}  // namespace fbgan
