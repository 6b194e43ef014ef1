#pragma once

#include "fbgan/evaluate.hpp"
#include "fbgan/models.hpp"
#include "fbgan/phantom.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace fbgan {

/// Seeded desk-scale experiment: phantoms, training of every mode,
/// translation of the held-out CBCTs, evaluation against the CTs.
struct DeskConfig {
  std::uint64_t seed = 7;
  int pairs = 35;
  int train_pairs = 30;
  std::array<Eigen::Index, 3> shape{4, 64, 64};
  int epochs = 150;
  int batch_size = 4;
  std::vector<Mode> modes{Mode::cyclegan, Mode::unetgan, Mode::feedback};
  std::vector<Index> gen_widths{4, 8, 16};
  std::vector<Index> disc_widths{4, 8, 16};
  int convs_per_level = 1;
  ArtifactParams artifacts{-76.0, 40.0, 20.0, 3, 20.0, 0};
  double texture_sd = 20.0;
  std::array<Eigen::Index, 3> roi_size{4, 32, 32};
  EvalWindow window;
  std::filesystem::path out_dir;

  void validate() const;
  nlohmann::json to_json() const;
};

struct DeskSummary {
  EvalReport report;
  double r_gain = 0.0;       // mean r of the feedback mode minus that of the original
  int cases_closer = 0;      // cases whose feedback ROI mean is nearer the reference
  int cases = 0;
  bool ordering_holds = false;  // mean r: feedback >= unetgan >= cyclegan
  std::string ordering;      // methods sorted by mean r, best first
};

/// Reads the gates from a finished report. Needs "original" and "feedback" rows.
DeskSummary summarize_desk(const EvalReport& report);
std::string summary_text(const DeskSummary& s);

/// Writes data/, <mode>/ (training outputs and synth/), report.csv,
/// hist_<case>.png and summary.txt under cfg.out_dir.
DeskSummary repro_desk(const DeskConfig& cfg, std::ostream* log = nullptr);

/// ROI of `size` centered on the labelled inclusion (the mid slice in z).
RoiSpec roi_on(const PhantomSpec& spec, const std::string& label,
               std::array<Eigen::Index, 3> size);

}  // namespace fbgan
