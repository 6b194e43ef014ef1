#pragma once

#include "fbgan/volume.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace fbgan {

struct RoiSpec {
  std::array<Eigen::Index, 3> center{0, 0, 0};  // z, y, x
  std::array<Eigen::Index, 3> size{20, 256, 256};

  /// First voxel of the block: center - size / 2 per axis.
  std::array<Eigen::Index, 3> origin() const;
};

/// Copy of the block `roi`; throws ValidationError when it leaves the grid.
Volume extract_roi(const Volume& vol, const RoiSpec& roi);

struct RoiStats {
  double mean = 0.0;
  double sd = 0.0;  // population (divisor N)
};

RoiStats roi_stats(const Volume& vol);

struct Histogram {
  double lo = -300.0;
  double hi = 150.0;
  double bin_width = 1.0;
  std::vector<std::int64_t> counts;
  std::int64_t total = 0;

  /// Bin b covers [lo + b·w, lo + (b+1)·w); the last bin also holds hi.
  static std::size_t bin_count(double lo, double hi, double bin_width);
  double bin_center(std::size_t b) const { return lo + (static_cast<double>(b) + 0.5) * bin_width; }
  bool same_window(const Histogram& o) const {
    return lo == o.lo && hi == o.hi && bin_width == o.bin_width;
  }
};

/// Clip to [lo, hi], then bin.
Histogram hu_histogram(const Volume& vol, double lo = -300.0, double hi = 150.0,
                       double bin_width = 1.0);

/// Pearson correlation of raw counts. Mismatched windows are a
/// ConfigurationError; a constant count vector is a NumericError.
double histogram_correlation(const Histogram& a, const Histogram& b);

struct EvalWindow {
  double lo = -300.0;
  double hi = 150.0;
  double bin_width = 1.0;
  /// Window for the reference histogram; defaults to the main window.
  std::optional<std::pair<double, double>> ref_clip;
};

/// One test case: the original input, its translations, and the reference.
struct EvalCase {
  std::string name;
  Volume reference;
  Volume original;
  std::vector<std::pair<std::string, Volume>> synthetic;  // method -> volume
  RoiSpec roi;
};

struct EvalRow {
  std::string case_name;  // "mean" for the across-case rows
  std::string method;
  double mean_hu = 0.0;
  double sd_hu = 0.0;
  double r = 0.0;
};

struct EvalReport {
  EvalWindow window;
  std::vector<EvalRow> rows;

  /// Row lookup; throws ValidationError when absent.
  const EvalRow& row(const std::string& case_name, const std::string& method) const;
  std::vector<std::string> methods() const;
  std::vector<std::string> cases() const;  // excludes "mean"
};

/// Per case and method: ROI clipped to the window, mean and SD, histogram
/// correlation against the reference. Rows run original, synthetic methods
/// in order, reference; per-method means over cases follow. When `plot_dir`
/// is set, writes `hist_<case>.png` there.
EvalReport evaluate_run(const std::vector<EvalCase>& cases, const EvalWindow& window,
                        const std::optional<std::filesystem::path>& plot_dir = std::nullopt);

/// `case,method,mean_hu,sd_hu,r` with fixed formatting.
std::string report_csv(const EvalReport& report);
void write_report_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace fbgan
