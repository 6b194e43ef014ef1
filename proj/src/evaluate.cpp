#include "fbgan/evaluate.hpp"

#include "fbgan/error.hpp"
#include "fbgan/io.hpp"
#include "fbgan/plot.hpp"
#include "fbgan/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

namespace fbgan {

namespace fs = std::filesystem;
using Eigen::Index;

std::array<Index, 3> RoiSpec::origin() const {
  return {center[0] - size[0] / 2, center[1] - size[1] / 2, center[2] - size[2] / 2};
}

Volume extract_roi(const Volume& vol, const RoiSpec& roi) {
  const auto o = roi.origin();
  for (int a = 0; a < 3; ++a) {
    if (roi.size[a] < 1 || o[a] < 0 || o[a] + roi.size[a] > vol.shape[a]) {
      throw ValidationError("ROI axis " + std::to_string(a) + " spans [" + std::to_string(o[a]) +
                            ", " + std::to_string(o[a] + roi.size[a]) + ") outside [0, " +
                            std::to_string(vol.shape[a]) + ")");
    }
  }
  Volume out(roi.size[0], roi.size[1], roi.size[2]);
  out.spacing = vol.spacing;
  out.modality = vol.modality;
  out.fov_radius_px = vol.fov_radius_px;
  for (Index z = 0; z < roi.size[0]; ++z) {
    out.slice(z) = vol.slice(z + o[0]).block(o[1], o[2], roi.size[1], roi.size[2]);
  }
  return out;
}

RoiStats roi_stats(const Volume& vol) {
  if (vol.data.size() == 0) throw ValidationError("roi_stats of an empty volume");
  const Eigen::ArrayXd v = vol.data.cast<double>();
  const double mean = v.mean();
  return {mean, std::sqrt((v - mean).square().mean())};
}

std::size_t Histogram::bin_count(double lo, double hi, double bin_width) {
  if (!(lo < hi)) throw ValidationError("histogram window requires lo < hi");
  if (!(bin_width > 0.0)) throw ValidationError("bin width must be positive");
  return static_cast<std::size_t>(std::ceil((hi - lo) / bin_width)) + 1;
}

Histogram hu_histogram(const Volume& vol, double lo, double hi, double bin_width) {
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.bin_width = bin_width;
  const std::size_t n = Histogram::bin_count(lo, hi, bin_width);
  h.counts.assign(n, 0);
  for (Index i = 0; i < vol.data.size(); ++i) {
    const double v = std::clamp(static_cast<double>(vol.data[i]), lo, hi);
    const auto b = std::min(static_cast<std::size_t>(std::floor((v - lo) / bin_width)), n - 1);
    ++h.counts[b];
  }
  h.total = vol.data.size();
  return h;
}

double histogram_correlation(const Histogram& a, const Histogram& b) {
  if (!a.same_window(b) || a.counts.size() != b.counts.size()) {
    throw ConfigurationError("histogram windows differ: [" + std::to_string(a.lo) + ", " +
                             std::to_string(a.hi) + "]/" + std::to_string(a.bin_width) + " vs [" +
                             std::to_string(b.lo) + ", " + std::to_string(b.hi) + "]/" +
                             std::to_string(b.bin_width));
  }
  const auto n = static_cast<Index>(a.counts.size());
  Eigen::ArrayXd x(n), y(n);
  for (Index i = 0; i < n; ++i) {
    x[i] = static_cast<double>(a.counts[static_cast<std::size_t>(i)]);
    y[i] = static_cast<double>(b.counts[static_cast<std::size_t>(i)]);
  }
  x -= x.mean();
  y -= y.mean();
  const double sxx = x.square().sum(), syy = y.square().sum();
  if (sxx == 0.0 || syy == 0.0) {
    throw NumericError("histogram correlation undefined: constant count vector");
  }
  return std::clamp((x * y).sum() / std::sqrt(sxx * syy), -1.0, 1.0);
}

const EvalRow& EvalReport::row(const std::string& case_name, const std::string& method) const {
  for (const auto& r : rows) {
    if (r.case_name == case_name && r.method == method) return r;
  }
  throw ValidationError("report has no row for " + case_name + "/" + method);
}

std::vector<std::string> EvalReport::methods() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (std::find(out.begin(), out.end(), r.method) == out.end()) out.push_back(r.method);
  }
  return out;
}

std::vector<std::string> EvalReport::cases() const {
  std::vector<std::string> out;
  for (const auto& r : rows) {
    if (r.case_name != "mean" && std::find(out.begin(), out.end(), r.case_name) == out.end()) {
      out.push_back(r.case_name);
    }
  }
  return out;
}

EvalReport evaluate_run(const std::vector<EvalCase>& cases, const EvalWindow& w,
                        const std::optional<fs::path>& plot_dir) {
  if (cases.empty()) throw ValidationError("evaluate_run needs at least one case");
  EvalReport rep;
  rep.window = w;
  const auto [ref_lo, ref_hi] = w.ref_clip.value_or(std::pair{w.lo, w.hi});
  if (plot_dir) ensure_directory(*plot_dir);

  for (const auto& c : cases) {
    std::vector<std::pair<std::string, const Volume*>> methods{{"original", &c.original}};
    for (const auto& [name, v] : c.synthetic) methods.emplace_back(name, &v);
    for (const auto& [name, v] : methods) {
      if (v->shape != c.reference.shape) {
        throw ShapeError("case " + c.name + ": " + name + " volume shape differs from reference");
      }
    }
    const Volume ref_roi = clip_hu(extract_roi(c.reference, c.roi), ref_lo, ref_hi);
    const Histogram ref_hist = hu_histogram(ref_roi, ref_lo, ref_hi, w.bin_width);

    std::vector<std::pair<std::string, Histogram>> curves;
    for (const auto& [name, v] : methods) {
      const Volume roi = clip_hu(extract_roi(*v, c.roi), w.lo, w.hi);
      const RoiStats s = roi_stats(roi);
      Histogram h = hu_histogram(roi, w.lo, w.hi, w.bin_width);
      rep.rows.push_back({c.name, name, s.mean, s.sd, histogram_correlation(h, ref_hist)});
      curves.emplace_back(name, std::move(h));
    }
    const RoiStats rs = roi_stats(ref_roi);
    rep.rows.push_back({c.name, "reference", rs.mean, rs.sd, histogram_correlation(ref_hist, ref_hist)});
    curves.emplace_back("reference", ref_hist);
    if (plot_dir) write_png(histogram_plot(c.name, curves), *plot_dir / ("hist_" + c.name + ".png"));
  }

  std::vector<EvalRow> means;
  for (const auto& m : rep.methods()) {
    EvalRow acc{"mean", m, 0.0, 0.0, 0.0};
    int n = 0;
    for (const auto& r : rep.rows) {
      if (r.method != m) continue;
      acc.mean_hu += r.mean_hu;
      acc.sd_hu += r.sd_hu;
      acc.r += r.r;
      ++n;
    }
    acc.mean_hu /= n;
    acc.sd_hu /= n;
    acc.r /= n;
    means.push_back(acc);
  }
  rep.rows.insert(rep.rows.end(), means.begin(), means.end());
  return rep;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "case,method,mean_hu,sd_hu,r\n";
  char buf[256];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%s,%.4f,%.4f,%.6f\n", r.case_name.c_str(), r.method.c_str(),
                  r.mean_hu, r.sd_hu, r.r);
    out += buf;
  }
  return out;
}

void write_report_csv(const EvalReport& report, const fs::path& path) {
  write_file_atomic(path, report_csv(report));
}

}  // namespace fbgan
