#include "hippo/longitudinal.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>

#include "hippo/io_util.hpp"
#include "json.hpp"

namespace hippo::longitudinal {

Source parse_source(std::string_view name) {
  if (name == "predicted") return Source::predicted;
  if (name == "ground_truth") return Source::ground_truth;
  throw std::invalid_argument("unknown volume source '" + std::string(name) + "' (expected predicted or ground_truth)");
}

std::string_view source_name(Source s) { return s == Source::predicted ? "predicted" : "ground_truth"; }

Status parse_status(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "healthy" || lower == "cn" || lower == "normal") return Status::healthy;
  if (lower == "mci") return Status::MCI;
  if (lower == "ad") return Status::AD;
  if (lower == "unknown" || lower.empty()) return Status::unknown;
  throw std::invalid_argument("unknown status '" + std::string(name) + "' (expected healthy, MCI, AD or unknown)");
}

std::string_view status_name(Status s) {
  switch (s) {
    case Status::healthy: return "healthy";
    case Status::MCI: return "MCI";
    case Status::AD: return "AD";
    case Status::unknown: return "unknown";
  }
  return "unknown";
}

double compute_volume(const imaging::BinaryMask3D& mask) {
  mask.validate();
  return static_cast<double>(mask.count()) * mask.spacing[0] * mask.spacing[1] * mask.spacing[2];
}

TimelineAnalysis fit_timeline(std::span<const TimePointVolume> input, Status status) {
  if (input.size() < 2) throw std::invalid_argument("fit_timeline needs at least 2 points, got " + std::to_string(input.size()));
  std::vector<TimePointVolume> points(input.begin(), input.end());
  for (const auto& p : points) {
    if (!std::isfinite(p.timepoint_years) || !std::isfinite(p.volume_mm3)) {
      throw std::invalid_argument("fit_timeline: non-finite point for subject " + p.subject_id);
    }
  }
  std::sort(points.begin(), points.end(), [](const auto& a, const auto& b) {
    if (a.timepoint_years != b.timepoint_years) return a.timepoint_years < b.timepoint_years;
    return a.volume_mm3 < b.volume_mm3;
  });
  const double t0 = points.front().timepoint_years;
  if (points.back().timepoint_years == t0) {
    throw std::invalid_argument("fit_timeline: all timepoints equal (singular design) for subject " +
                                points.front().subject_id);
  }

  // Plain sums on t - t0 keep integer-valued inputs exact.
  const double n = static_cast<double>(points.size());
  double st = 0.0, sv = 0.0, stt = 0.0, stv = 0.0;
  for (const auto& p : points) {
    const double t = p.timepoint_years - t0;
    st += t;
    sv += p.volume_mm3;
    stt += t * t;
    stv += t * p.volume_mm3;
  }
  const double slope = (n * stv - st * sv) / (n * stt - st * st);
  const double base = (sv - slope * st) / n;  // fitted value at t0

  double ss = 0.0;
  for (const auto& p : points) {
    const double r = p.volume_mm3 - (base + slope * (p.timepoint_years - t0));
    ss += r * r;
  }

  TimelineAnalysis out;
  out.subject_id = points.front().subject_id;
  out.slope = slope;
  out.intercept = base - slope * t0;
  out.rms_error = std::sqrt(ss / n);
  out.percent_annual_change = base > 0.0 ? 100.0 * slope / base : std::numeric_limits<double>::quiet_NaN();
  out.n_points = static_cast<int>(points.size());
  out.status = status;
  return out;
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty data");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile q must be in [0, 1]");
  const double pos = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BoxStats box_stats(std::string group, std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("box stats of empty group '" + group + "'");
  std::sort(values.begin(), values.end());
  BoxStats b;
  b.group = std::move(group);
  b.n = values.size();
  b.min = values.front();
  b.q1 = quantile_sorted(values, 0.25);
  b.median = quantile_sorted(values, 0.5);
  b.q3 = quantile_sorted(values, 0.75);
  b.max = values.back();
  return b;
}

std::vector<BoxStats> cohort_slope_stats(std::span<const TimelineAnalysis> analyses) {
  if (analyses.empty()) throw std::invalid_argument("cohort_slope_stats: no analyses");
  std::vector<BoxStats> out;
  for (auto status : {Status::healthy, Status::MCI, Status::AD, Status::unknown}) {
    std::vector<double> slopes;
    for (const auto& a : analyses) {
      if (a.status == status) slopes.push_back(a.slope);
    }
    if (!slopes.empty()) out.push_back(box_stats(std::string(status_name(status)), std::move(slopes)));
  }
  std::vector<double> all;
  for (const auto& a : analyses) all.push_back(a.slope);
  out.push_back(box_stats("all", std::move(all)));
  return out;
}

std::vector<MaskEntry> load_mask_manifest(const std::filesystem::path& manifest) {
  const auto j = nlohmann::json::parse(io::read_text(manifest));
  const auto base = manifest.parent_path();
  const nlohmann::json* list = nullptr;
  if (j.contains("masks")) list = &j.at("masks");
  else if (j.contains("scans")) list = &j.at("scans");
  else throw std::invalid_argument(manifest.string() + ": expected a \"masks\" or \"scans\" array");
  std::vector<MaskEntry> out;
  for (const auto& e : *list) {
    MaskEntry m;
    m.subject_id = e.at("subject_id").get<std::string>();
    m.timepoint_years = e.at("timepoint_years").get<double>();
    m.status = parse_status(e.value("status", std::string("unknown")));
    std::filesystem::path p = e.contains("mask") ? e.at("mask").get<std::string>() : e.at("label").get<std::string>();
    m.mask_path = p.is_absolute() ? p : base / p;
    out.push_back(std::move(m));
  }
  if (out.empty()) throw std::invalid_argument(manifest.string() + ": manifest lists no masks");
  return out;
}

AnalysisResult analyze(std::span<const MaskEntry> entries, Source source) {
  AnalysisResult result;
  std::map<std::string, std::vector<TimePointVolume>> by_subject;
  std::map<std::string, Status> status;
  for (const auto& e : entries) {
    const auto mask = imaging::load_mask(e.mask_path);
    TimePointVolume p{e.subject_id, e.timepoint_years, compute_volume(mask), source};
    result.points.push_back(p);
    by_subject[e.subject_id].push_back(p);
    status[e.subject_id] = e.status;
  }
  for (const auto& [id, points] : by_subject) result.timelines.push_back(fit_timeline(points, status[id]));
  result.box = cohort_slope_stats(result.timelines);
  return result;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;
  static constexpr double kW = 480, kH = 320, kLeft = 70, kRight = 20, kTop = 30, kBottom = 45;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kW - kLeft - kRight); }
  double py(double y) const { return kH - kBottom - (y - y0) / (y1 - y0) * (kH - kTop - kBottom); }
};

void pad_range(double& lo, double& hi) {
  if (hi <= lo) {
    const double d = std::max(1.0, std::abs(lo) * 0.05);
    lo -= d;
    hi += d;
  } else {
    const double d = (hi - lo) * 0.08;
    lo -= d;
    hi += d;
  }
}

std::string svg_open(const Frame& f, const std::string& title, const std::string& xlabel, const std::string& ylabel) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(Frame::kW) + "\" height=\"" +
                  num(Frame::kH) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + num(Frame::kW / 2) + "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" + svg_escape(title) +
       "</text>\n";
  const double bx = f.px(f.x0), by = f.py(f.y0), tx = f.px(f.x1), ty = f.py(f.y1);
  s += "<path d=\"M" + num(bx) + " " + num(ty) + " L" + num(bx) + " " + num(by) + " L" + num(tx) + " " + num(by) +
       "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    s += "<text x=\"" + num(f.px(xv)) + "\" y=\"" + num(by + 14) + "\" text-anchor=\"middle\">" + num(std::round(xv * 100) / 100) +
         "</text>\n";
    s += "<text x=\"" + num(bx - 4) + "\" y=\"" + num(f.py(yv) + 4) + "\" text-anchor=\"end\">" + num(std::round(yv)) +
         "</text>\n";
  }
  s += "<text x=\"" + num((bx + tx) / 2) + "\" y=\"" + num(Frame::kH - 8) + "\" text-anchor=\"middle\">" + xlabel +
       "</text>\n";
  s += "<text x=\"14\" y=\"" + num((by + ty) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
       num((by + ty) / 2) + ")\">" + ylabel + "</text>\n";
  return s;
}

}  // namespace

std::string timelines_csv(std::span<const TimelineAnalysis> timelines) {
  std::string s =
      "subject_id,status,n_points,slope_mm3_per_year,slope_ml_per_year,intercept_mm3,rms_error_mm3,"
      "percent_annual_change\n";
  for (const auto& t : timelines) {
    s += t.subject_id + "," + std::string(status_name(t.status)) + "," + std::to_string(t.n_points) + "," +
         num(t.slope) + "," + num(t.slope_ml_per_year()) + "," + num(t.intercept) + "," + num(t.rms_error) + "," +
         (std::isfinite(t.percent_annual_change) ? num(t.percent_annual_change) : std::string()) + "\n";
  }
  return s;
}

std::string points_csv(std::span<const TimePointVolume> points, std::span<const TimelineAnalysis> timelines) {
  std::map<std::string, Status> status;
  for (const auto& t : timelines) status[t.subject_id] = t.status;
  std::string s = "subject_id,status,timepoint_years,volume_mm3,source\n";
  for (const auto& p : points) {
    const auto it = status.find(p.subject_id);
    s += p.subject_id + "," + std::string(status_name(it == status.end() ? Status::unknown : it->second)) + "," +
         num(p.timepoint_years) + "," + num(p.volume_mm3) + "," + std::string(source_name(p.source)) + "\n";
  }
  return s;
}

std::string boxstats_csv(std::span<const BoxStats> stats) {
  std::string s = "group,n,min,q1,median,q3,max\n";
  for (const auto& b : stats) {
    s += b.group + "," + std::to_string(b.n) + "," + num(b.min) + "," + num(b.q1) + "," + num(b.median) + "," +
         num(b.q3) + "," + num(b.max) + "\n";
  }
  return s;
}

std::string timeline_svg(const TimelineAnalysis& fit, std::span<const TimePointVolume> points) {
  if (points.empty()) throw std::invalid_argument("timeline_svg: no points");
  Frame f{points.front().timepoint_years, points.front().timepoint_years, points.front().volume_mm3,
          points.front().volume_mm3};
  for (const auto& p : points) {
    f.x0 = std::min(f.x0, p.timepoint_years);
    f.x1 = std::max(f.x1, p.timepoint_years);
    f.y0 = std::min(f.y0, p.volume_mm3);
    f.y1 = std::max(f.y1, p.volume_mm3);
  }
  const double tx0 = f.x0, tx1 = f.x1;
  for (double t : {tx0, tx1}) {
    f.y0 = std::min(f.y0, fit.intercept + fit.slope * t);
    f.y1 = std::max(f.y1, fit.intercept + fit.slope * t);
  }
  pad_range(f.x0, f.x1);
  pad_range(f.y0, f.y1);
  std::string s = svg_open(f, fit.subject_id + " (" + std::string(status_name(fit.status)) + ") slope " +
                                  num(std::round(fit.slope * 100) / 100) + " mm3/yr, rms " +
                                  num(std::round(fit.rms_error * 100) / 100) + " mm3",
                           "time (years)", "volume (mm3)");
  for (const auto& p : points) {
    s += "<circle cx=\"" + num(f.px(p.timepoint_years)) + "\" cy=\"" + num(f.py(p.volume_mm3)) +
         "\" r=\"3.5\" fill=\"#1f77b4\"/>\n";
  }
  s += "<line x1=\"" + num(f.px(tx0)) + "\" y1=\"" + num(f.py(fit.intercept + fit.slope * tx0)) + "\" x2=\"" +
       num(f.px(tx1)) + "\" y2=\"" + num(f.py(fit.intercept + fit.slope * tx1)) +
       "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
  s += "</svg>\n";
  return s;
}

std::string slope_boxplot_svg(std::span<const BoxStats> stats) {
  if (stats.empty()) throw std::invalid_argument("slope_boxplot_svg: no groups");
  Frame f{0.0, static_cast<double>(stats.size()), stats.front().min, stats.front().max};
  for (const auto& b : stats) {
    f.y0 = std::min(f.y0, b.min);
    f.y1 = std::max(f.y1, b.max);
  }
  pad_range(f.y0, f.y1);
  std::string s = svg_open(f, "Slopes by group", "group", "slope (mm3/year)");
  for (std::size_t g = 0; g < stats.size(); ++g) {
    const auto& b = stats[g];
    const double cx = f.px(static_cast<double>(g) + 0.5);
    const double half = 0.25 * (f.px(1.0) - f.px(0.0));
    s += "<line x1=\"" + num(cx) + "\" y1=\"" + num(f.py(b.min)) + "\" x2=\"" + num(cx) + "\" y2=\"" + num(f.py(b.max)) +
         "\" stroke=\"black\"/>\n";
    s += "<rect x=\"" + num(cx - half) + "\" y=\"" + num(f.py(b.q3)) + "\" width=\"" + num(2 * half) + "\" height=\"" +
         num(f.py(b.q1) - f.py(b.q3)) + "\" fill=\"#aec7e8\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + num(cx - half) + "\" y1=\"" + num(f.py(b.median)) + "\" x2=\"" + num(cx + half) + "\" y2=\"" +
         num(f.py(b.median)) + "\" stroke=\"black\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + num(cx) + "\" y=\"" + num(f.py(f.y0) + 28) + "\" text-anchor=\"middle\">" + svg_escape(b.group) +
         " (n=" + std::to_string(b.n) + ")</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_outputs(const AnalysisResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "plots");
  io::write_text_atomic(dir / "timelines.csv", timelines_csv(result.timelines));
  io::write_text_atomic(dir / "points.csv", points_csv(result.points, result.timelines));
  io::write_text_atomic(dir / "boxstats.csv", boxstats_csv(result.box));
  io::write_text_atomic(dir / "slopes_boxplot.svg", slope_boxplot_svg(result.box));
  for (const auto& t : result.timelines) {
    std::vector<TimePointVolume> mine;
    for (const auto& p : result.points) {
      if (p.subject_id == t.subject_id) mine.push_back(p);
    }
    io::write_text_atomic(dir / "plots" / (t.subject_id + ".svg"), timeline_svg(t, mine));
  }
}

}  // namespace hippo::longitudinal
