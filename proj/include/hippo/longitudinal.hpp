#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hippo/imaging.hpp"

namespace hippo::longitudinal {

enum class Source { predicted, ground_truth };
enum class Status { healthy, MCI, AD, unknown };

Source parse_source(std::string_view name);
std::string_view source_name(Source s);
/// Case-insensitive; anything unrecognized is an error.
Status parse_status(std::string_view name);
std::string_view status_name(Status s);

struct TimePointVolume {
  std::string subject_id;
  double timepoint_years = 0.0;
  double volume_mm3 = 0.0;
  Source source = Source::ground_truth;
};

struct TimelineAnalysis {
  std::string subject_id;
  double slope = 0.0;       // mm^3 / year
  double intercept = 0.0;   // mm^3 at t = 0
  double rms_error = 0.0;   // mm^3
  double percent_annual_change = 0.0;
  int n_points = 0;
  Status status = Status::unknown;

  double slope_ml_per_year() const { return slope / 1000.0; }
};

/// Voxel count times the voxel volume.
double compute_volume(const imaging::BinaryMask3D& mask);

/// Ordinary least squares of volume on time. Points are sorted by
/// (time, volume) first so the result does not depend on input order.
/// The percent change is relative to the fitted value at the earliest time
/// and is NaN when that value is not positive (e.g. all-empty masks).
TimelineAnalysis fit_timeline(std::span<const TimePointVolume> points, Status status = Status::unknown);

struct BoxStats {
  std::string group;  // status name, or "all"
  std::size_t n = 0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Quantile of ascending data by linear interpolation at position (n - 1) q.
double quantile_sorted(std::span<const double> sorted, double q);
BoxStats box_stats(std::string group, std::vector<double> values);
/// Slope statistics for every status present (healthy, MCI, AD, unknown
/// order) followed by the "all" group.
std::vector<BoxStats> cohort_slope_stats(std::span<const TimelineAnalysis> analyses);

struct MaskEntry {
  std::string subject_id;
  double timepoint_years = 0.0;
  Status status = Status::unknown;
  std::filesystem::path mask_path;
};

/// Reads {"masks": [...]} or a cohort manifest {"scans": [...]}; each entry
/// needs subject_id, timepoint_years and "mask" (or "label"). Relative paths
/// are resolved against the manifest's directory.
std::vector<MaskEntry> load_mask_manifest(const std::filesystem::path& manifest);

struct AnalysisResult {
  std::vector<TimePointVolume> points;
  std::vector<TimelineAnalysis> timelines;
  std::vector<BoxStats> box;
};

/// Volumes per entry, one timeline per subject (subjects in sorted order).
AnalysisResult analyze(std::span<const MaskEntry> entries, Source source);

std::string timelines_csv(std::span<const TimelineAnalysis> timelines);
std::string points_csv(std::span<const TimePointVolume> points, std::span<const TimelineAnalysis> timelines);
std::string boxstats_csv(std::span<const BoxStats> stats);
/// Scatter of the points with the fitted line.
std::string timeline_svg(const TimelineAnalysis& fit, std::span<const TimePointVolume> points);
std::string slope_boxplot_svg(std::span<const BoxStats> stats);

/// timelines.csv, points.csv, boxstats.csv, slopes_boxplot.svg and
/// plots/<subject>.svg.
void write_outputs(const AnalysisResult& result, const std::filesystem::path& dir);

}  // namespace hippo::longitudinal
