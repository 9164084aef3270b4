#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "hippo/io_util.hpp"
#include "hippo/longitudinal.hpp"
#include "json.hpp"

using namespace hippo;
using namespace hippo::longitudinal;

namespace {

std::vector<TimePointVolume> points(std::vector<std::pair<double, double>> tv) {
  std::vector<TimePointVolume> out;
  for (auto [t, v] : tv) out.push_back({"s", t, v, Source::ground_truth});
  return out;
}

// Solves [n St; St Stt] [b; m] = [Sv; Stv] by Cramer's rule in long double.
std::pair<double, double> normal_equations(const std::vector<std::pair<double, double>>& tv) {
  long double n = 0, st = 0, stt = 0, sv = 0, stv = 0;
  for (auto [t, v] : tv) {
    n += 1;
    st += t;
    stt += static_cast<long double>(t) * t;
    sv += v;
    stv += static_cast<long double>(t) * v;
  }
  const long double det = n * stt - st * st;
  const long double b = (sv * stt - st * stv) / det;
  const long double m = (n * stv - st * sv) / det;
  return {static_cast<double>(m), static_cast<double>(b)};
}

}  // namespace

TEST_CASE("compute_volume") {
  imaging::BinaryMask3D m;
  m.data = imaging::Volume<std::uint8_t>({4, 4, 4});
  CHECK(compute_volume(m) == 0.0);
  for (int i = 0; i < 10; ++i) m.data.values()[i * 3] = 1;
  CHECK(compute_volume(m) == 10.0);
  m.spacing = {0.5, 2.0, 1.5};
  CHECK(compute_volume(m) == doctest::Approx(15.0));
}

TEST_CASE("fit_timeline exact cases") {
  auto two = fit_timeline(points({{0, 100}, {1, 90}}));
  CHECK(two.slope == -10.0);
  CHECK(two.rms_error == 0.0);
  CHECK(two.percent_annual_change == doctest::Approx(-10.0));
  CHECK(two.intercept == 100.0);
  CHECK(two.n_points == 2);
  CHECK(two.slope_ml_per_year() == -0.01);

  auto three = fit_timeline(points({{0, 100}, {1, 95}, {2, 90}}));
  CHECK(three.slope == -5.0);
  CHECK(three.rms_error == 0.0);
}

TEST_CASE("fit_timeline against the normal equations") {
  const std::vector<std::pair<double, double>> tv{{0, 10}, {1, 12}, {2, 11}, {3, 15}};
  auto fit = fit_timeline(points(tv));
  auto [m, b] = normal_equations(tv);
  CHECK(std::abs(fit.slope - m) <= 1e-9);
  CHECK(std::abs(fit.intercept - b) <= 1e-9);
  double ss = 0.0;
  for (auto [t, v] : tv) ss += (v - (b + m * t)) * (v - (b + m * t));
  CHECK(std::abs(fit.rms_error - std::sqrt(ss / 4.0)) <= 1e-9);
  CHECK(fit.slope == doctest::Approx(1.4));
}

TEST_CASE("fit_timeline is order independent and offset aware") {
  auto a = fit_timeline(points({{2, 5}, {0, 9}, {1, 8}}));
  auto b = fit_timeline(points({{0, 9}, {1, 8}, {2, 5}}));
  CHECK(a.slope == b.slope);
  CHECK(a.intercept == b.intercept);
  CHECK(a.rms_error == b.rms_error);
  auto late = fit_timeline(points({{70, 100}, {71, 98}}));
  CHECK(late.slope == -2.0);
  CHECK(late.percent_annual_change == doctest::Approx(-2.0));
  CHECK(late.intercept == doctest::Approx(240.0));
}

TEST_CASE("fit_timeline errors") {
  CHECK_THROWS(fit_timeline(points({{0, 1}})));
  CHECK_THROWS(fit_timeline(points({{1, 1}, {1, 2}})));
  auto flat = fit_timeline(points({{0, 0}, {1, 0}}));
  CHECK(flat.slope == 0.0);
  CHECK(std::isnan(flat.percent_annual_change));
  CHECK(timelines_csv(std::vector<TimelineAnalysis>{flat}).ends_with(",0,0,\n"));
}

TEST_CASE("box statistics") {
  auto one = box_stats("x", {4.0});
  CHECK(one.min == 4.0);
  CHECK(one.q1 == 4.0);
  CHECK(one.median == 4.0);
  CHECK(one.q3 == 4.0);
  CHECK(one.max == 4.0);
  auto five = box_stats("x", {5, 3, 1, 4, 2});
  CHECK(five.median == 3.0);
  CHECK(five.q1 == 2.0);
  CHECK(five.q3 == 4.0);

  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(-50.0, 20.0);
  std::vector<double> v(5);
  for (auto& x : v) x = nd(rng);
  auto s = box_stats("r", v);
  std::sort(v.begin(), v.end());
  CHECK(s.min == v[0]);
  CHECK(s.q1 == v[1]);
  CHECK(s.median == v[2]);
  CHECK(s.q3 == v[3]);
  CHECK(s.max == v[4]);
  CHECK(s.n == 5);
  const std::vector<double> four{1, 2, 3, 10};
  CHECK(quantile_sorted(four, 0.5) == 2.5);
  CHECK(quantile_sorted(four, 0.25) == 1.75);
  CHECK_THROWS(box_stats("e", {}));
}

TEST_CASE("cohort slope stats group by status") {
  std::vector<TimelineAnalysis> a(4);
  a[0].slope = -1;
  a[0].status = Status::AD;
  a[1].slope = -3;
  a[1].status = Status::AD;
  a[2].slope = -0.5;
  a[2].status = Status::healthy;
  a[3].slope = -2;
  a[3].status = Status::MCI;
  auto stats = cohort_slope_stats(a);
  REQUIRE(stats.size() == 4);
  CHECK(stats[0].group == "healthy");
  CHECK(stats[1].group == "MCI");
  CHECK(stats[2].group == "AD");
  CHECK(stats[2].median == -2.0);
  CHECK(stats[3].group == "all");
  CHECK(stats[3].n == 4);
}

TEST_CASE("status and source names") {
  CHECK(parse_status("ad") == Status::AD);
  CHECK(parse_status("Healthy") == Status::healthy);
  CHECK(parse_status("mci") == Status::MCI);
  CHECK_THROWS(parse_status("sick"));
  CHECK(parse_source("ground_truth") == Source::ground_truth);
  CHECK_THROWS(parse_source("guess"));
}

TEST_CASE("analyze a manifest and write outputs") {
  test::TempDir dir("analysis");
  nlohmann::json manifest;
  manifest["masks"] = nlohmann::json::array();
  for (int t = 0; t < 3; ++t) {
    imaging::BinaryMask3D m;
    m.data = imaging::Volume<std::uint8_t>({10, 10, 10});
    for (int i = 0; i < 100 - 10 * t; ++i) m.data.values()[i] = 1;
    const std::string name = "m" + std::to_string(t) + ".nii.gz";
    imaging::save_volume(m, dir / name);
    manifest["masks"].push_back({{"subject_id", "sub-a"}, {"timepoint_years", t}, {"status", "AD"}, {"mask", name}});
  }
  io::write_text_atomic(dir / "manifest.json", manifest.dump());
  auto entries = load_mask_manifest(dir / "manifest.json");
  REQUIRE(entries.size() == 3);
  auto result = analyze(entries, Source::predicted);
  REQUIRE(result.timelines.size() == 1);
  CHECK(result.timelines[0].slope == -10.0);
  CHECK(result.timelines[0].rms_error == 0.0);
  CHECK(result.timelines[0].status == Status::AD);

  write_outputs(result, dir / "out");
  for (const char* f : {"timelines.csv", "points.csv", "boxstats.csv", "slopes_boxplot.svg", "plots/sub-a.svg"}) {
    CHECK(std::filesystem::exists(dir / "out" / f));
  }
  const auto csv = io::read_text(dir / "out" / "timelines.csv");
  CHECK(csv.find("sub-a,AD,3,-10,-0.01,100,0,-10") != std::string::npos);
  const auto pts = io::read_text(dir / "out" / "points.csv");
  CHECK(pts.find("sub-a,AD,1,90,predicted") != std::string::npos);

  io::write_text_atomic(dir / "bad.json", "{\"masks\": [{\"subject_id\": \"x\"}]}");
  CHECK_THROWS(load_mask_manifest(dir / "bad.json"));
}
