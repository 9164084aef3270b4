#include <cmath>
#include <numbers>

#include "doctest.h"
#include "helpers.hpp"
#include "hippo/io_util.hpp"
#include "hippo/longitudinal.hpp"
#include "hippo/synthetic.hpp"

using namespace hippo;
using namespace hippo::synthetic;

TEST_CASE("ellipsoid voxelization matches the analytic volume") {
  auto m = voxelize_ellipsoid({6.0, 4.0, 4.0}, {1.0, 1.0, 1.0});
  const double analytic = 4.0 / 3.0 * std::numbers::pi * 96.0;
  CHECK(std::abs(static_cast<double>(m.count()) - analytic) <= 0.1 * analytic);
  // brute force over the same grid
  std::size_t count = 0;
  const auto& s = m.data.shape();
  for (std::size_t k = 0; k < s[2]; ++k)
    for (std::size_t j = 0; j < s[1]; ++j)
      for (std::size_t i = 0; i < s[0]; ++i) {
        const double x = (i - (s[0] - 1) / 2.0) / 6.0, y = (j - (s[1] - 1) / 2.0) / 4.0,
                     z = (k - (s[2] - 1) / 2.0) / 4.0;
        count += x * x + y * y + z * z <= 1.0;
      }
  CHECK(m.count() == count);
}

TEST_CASE("default phantom: label volume close to the analytic pair volume") {
  PhantomSpec spec;
  spec.n_timepoints = 2;
  auto scans = generate_phantom_subject(spec);
  REQUIRE(scans.size() == 2);
  auto e = ellipsoids_at(spec, 0.0);
  const double analytic = e[0].volume_mm3() + e[1].volume_mm3();
  const double measured = longitudinal::compute_volume(scans[0].label);
  CHECK(std::abs(measured - analytic) <= 0.1 * analytic);
  CHECK(scans[0].image.data.shape() == imaging::Shape3{64, 96, 112});
  CHECK(scans[1].timepoint_years == 1.0);
}

TEST_CASE("programmed shrinkage") {
  PhantomSpec spec;
  spec.n_timepoints = 11;
  spec.noise_sigma = 0.0;
  SUBCASE("zero shrink keeps labels identical") {
    spec.annual_shrink_fraction = 0.0;
    auto scans = generate_phantom_subject(spec);
    for (const auto& s : scans) CHECK(s.label.data == scans[0].label.data);
  }
  SUBCASE("3% per year over 10 years") {
    spec.annual_shrink_fraction = 0.03;
    // Off-lattice centers; a lattice-centered pair has correlated voxelization error.
    spec.geometry.center_shift_mm = {0.3, 0.17, -0.21};
    auto scans = generate_phantom_subject(spec);
    const double ratio = static_cast<double>(scans[10].label.count()) / static_cast<double>(scans[0].label.count());
    CHECK(std::abs(ratio - 0.70) <= 0.02 * 0.70);
    std::vector<longitudinal::TimePointVolume> pts;
    for (const auto& s : scans) pts.push_back({"p", s.timepoint_years, longitudinal::compute_volume(s.label)});
    auto fit = longitudinal::fit_timeline(pts);
    auto e = ellipsoids_at(spec, 0.0);
    const double v0 = e[0].volume_mm3() + e[1].volume_mm3();
    CHECK(std::abs(fit.slope - (-0.03 * v0)) <= 0.01 * 0.03 * v0);
  }
}

TEST_CASE("seed changes noise but not geometry") {
  PhantomSpec a;
  a.n_timepoints = 2;
  a.seed = 1;
  PhantomSpec b = a;
  b.seed = 2;
  auto sa = generate_phantom_subject(a, "a");
  auto sb = generate_phantom_subject(b, "b");
  CHECK(sa[0].label.data == sb[0].label.data);
  CHECK_FALSE(sa[0].image.data == sb[0].image.data);
  CHECK(generate_phantom_subject(a, "a")[1].image.data == sa[1].image.data);
  CHECK(sa[0].image.subject_id == "a");
}

TEST_CASE("intensity model") {
  PhantomSpec spec;
  spec.n_timepoints = 2;
  spec.noise_sigma = 0.0;
  spec.texture = Texture::flat;
  auto scan = generate_phantom_subject(spec)[0];
  const auto img = scan.image.data.values();
  const auto lab = scan.label.data.values();
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (lab[i]) CHECK(img[i] == doctest::Approx(PhantomSpec::kHippocampusIntensity));
  }
  const std::size_t mid = scan.image.data.linear(32, 48, 10);
  CHECK(img[mid] == doctest::Approx(PhantomSpec::kBackgroundIntensity));
}

TEST_CASE("spec validation") {
  PhantomSpec spec;
  CHECK_NOTHROW(spec.validate());
  auto bad = spec;
  bad.grid_shape = {40, 96, 112};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.n_timepoints = 1;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.annual_shrink_fraction = 0.2;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.n_timepoints = 40;
  bad.annual_shrink_fraction = 0.19;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.geometry.pair_offset_mm = 5.0;
  CHECK_THROWS(bad.validate());
  bad = spec;
  bad.noise_sigma = -1.0;
  CHECK_THROWS(bad.validate());
  CHECK(phantom_spec_from_json(to_json(spec)).geometry == spec.geometry);
}

TEST_CASE("cohort planning and writing") {
  CohortSpec cohort;
  cohort.n_subjects = 4;
  cohort.base.n_timepoints = 2;
  cohort.base.grid_shape = {64, 96, 112};
  cohort.seed = 3;
  auto plan = plan_cohort(cohort);
  REQUIRE(plan.size() == 4);
  CHECK(plan[0].subject_id == "sub-000");
  CHECK(plan[1].status == "AD");
  CHECK(plan[1].spec.annual_shrink_fraction == 0.03);
  CHECK(plan[3].status == "healthy");
  CHECK_FALSE(plan[0].spec.seed == plan[1].spec.seed);
  CHECK_FALSE(plan[0].spec.geometry == plan[1].spec.geometry);
  auto again = plan_cohort(cohort);
  for (std::size_t i = 0; i < plan.size(); ++i) CHECK(again[i].spec.geometry == plan[i].spec.geometry);

  test::TempDir dir("cohort");
  cohort.n_subjects = 2;
  auto manifest = write_cohort(cohort, dir.path());
  CHECK(manifest["format"] == "hippo-cohort");
  REQUIRE(manifest["scans"].size() == 4);
  const auto first = manifest["scans"][0];
  auto label = imaging::load_mask(dir.path() / first["label"].get<std::string>());
  auto image = imaging::load_volume(dir.path() / first["image"].get<std::string>());
  auto expected = generate_phantom_subject(plan_cohort(cohort)[0].spec, "sub-000");
  CHECK(label.data == expected[0].label.data);
  CHECK(image.data == expected[0].image.data);
  auto on_disk = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  CHECK(on_disk == manifest);

  cohort.statuses = {"healthy"};
  CHECK_THROWS(cohort.validate());
}
