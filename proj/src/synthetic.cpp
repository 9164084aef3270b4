#include "hippo/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hippo/io_util.hpp"
#include "hippo/nn/layers.hpp"

namespace hippo::synthetic {

using imaging::BinaryMask3D;
using imaging::Shape3;
using imaging::Spacing;

Texture parse_texture(std::string_view name) {
  if (name == "flat") return Texture::flat;
  if (name == "smooth_gradient") return Texture::smooth_gradient;
  throw std::invalid_argument("unknown texture '" + std::string(name) + "' (expected flat or smooth_gradient)");
}

std::string_view texture_name(Texture t) { return t == Texture::flat ? "flat" : "smooth_gradient"; }

double Ellipsoid::volume_mm3() const {
  return 4.0 / 3.0 * std::numbers::pi * semi_axes_mm[0] * semi_axes_mm[1] * semi_axes_mm[2];
}

namespace {

std::array<Ellipsoid, 2> base_ellipsoids(const PhantomSpec& spec) {
  const auto& g = spec.geometry;
  std::array<double, 3> mid{};
  for (int a = 0; a < 3; ++a) {
    mid[a] = static_cast<double>(spec.grid_shape[a] - 1) * spec.spacing[a] / 2.0 + g.center_shift_mm[a];
  }
  Ellipsoid left{mid, g.semi_axes_mm};
  Ellipsoid right{mid, g.semi_axes_mm};
  left.center_mm[PhantomGeometry::kPairAxis] -= g.pair_offset_mm;
  right.center_mm[PhantomGeometry::kPairAxis] += g.pair_offset_mm;
  return {left, right};
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void PhantomSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (grid_shape[a] == 0) throw std::invalid_argument("phantom.grid_shape entries must be > 0");
    if (!(spacing[a] > 0.0)) throw std::invalid_argument("phantom.spacing entries must be > 0");
    if (!(geometry.semi_axes_mm[a] > 0.0)) throw std::invalid_argument("phantom.semi_axes_mm entries must be > 0");
  }
  if (n_timepoints < 2) throw std::invalid_argument("phantom.n_timepoints must be >= 2");
  if (!(interval_years > 0.0)) throw std::invalid_argument("phantom.interval_years must be > 0");
  if (!(annual_shrink_fraction >= 0.0 && annual_shrink_fraction < 0.2)) {
    throw std::invalid_argument("phantom.annual_shrink_fraction must be in [0, 0.2)");
  }
  const double t_max = (n_timepoints - 1) * interval_years;
  if (!(1.0 - annual_shrink_fraction * t_max > 0.0)) {
    throw std::invalid_argument("phantom volume reaches zero before the last timepoint");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("phantom.noise_sigma must be >= 0");
  if (!(geometry.pair_offset_mm > geometry.semi_axes_mm[PhantomGeometry::kPairAxis])) {
    throw std::invalid_argument("phantom.pair_offset_mm must exceed semi_axes_mm[2] (ellipsoids overlap)");
  }
  for (const auto& e : base_ellipsoids(*this)) {
    for (int a = 0; a < 3; ++a) {
      const double lo = static_cast<double>(kMarginVoxels) * spacing[a];
      const double hi = static_cast<double>(grid_shape[a] - 1 - std::min(grid_shape[a] - 1, kMarginVoxels)) * spacing[a];
      if (e.center_mm[a] - e.semi_axes_mm[a] < lo || e.center_mm[a] + e.semi_axes_mm[a] > hi) {
        throw std::invalid_argument("phantom ellipsoid exceeds the grid (margin " + std::to_string(kMarginVoxels) +
                                    " voxels) along axis " + std::to_string(a));
      }
    }
  }
}

nlohmann::json to_json(const PhantomSpec& s) {
  return {{"grid_shape", s.grid_shape},
          {"spacing", s.spacing},
          {"n_timepoints", s.n_timepoints},
          {"interval_years", s.interval_years},
          {"annual_shrink_fraction", s.annual_shrink_fraction},
          {"noise_sigma", s.noise_sigma},
          {"texture", std::string(texture_name(s.texture))},
          {"seed", s.seed},
          {"semi_axes_mm", s.geometry.semi_axes_mm},
          {"pair_offset_mm", s.geometry.pair_offset_mm},
          {"center_shift_mm", s.geometry.center_shift_mm}};
}

PhantomSpec phantom_spec_from_json(const nlohmann::json& j) {
  PhantomSpec s;
  s.grid_shape = j.value("grid_shape", s.grid_shape);
  s.spacing = j.value("spacing", s.spacing);
  s.n_timepoints = j.value("n_timepoints", s.n_timepoints);
  s.interval_years = j.value("interval_years", s.interval_years);
  s.annual_shrink_fraction = j.value("annual_shrink_fraction", s.annual_shrink_fraction);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.texture = parse_texture(j.value("texture", std::string(texture_name(s.texture))));
  s.seed = j.value("seed", s.seed);
  s.geometry.semi_axes_mm = j.value("semi_axes_mm", s.geometry.semi_axes_mm);
  s.geometry.pair_offset_mm = j.value("pair_offset_mm", s.geometry.pair_offset_mm);
  s.geometry.center_shift_mm = j.value("center_shift_mm", s.geometry.center_shift_mm);
  return s;
}

std::array<Ellipsoid, 2> ellipsoids_at(const PhantomSpec& spec, double t_years) {
  const double ratio = 1.0 - spec.annual_shrink_fraction * t_years;
  if (!(ratio > 0.0)) throw std::invalid_argument("phantom volume is non-positive at t=" + std::to_string(t_years));
  const double scale = std::cbrt(ratio);
  auto shapes = base_ellipsoids(spec);
  for (auto& e : shapes) {
    for (auto& a : e.semi_axes_mm) a *= scale;
  }
  return shapes;
}

BinaryMask3D voxelize(const std::vector<Ellipsoid>& shapes, const Shape3& shape, const Spacing& spacing) {
  BinaryMask3D mask{imaging::Volume<std::uint8_t>(shape), spacing};
  for (const auto& e : shapes) {
    std::array<std::size_t, 3> lo{};
    std::array<std::size_t, 3> hi{};
    for (int a = 0; a < 3; ++a) {
      const double first = std::ceil((e.center_mm[a] - e.semi_axes_mm[a]) / spacing[a]);
      const double last = std::floor((e.center_mm[a] + e.semi_axes_mm[a]) / spacing[a]);
      lo[a] = static_cast<std::size_t>(std::max(0.0, first));
      hi[a] = static_cast<std::size_t>(std::clamp(last + 1.0, 0.0, static_cast<double>(shape[a])));
    }
    for (std::size_t k = lo[2]; k < hi[2]; ++k) {
      const double dz = (static_cast<double>(k) * spacing[2] - e.center_mm[2]) / e.semi_axes_mm[2];
      for (std::size_t j = lo[1]; j < hi[1]; ++j) {
        const double dy = (static_cast<double>(j) * spacing[1] - e.center_mm[1]) / e.semi_axes_mm[1];
        for (std::size_t i = lo[0]; i < hi[0]; ++i) {
          const double dx = (static_cast<double>(i) * spacing[0] - e.center_mm[0]) / e.semi_axes_mm[0];
          if (dx * dx + dy * dy + dz * dz <= 1.0) mask.data(i, j, k) = 1;
        }
      }
    }
  }
  return mask;
}

BinaryMask3D voxelize_ellipsoid(const std::array<double, 3>& semi_axes_mm, const Spacing& spacing) {
  Shape3 shape{};
  Ellipsoid e{{}, semi_axes_mm};
  for (int a = 0; a < 3; ++a) {
    const auto half = static_cast<std::size_t>(std::ceil(semi_axes_mm[a] / spacing[a])) + 2;
    shape[a] = 2 * half + 1;
    e.center_mm[a] = static_cast<double>(half) * spacing[a];
  }
  return voxelize({e}, shape, spacing);
}

std::vector<PhantomScan> generate_phantom_subject(const PhantomSpec& spec, const std::string& subject_id) {
  spec.validate();
  const auto& shape = spec.grid_shape;
  const auto& sp = spec.spacing;

  // Static anatomy: a head-shaped ellipsoid with a smooth or flat background.
  imaging::Volume<float> anatomy(shape, 0.05f);
  std::array<double, 3> mid{};
  std::array<double, 3> head{};
  for (int a = 0; a < 3; ++a) {
    mid[a] = static_cast<double>(shape[a] - 1) / 2.0;
    head[a] = 0.47 * static_cast<double>(shape[a]);
  }
  for (std::size_t k = 0; k < shape[2]; ++k) {
    for (std::size_t j = 0; j < shape[1]; ++j) {
      for (std::size_t i = 0; i < shape[0]; ++i) {
        const double dx = (static_cast<double>(i) - mid[0]) / head[0];
        const double dy = (static_cast<double>(j) - mid[1]) / head[1];
        const double dz = (static_cast<double>(k) - mid[2]) / head[2];
        if (dx * dx + dy * dy + dz * dz > 1.0) continue;
        double v = PhantomSpec::kBackgroundIntensity;
        if (spec.texture == Texture::smooth_gradient) {
          v += 0.1 * (static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(shape[2] - 1, 1)) - 0.5);
          v += 0.04 * std::sin(2.0 * std::numbers::pi * static_cast<double>(j) /
                               static_cast<double>(std::max<std::size_t>(shape[1] - 1, 1)));
        }
        anatomy(i, j, k) = static_cast<float>(v);
      }
    }
  }

  std::mt19937_64 rng(spec.seed);
  std::vector<PhantomScan> scans;
  for (int n = 0; n < spec.n_timepoints; ++n) {
    const double t = n * spec.interval_years;
    const auto shapes = ellipsoids_at(spec, t);
    PhantomScan scan;
    scan.timepoint_years = t;
    scan.label = voxelize({shapes.begin(), shapes.end()}, shape, sp);
    scan.image.data = anatomy;
    scan.image.spacing = sp;
    scan.image.subject_id = subject_id;
    scan.image.timepoint_years = t;
    auto values = scan.image.data.values();
    const auto labels = scan.label.data.values();
    for (std::size_t v = 0; v < values.size(); ++v) {
      if (labels[v]) values[v] = static_cast<float>(PhantomSpec::kHippocampusIntensity);
    }
    if (spec.noise_sigma > 0.0) {
      for (std::size_t v = 0; v < values.size(); v += 2) {
        const double u1 = 1.0 - nn::uniform01(rng);
        const double u2 = nn::uniform01(rng);
        const double r = spec.noise_sigma * std::sqrt(-2.0 * std::log(u1));
        values[v] += static_cast<float>(r * std::cos(2.0 * std::numbers::pi * u2));
        if (v + 1 < values.size()) values[v + 1] += static_cast<float>(r * std::sin(2.0 * std::numbers::pi * u2));
      }
    }
    scans.push_back(std::move(scan));
  }
  return scans;
}

void CohortSpec::validate() const {
  if (n_subjects < 1) throw std::invalid_argument("cohort.n_subjects must be >= 1");
  if (shrink_fractions.empty()) throw std::invalid_argument("cohort.shrink_fractions must not be empty");
  if (statuses.size() != shrink_fractions.size()) {
    throw std::invalid_argument("cohort.statuses must have one entry per shrink fraction");
  }
  if (!(geometry_jitter >= 0.0 && geometry_jitter < 0.5)) {
    throw std::invalid_argument("cohort.geometry_jitter must be in [0, 0.5)");
  }
  base.validate();
}

nlohmann::json to_json(const CohortSpec& c) {
  return {{"n_subjects", c.n_subjects},
          {"phantom", to_json(c.base)},
          {"shrink_fractions", c.shrink_fractions},
          {"statuses", c.statuses},
          {"geometry_jitter", c.geometry_jitter},
          {"seed", c.seed}};
}

CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec c;
  c.n_subjects = j.value("n_subjects", c.n_subjects);
  if (j.contains("phantom")) c.base = phantom_spec_from_json(j.at("phantom"));
  c.shrink_fractions = j.value("shrink_fractions", c.shrink_fractions);
  c.statuses = j.value("statuses", c.statuses);
  c.geometry_jitter = j.value("geometry_jitter", c.geometry_jitter);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::vector<CohortSubject> plan_cohort(const CohortSpec& cohort) {
  cohort.validate();
  std::mt19937_64 rng(cohort.seed);
  auto jitter = [&](double scale) { return (2.0 * nn::uniform01(rng) - 1.0) * scale; };
  std::vector<CohortSubject> subjects;
  for (int s = 0; s < cohort.n_subjects; ++s) {
    CohortSubject sub;
    char id[32];
    std::snprintf(id, sizeof(id), "sub-%03d", s);
    sub.subject_id = id;
    const auto group = static_cast<std::size_t>(s) % cohort.shrink_fractions.size();
    sub.status = cohort.statuses[group];
    sub.spec = cohort.base;
    sub.spec.annual_shrink_fraction = cohort.shrink_fractions[group];
    sub.spec.seed = splitmix64(cohort.seed ^ splitmix64(static_cast<std::uint64_t>(s)));
    for (auto& a : sub.spec.geometry.semi_axes_mm) a *= 1.0 + jitter(cohort.geometry_jitter);
    sub.spec.geometry.pair_offset_mm *= 1.0 + jitter(cohort.geometry_jitter * 0.5);
    for (int a = 0; a < 3; ++a) sub.spec.geometry.center_shift_mm[a] += jitter(cohort.geometry_jitter * 20.0);
    sub.spec.validate();
    subjects.push_back(std::move(sub));
  }
  return subjects;
}

nlohmann::json write_cohort(const CohortSpec& cohort, const std::filesystem::path& dir) {
  const auto subjects = plan_cohort(cohort);
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "labels");
  nlohmann::json manifest;
  manifest["format"] = "hippo-cohort";
  manifest["version"] = 1;
  manifest["cohort"] = to_json(cohort);
  auto& scans = manifest["scans"] = nlohmann::json::array();
  for (const auto& sub : subjects) {
    const auto series = generate_phantom_subject(sub.spec, sub.subject_id);
    for (std::size_t n = 0; n < series.size(); ++n) {
      const std::string stem = sub.subject_id + "_t" + std::to_string(n) + ".nii.gz";
      imaging::save_volume(series[n].image, dir / "images" / stem);
      imaging::save_volume(series[n].label, dir / "labels" / stem);
      scans.push_back({{"subject_id", sub.subject_id},
                       {"timepoint_years", series[n].timepoint_years},
                       {"status", sub.status},
                       {"annual_shrink_fraction", sub.spec.annual_shrink_fraction},
                       {"image", "images/" + stem},
                       {"label", "labels/" + stem}});
    }
  }
  io::write_text_atomic(dir / "manifest.json", manifest.dump(2));
  return manifest;
}

}  // namespace hippo::synthetic
