#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hippo/imaging.hpp"
#include "json.hpp"

namespace hippo::synthetic {

enum class Texture { flat, smooth_gradient };

Texture parse_texture(std::string_view name);
std::string_view texture_name(Texture t);

/// Two axis-aligned ellipsoids mirrored across the mid-plane of axis 2.
/// The long semi-axis runs along axis 0 (the sagittal slicing axis).
/// Positions and lengths are in mm; the grid origin is voxel (0, 0, 0).
struct PhantomGeometry {
  static constexpr int kPairAxis = 2;

  std::array<double, 3> semi_axes_mm{24.0, 11.0, 8.0};
  double pair_offset_mm = 14.0;                 // distance of each center from the mid-plane
  std::array<double, 3> center_shift_mm{0.0, 0.0, 0.0};  // added to both centers

  bool operator==(const PhantomGeometry&) const = default;
};

struct PhantomSpec {
  imaging::Shape3 grid_shape{64, 96, 112};
  imaging::Spacing spacing{1.0, 1.0, 1.0};
  int n_timepoints = 3;
  double interval_years = 1.0;
  double annual_shrink_fraction = 0.03;
  double noise_sigma = 0.05;
  Texture texture = Texture::smooth_gradient;
  std::uint64_t seed = 0;
  PhantomGeometry geometry;

  static constexpr double kHippocampusIntensity = 0.8;
  static constexpr double kBackgroundIntensity = 0.3;
  static constexpr std::size_t kMarginVoxels = 4;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const PhantomSpec& spec);
PhantomSpec phantom_spec_from_json(const nlohmann::json& j);

struct Ellipsoid {
  std::array<double, 3> center_mm;
  std::array<double, 3> semi_axes_mm;

  double volume_mm3() const;
};

/// The ellipsoid pair at time t (semi-axes scaled by (1 - f t)^(1/3)).
std::array<Ellipsoid, 2> ellipsoids_at(const PhantomSpec& spec, double t_years);

/// Voxels whose centers satisfy sum(((x - c) / a)^2) <= 1.
imaging::BinaryMask3D voxelize(const std::vector<Ellipsoid>& shapes, const imaging::Shape3& shape,
                               const imaging::Spacing& spacing);
/// Single ellipsoid centered in the smallest grid holding it plus a 2-voxel border.
imaging::BinaryMask3D voxelize_ellipsoid(const std::array<double, 3>& semi_axes_mm, const imaging::Spacing& spacing);

struct PhantomScan {
  imaging::VoxelGrid image;
  imaging::BinaryMask3D label;
  double timepoint_years = 0.0;
};

/// One scan per timepoint (t = k * interval_years). Label geometry depends
/// only on the PhantomSpec geometry fields; the seed drives the noise field.
std::vector<PhantomScan> generate_phantom_subject(const PhantomSpec& spec, const std::string& subject_id = "phantom");

struct CohortSpec {
  int n_subjects = 20;
  PhantomSpec base;
  /// Per-subject annual shrink fractions are taken from this list in turn.
  std::vector<double> shrink_fractions{0.015, 0.03, 0.0225};
  std::vector<std::string> statuses{"healthy", "AD", "MCI"};
  double geometry_jitter = 0.05;  // relative semi-axis jitter and center shift scale
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json to_json(const CohortSpec& spec);
CohortSpec cohort_spec_from_json(const nlohmann::json& j);

struct CohortSubject {
  std::string subject_id;
  std::string status;
  PhantomSpec spec;
};

/// Subject ids are "sub-000", "sub-001", ...; each gets jittered geometry and
/// its own noise seed derived from the cohort seed.
std::vector<CohortSubject> plan_cohort(const CohortSpec& cohort);

/// Writes images/<id>_t<k>.nii.gz, labels/<id>_t<k>.nii.gz and manifest.json.
/// Returns the manifest.
nlohmann::json write_cohort(const CohortSpec& cohort, const std::filesystem::path& dir);

}  // namespace hippo::synthetic
