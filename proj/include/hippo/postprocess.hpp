#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hippo/imaging.hpp"
#include "json.hpp"

namespace hippo::postprocess {

using imaging::BinaryMask3D;

struct PostprocessConfig {
  double prob_threshold = 0.5;
  int min_component_voxels = 20;
  int keep_largest_k = 2;
  int roi_margin_voxels = 4;

  void validate() const;
};

nlohmann::json to_json(const PostprocessConfig& c);
PostprocessConfig postprocess_config_from_json(const nlohmann::json& j);

/// 1 where value > t (ties give 0). Throws on values outside [0, 1] or NaN.
std::vector<std::uint8_t> threshold_probabilities(std::span<const float> probs, double t);
BinaryMask3D threshold_probabilities(const imaging::Volume<float>& probs, const imaging::Spacing& spacing, double t);

struct Component {
  std::size_t size = 0;
  std::size_t first_index = 0;  // lowest linear voxel index
  std::array<double, 3> centroid{};
  std::vector<std::size_t> voxels;  // linear indices, ascending
};

/// 26-connected components ordered by their lowest linear voxel index.
std::vector<Component> connected_components(const BinaryMask3D& mask);

/// Drops components smaller than min_voxels, then keeps the keep_largest_k
/// largest (ties broken by lowest linear index). keep_largest_k == 0 keeps all.
BinaryMask3D remove_small_components(const BinaryMask3D& mask, int min_voxels, int keep_largest_k);
BinaryMask3D remove_small_components(const BinaryMask3D& mask, const PostprocessConfig& config);

/// Inclusive voxel bounds.
struct RoiBox {
  std::array<std::size_t, 3> lo{};
  std::array<std::size_t, 3> hi{};

  bool contains(const std::array<double, 3>& p) const;
  bool operator==(const RoiBox&) const = default;
};

nlohmann::json to_json(const RoiBox& box);
RoiBox roi_from_json(const nlohmann::json& j);

/// Union of the masks' bounding boxes grown by margin and clamped to the
/// volume. Throws when every mask is empty or shapes differ.
RoiBox derive_roi(std::span<const BinaryMask3D> masks, int margin_voxels);

/// Drops every component whose centroid lies outside the box.
BinaryMask3D roi_filter(const BinaryMask3D& mask, const RoiBox& box);

/// threshold -> roi_filter (when a box is given) -> remove_small_components.
BinaryMask3D postprocess_probabilities(const imaging::Volume<float>& probs, const imaging::Spacing& spacing,
                                       const PostprocessConfig& config, const std::optional<RoiBox>& roi);
/// Same chain applied to an already binary mask.
BinaryMask3D postprocess_mask(const BinaryMask3D& mask, const PostprocessConfig& config,
                              const std::optional<RoiBox>& roi);

/// Mean Dice over adjacent slice pairs that are both nonempty; 1 when there
/// is no such pair.
double continuity_metric(const BinaryMask3D& mask, imaging::Axis axis);

}  // namespace hippo::postprocess
