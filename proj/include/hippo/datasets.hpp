#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hippo/imaging.hpp"
#include "json.hpp"

namespace hippo::datasets {

using imaging::Axis;
using imaging::Image2D;

/// Channel construction. center_crop builds same-slice channels and is only
/// valid with SizeMode::crop96.
enum class Variant { same_slice, stacked, center_crop };
enum class SizeMode { pad256, resize128, crop96 };
enum class LabelMode { center, collapsed };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);
SizeMode parse_size_mode(std::string_view name);
std::string_view size_mode_name(SizeMode m);
LabelMode parse_label_mode(std::string_view name);
std::string_view label_mode_name(LabelMode m);

/// Model-space side length for a size mode (256, 128 or 96).
std::size_t model_size(SizeMode mode);

struct DatasetRecipe {
  Variant variant = Variant::stacked;
  SizeMode size_mode = SizeMode::crop96;
  LabelMode label_mode = LabelMode::center;
  int slices_per_scan = 32;
  Axis axis = Axis::sagittal;

  void validate() const;
  /// Also checks the in-plane extent against the size mode.
  void validate_plane(std::size_t rows, std::size_t cols) const;
  bool stacked_channels() const { return variant == Variant::stacked; }
  bool operator==(const DatasetRecipe&) const = default;
};

nlohmann::json to_json(const DatasetRecipe& recipe);
DatasetRecipe recipe_from_json(const nlohmann::json& j);

struct SliceSample {
  Image2D<float> image;         // 3 x H x W
  Image2D<std::uint8_t> label;  // 1 x H x W, values 0/1
  std::string subject_id;
  double timepoint_years = 0.0;
  int slice_index = 0;
};

struct SampleSet {
  DatasetRecipe recipe;
  std::vector<SliceSample> samples;

  bool empty() const { return samples.empty(); }
  std::size_t size() const { return samples.size(); }
  std::vector<std::string> subjects() const;  // sorted, unique
};

/// Per-volume min-max rescale to [0, 1]; a constant volume maps to 0.
imaging::VoxelGrid normalize_min_max(const imaging::VoxelGrid& grid);

Image2D<float> extract_same_slice_stack(const imaging::VoxelGrid& grid, Axis axis, long index);
/// Channels (index-1, index, index+1) with edge replication at the borders.
Image2D<float> extract_adjacent_stack(const imaging::VoxelGrid& grid, Axis axis, long index);

/// center: label slice at index. collapsed: voxelwise max over index-1..index+1
/// with edge replication.
Image2D<std::uint8_t> make_label(const imaging::BinaryMask3D& label, Axis axis, long index, LabelMode mode);
Image2D<std::uint8_t> make_label(const imaging::VoxelGrid& label, Axis axis, long index, LabelMode mode);

/// Zero border around the unchanged original, which starts at row
/// (256 - rows) / 2 and column (256 - cols) / 2 (rounded down).
template <typename T>
Image2D<T> pad_to_256(const Image2D<T>& image);
/// Bilinear (half-pixel centers) for float images.
Image2D<float> resize_to_128(const Image2D<float>& image);
/// Nearest neighbour for labels.
Image2D<std::uint8_t> resize_to_128(const Image2D<std::uint8_t>& image);
/// Centered 96 x 96 window starting at ((rows - 96) / 2, (cols - 96) / 2).
template <typename T>
Image2D<T> center_crop_96(const Image2D<T>& image);

template <typename T>
Image2D<T> pad_center(const Image2D<T>& image, std::size_t size);
template <typename T>
Image2D<T> crop_center(const Image2D<T>& image, std::size_t rows, std::size_t cols);
Image2D<float> resize_bilinear(const Image2D<float>& image, std::size_t rows, std::size_t cols);
Image2D<std::uint8_t> resize_nearest(const Image2D<std::uint8_t>& image, std::size_t rows, std::size_t cols);

/// Offset of the centered window of `inner` inside `outer` (lower index on ties).
inline std::size_t center_offset(std::size_t outer, std::size_t inner) { return (outer - inner) / 2; }

Image2D<float> to_model_space(const Image2D<float>& image, SizeMode mode);
Image2D<std::uint8_t> to_model_space(const Image2D<std::uint8_t>& label, SizeMode mode);
/// Maps a single-channel model-space probability map back onto the original
/// rows x cols plane (inverse of to_model_space; cropped-away area is 0).
Image2D<float> from_model_space(const Image2D<float>& probs, SizeMode mode, std::size_t rows, std::size_t cols);

/// Model input for one slice of an already normalized grid.
Image2D<float> make_input(const imaging::VoxelGrid& normalized, const DatasetRecipe& recipe, long index);

/// [start, start + count) centered on the mid-slice of `extent`.
std::array<long, 2> slice_window(std::size_t extent, int count);

struct Scan {
  imaging::VoxelGrid image;
  imaging::BinaryMask3D label;
};

/// Normalizes each scan and takes recipe.slices_per_scan samples from the
/// centered window. Output order follows input order.
SampleSet build_dataset(std::span<const Scan> scans, const DatasetRecipe& recipe);

struct Split {
  SampleSet train;
  SampleSet val;
  SampleSet test;
  std::array<std::vector<std::string>, 3> subjects;
};

/// Per-part subject counts for n subjects (largest remainder, each part >= 1).
std::array<std::size_t, 3> split_counts(std::size_t n_subjects, const std::array<double, 3>& ratios);
/// Deterministic subject-level shuffle of the sorted subject ids.
std::array<std::vector<std::string>, 3> split_subjects(std::vector<std::string> subjects,
                                                       const std::array<double, 3>& ratios, std::uint64_t seed);
Split split_dataset(const SampleSet& set, const std::array<double, 3>& ratios, std::uint64_t seed);

/// Directory with manifest.json plus one raw file per sample
/// (float32 image followed by uint8 label, little endian).
void save_sample_set(const SampleSet& set, const std::filesystem::path& dir);
SampleSet load_sample_set(const std::filesystem::path& dir);

}  // namespace hippo::datasets
