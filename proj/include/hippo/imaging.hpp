#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hippo::imaging {

using Shape3 = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

/// Slicing axis in stored array order. The mapping to anatomy is a fixed
/// convention (axis 0 sagittal, 1 coronal, 2 axial); the affine is ignored.
enum class Axis : int { sagittal = 0, coronal = 1, axial = 2 };

Axis parse_axis(std::string_view name);
std::string_view axis_name(Axis axis);

/// Dense 3D array with the first index varying fastest (NIfTI voxel order).
template <typename T>
class Volume {
 public:
  Volume() = default;
  explicit Volume(Shape3 shape, T fill = T{})
      : shape_(shape), data_(shape[0] * shape[1] * shape[2], fill) {}

  const Shape3& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(Axis axis) const { return shape_[static_cast<int>(axis)]; }

  std::size_t linear(std::size_t i, std::size_t j, std::size_t k) const {
    return i + shape_[0] * (j + shape_[1] * k);
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[linear(i, j, k)]; }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[linear(i, j, k)];
  }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  bool operator==(const Volume&) const = default;

 private:
  Shape3 shape_{0, 0, 0};
  std::vector<T> data_;
};

struct VoxelGrid {
  Volume<float> data;
  Spacing spacing{1.0, 1.0, 1.0};
  std::string subject_id;
  double timepoint_years = 0.0;

  /// Throws std::invalid_argument on empty dims, non-positive spacing or
  /// non-finite intensities.
  void validate() const;
};

struct BinaryMask3D {
  Volume<std::uint8_t> data;
  Spacing spacing{1.0, 1.0, 1.0};

  void validate() const;
  std::size_t count() const;
};

/// Channel-major 2D image: element (c, r, col) lives at (c * rows + r) * cols + col.
template <typename T>
struct Image2D {
  std::size_t channels = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Image2D() = default;
  Image2D(std::size_t channels_, std::size_t rows_, std::size_t cols_, T fill = T{})
      : channels(channels_), rows(rows_), cols(cols_), data(channels_ * rows_ * cols_, fill) {}

  std::size_t plane_size() const { return rows * cols; }
  T& at(std::size_t c, std::size_t r, std::size_t col) { return data[(c * rows + r) * cols + col]; }
  const T& at(std::size_t c, std::size_t r, std::size_t col) const {
    return data[(c * rows + r) * cols + col];
  }
  std::span<T> channel(std::size_t c) { return std::span<T>(data).subspan(c * plane_size(), plane_size()); }
  std::span<const T> channel(std::size_t c) const {
    return std::span<const T>(data).subspan(c * plane_size(), plane_size());
  }

  bool operator==(const Image2D&) const = default;
};

/// In-plane (rows, cols) of slices taken along `axis`: the two remaining
/// axes in increasing order.
std::array<std::size_t, 2> plane_shape(const Shape3& shape, Axis axis);

template <typename T>
Image2D<T> extract_slice(const Volume<T>& volume, Axis axis, long index);

Image2D<float> extract_slice(const VoxelGrid& grid, Axis axis, long index);
Image2D<std::uint8_t> extract_slice(const BinaryMask3D& mask, Axis axis, long index);

/// Stacks single-channel slices along `axis`; shape and spacing come from
/// the reference.
BinaryMask3D reassemble_volume(const std::vector<Image2D<std::uint8_t>>& slices, Axis axis,
                               const Shape3& shape, const Spacing& spacing);
BinaryMask3D reassemble_volume(const std::vector<Image2D<std::uint8_t>>& slices, Axis axis,
                               const VoxelGrid& reference);

/// Converts a grid whose values are exactly 0 or 1 to a mask.
BinaryMask3D to_mask(const VoxelGrid& grid);
VoxelGrid to_grid(const BinaryMask3D& mask);

// NIfTI-1 single file (.nii or .nii.gz).
VoxelGrid load_volume(const std::filesystem::path& path);
BinaryMask3D load_mask(const std::filesystem::path& path);
/// Float grids are written as float32.
void save_volume(const VoxelGrid& grid, const std::filesystem::path& path);
/// Masks are written as uint8.
void save_volume(const BinaryMask3D& mask, const std::filesystem::path& path);

class NiftiError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hippo::imaging
