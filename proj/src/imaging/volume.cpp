#include "hippo/imaging.hpp"

#include <cmath>
#include <sstream>

namespace hippo::imaging {

Axis parse_axis(std::string_view name) {
  if (name == "sagittal" || name == "0") return Axis::sagittal;
  if (name == "coronal" || name == "1") return Axis::coronal;
  if (name == "axial" || name == "2") return Axis::axial;
  throw std::invalid_argument("unknown axis '" + std::string(name) +
                              "' (expected sagittal, coronal or axial)");
}

std::string_view axis_name(Axis axis) {
  switch (axis) {
    case Axis::sagittal: return "sagittal";
    case Axis::coronal: return "coronal";
    case Axis::axial: return "axial";
  }
  return "unknown";
}

namespace {

void validate_geometry(const Shape3& shape, const Spacing& spacing) {
  for (int a = 0; a < 3; ++a) {
    if (shape[a] < 1) throw std::invalid_argument("volume dimension " + std::to_string(a) + " is zero");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
      throw std::invalid_argument("spacing component " + std::to_string(a) + " must be positive");
    }
  }
}

// Maps (axis, index, row, col) to voxel coordinates.
struct PlaneMapping {
  int axis;
  int row_axis;
  int col_axis;

  explicit PlaneMapping(Axis a) : axis(static_cast<int>(a)) {
    row_axis = axis == 0 ? 1 : 0;
    col_axis = axis == 2 ? 1 : 2;
  }
  std::array<std::size_t, 3> voxel(std::size_t index, std::size_t r, std::size_t c) const {
    std::array<std::size_t, 3> v{};
    v[axis] = index;
    v[row_axis] = r;
    v[col_axis] = c;
    return v;
  }
};

void check_index(const Shape3& shape, Axis axis, long index) {
  const auto extent = static_cast<long>(shape[static_cast<int>(axis)]);
  if (index < 0 || index >= extent) {
    std::ostringstream os;
    os << "slice index " << index << " out of range for " << axis_name(axis) << " extent " << extent;
    throw std::out_of_range(os.str());
  }
}

}  // namespace

void VoxelGrid::validate() const {
  validate_geometry(data.shape(), spacing);
  for (float v : data.values()) {
    if (!std::isfinite(v)) throw std::invalid_argument("volume contains NaN or Inf");
  }
}

void BinaryMask3D::validate() const {
  validate_geometry(data.shape(), spacing);
  for (auto v : data.values()) {
    if (v > 1) throw std::invalid_argument("mask values must be 0 or 1");
  }
}

std::size_t BinaryMask3D::count() const {
  std::size_t n = 0;
  for (auto v : data.values()) n += v;
  return n;
}

std::array<std::size_t, 2> plane_shape(const Shape3& shape, Axis axis) {
  PlaneMapping m(axis);
  return {shape[m.row_axis], shape[m.col_axis]};
}

template <typename T>
Image2D<T> extract_slice(const Volume<T>& volume, Axis axis, long index) {
  check_index(volume.shape(), axis, index);
  PlaneMapping m(axis);
  const auto [rows, cols] = plane_shape(volume.shape(), axis);
  Image2D<T> out(1, rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = m.voxel(static_cast<std::size_t>(index), r, c);
      out.at(0, r, c) = volume(v[0], v[1], v[2]);
    }
  }
  return out;
}

template Image2D<float> extract_slice(const Volume<float>&, Axis, long);
template Image2D<std::uint8_t> extract_slice(const Volume<std::uint8_t>&, Axis, long);

Image2D<float> extract_slice(const VoxelGrid& grid, Axis axis, long index) {
  return extract_slice(grid.data, axis, index);
}

Image2D<std::uint8_t> extract_slice(const BinaryMask3D& mask, Axis axis, long index) {
  return extract_slice(mask.data, axis, index);
}

BinaryMask3D reassemble_volume(const std::vector<Image2D<std::uint8_t>>& slices, Axis axis,
                               const Shape3& shape, const Spacing& spacing) {
  const auto extent = shape[static_cast<int>(axis)];
  if (slices.size() != extent) {
    std::ostringstream os;
    os << "reassemble: got " << slices.size() << " slices, reference " << axis_name(axis)
       << " extent is " << extent;
    throw std::invalid_argument(os.str());
  }
  const auto [rows, cols] = plane_shape(shape, axis);
  PlaneMapping m(axis);
  BinaryMask3D out{Volume<std::uint8_t>(shape), spacing};
  for (std::size_t s = 0; s < slices.size(); ++s) {
    const auto& sl = slices[s];
    if (sl.channels != 1 || sl.rows != rows || sl.cols != cols) {
      std::ostringstream os;
      os << "reassemble: slice " << s << " has shape " << sl.channels << "x" << sl.rows << "x" << sl.cols
         << ", expected 1x" << rows << "x" << cols;
      throw std::invalid_argument(os.str());
    }
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const auto v = m.voxel(s, r, c);
        out.data(v[0], v[1], v[2]) = sl.at(0, r, c) ? 1 : 0;
      }
    }
  }
  return out;
}

BinaryMask3D reassemble_volume(const std::vector<Image2D<std::uint8_t>>& slices, Axis axis,
                               const VoxelGrid& reference) {
  return reassemble_volume(slices, axis, reference.data.shape(), reference.spacing);
}

BinaryMask3D to_mask(const VoxelGrid& grid) {
  BinaryMask3D mask{Volume<std::uint8_t>(grid.data.shape()), grid.spacing};
  auto src = grid.data.values();
  auto dst = mask.data.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] == 0.0f) {
      dst[i] = 0;
    } else if (src[i] == 1.0f) {
      dst[i] = 1;
    } else {
      throw std::invalid_argument("label volume is not binary (value " + std::to_string(src[i]) +
                                  " at voxel " + std::to_string(i) + ")");
    }
  }
  return mask;
}

VoxelGrid to_grid(const BinaryMask3D& mask) {
  VoxelGrid grid{Volume<float>(mask.data.shape()), mask.spacing, {}, 0.0};
  auto src = mask.data.values();
  auto dst = grid.data.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
  return grid;
}

}  // namespace hippo::imaging
