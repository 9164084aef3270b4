// NIfTI-1 single-file reader/writer. Header fields are addressed by byte
// offset into the 348-byte header, so no struct packing assumptions are made.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "hippo/imaging.hpp"
#include "hippo/io_util.hpp"

namespace hippo::imaging {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kVoxOffset = 352;

namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace off

enum DataType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, bool swap) : bytes_(bytes), swap_(swap) {}

  template <typename T>
  T get(std::size_t offset) const {
    T v;
    std::uint8_t buf[sizeof(T)];
    std::memcpy(buf, bytes_.data() + offset, sizeof(T));
    if (swap_) std::reverse(buf, buf + sizeof(T));
    std::memcpy(&v, buf, sizeof(T));
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  bool swap_;
};

template <typename T>
void put(std::vector<std::uint8_t>& bytes, std::size_t offset, T v) {
  std::memcpy(bytes.data() + offset, &v, sizeof(T));
}

template <typename Src>
void convert(std::span<const std::uint8_t> raw, bool swap, std::span<float> dst, double slope, double inter,
             bool scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    std::uint8_t buf[sizeof(Src)];
    std::memcpy(buf, raw.data() + i * sizeof(Src), sizeof(Src));
    if (swap) std::reverse(buf, buf + sizeof(Src));
    Src v;
    std::memcpy(&v, buf, sizeof(Src));
    double d = static_cast<double>(v);
    if (scale) d = d * slope + inter;
    dst[i] = static_cast<float>(d);
  }
}

int bytes_per_voxel(std::int16_t datatype) {
  switch (datatype) {
    case kUInt8:
    case kInt8: return 1;
    case kInt16:
    case kUInt16: return 2;
    case kInt32:
    case kUInt32:
    case kFloat32: return 4;
    case kFloat64: return 8;
    default: return 0;
  }
}

std::vector<std::uint8_t> make_header(const Shape3& shape, const Spacing& spacing, std::int16_t datatype) {
  std::vector<std::uint8_t> h(kVoxOffset, 0);
  put<std::int32_t>(h, off::sizeof_hdr, static_cast<std::int32_t>(kHeaderSize));
  std::int16_t dim[8] = {3, 1, 1, 1, 1, 1, 1, 1};
  float pixdim[8] = {1, 1, 1, 1, 1, 1, 1, 1};
  for (int a = 0; a < 3; ++a) {
    if (shape[a] > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max())) {
      throw NiftiError("volume dimension too large for NIfTI-1");
    }
    dim[a + 1] = static_cast<std::int16_t>(shape[a]);
    pixdim[a + 1] = static_cast<float>(spacing[a]);
  }
  for (int i = 0; i < 8; ++i) {
    put<std::int16_t>(h, off::dim + 2 * i, dim[i]);
    put<float>(h, off::pixdim + 4 * i, pixdim[i]);
  }
  put<std::int16_t>(h, off::datatype, datatype);
  put<std::int16_t>(h, off::bitpix, static_cast<std::int16_t>(8 * bytes_per_voxel(datatype)));
  put<float>(h, off::vox_offset, static_cast<float>(kVoxOffset));
  put<float>(h, off::scl_slope, 1.0f);
  put<float>(h, off::scl_inter, 0.0f);
  h[off::xyzt_units] = 2;  // mm
  const char descr[] = "hippo";
  std::memcpy(h.data() + off::descrip, descr, sizeof(descr));
  put<std::int16_t>(h, off::qform_code, 0);
  put<std::int16_t>(h, off::sform_code, 1);
  for (int r = 0; r < 3; ++r) {
    put<float>(h, off::srow_x + 16 * r + 4 * r, static_cast<float>(spacing[r]));
  }
  const char magic[4] = {'n', '+', '1', '\0'};
  std::memcpy(h.data() + off::magic, magic, 4);
  return h;
}

void write_nifti(const std::filesystem::path& path, std::vector<std::uint8_t> bytes) {
  const auto name = path.filename().string();
  const bool gz = name.size() > 3 && name.compare(name.size() - 3, 3, ".gz") == 0;
  if (gz) {
    io::write_file_atomic(path, io::gzip_compress(bytes));
  } else {
    io::write_file_atomic(path, bytes);
  }
}

}  // namespace

VoxelGrid load_volume(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NiftiError("file not found: " + path.string());
  auto bytes = io::read_file(path);
  if (io::is_gzip(bytes)) bytes = io::gzip_decompress(bytes);
  if (bytes.size() < kHeaderSize) throw NiftiError(path.string() + ": file shorter than a NIfTI-1 header");

  std::int32_t sizeof_hdr;
  std::memcpy(&sizeof_hdr, bytes.data(), 4);
  bool swap = false;
  if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    std::uint8_t b[4];
    std::memcpy(b, bytes.data(), 4);
    std::reverse(b, b + 4);
    std::memcpy(&sizeof_hdr, b, 4);
    if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
      throw NiftiError(path.string() + ": bad sizeof_hdr (not a NIfTI-1 file)");
    }
    swap = true;
  }
  if (std::memcmp(bytes.data() + off::magic, "n+1\0", 4) != 0) {
    throw NiftiError(path.string() + ": bad magic (expected single-file NIfTI-1 'n+1')");
  }

  HeaderReader hr(bytes, swap);
  const auto ndim = hr.get<std::int16_t>(off::dim);
  if (ndim < 3 || ndim > 7) {
    throw NiftiError(path.string() + ": dim[0]=" + std::to_string(ndim) + ", expected 3 spatial dimensions");
  }
  Shape3 shape{};
  for (int a = 0; a < 3; ++a) {
    const auto d = hr.get<std::int16_t>(off::dim + 2 * (a + 1));
    if (d < 1) throw NiftiError(path.string() + ": dim[" + std::to_string(a + 1) + "] must be >= 1");
    shape[a] = static_cast<std::size_t>(d);
  }
  for (int a = 4; a <= ndim; ++a) {
    if (hr.get<std::int16_t>(off::dim + 2 * a) > 1) {
      throw NiftiError(path.string() + ": dim[" + std::to_string(a) +
                       "] > 1, expected 3 spatial dimensions");
    }
  }
  Spacing spacing{};
  for (int a = 0; a < 3; ++a) {
    const float p = hr.get<float>(off::pixdim + 4 * (a + 1));
    if (!(p > 0.0f) || !std::isfinite(p)) {
      throw NiftiError(path.string() + ": pixdim[" + std::to_string(a + 1) + "] must be positive");
    }
    spacing[a] = static_cast<double>(p);
  }

  const auto datatype = hr.get<std::int16_t>(off::datatype);
  const int bpv = bytes_per_voxel(datatype);
  if (bpv == 0) throw NiftiError(path.string() + ": unsupported datatype " + std::to_string(datatype));
  const float vox_offset_f = hr.get<float>(off::vox_offset);
  const auto vox_offset = static_cast<std::size_t>(vox_offset_f < 352.0f ? 352.0f : vox_offset_f);
  const std::size_t count = shape[0] * shape[1] * shape[2];
  if (bytes.size() < vox_offset + count * static_cast<std::size_t>(bpv)) {
    throw NiftiError(path.string() + ": truncated voxel data");
  }

  const double slope = hr.get<float>(off::scl_slope);
  const double inter = hr.get<float>(off::scl_inter);
  const bool scale = slope != 0.0 && std::isfinite(slope) && !(slope == 1.0 && inter == 0.0);

  VoxelGrid grid;
  grid.data = Volume<float>(shape);
  grid.spacing = spacing;
  auto raw = std::span<const std::uint8_t>(bytes).subspan(vox_offset, count * static_cast<std::size_t>(bpv));
  auto dst = grid.data.values();
  switch (datatype) {
    case kUInt8: convert<std::uint8_t>(raw, swap, dst, slope, inter, scale); break;
    case kInt8: convert<std::int8_t>(raw, swap, dst, slope, inter, scale); break;
    case kInt16: convert<std::int16_t>(raw, swap, dst, slope, inter, scale); break;
    case kUInt16: convert<std::uint16_t>(raw, swap, dst, slope, inter, scale); break;
    case kInt32: convert<std::int32_t>(raw, swap, dst, slope, inter, scale); break;
    case kUInt32: convert<std::uint32_t>(raw, swap, dst, slope, inter, scale); break;
    case kFloat32: convert<float>(raw, swap, dst, slope, inter, scale); break;
    case kFloat64: convert<double>(raw, swap, dst, slope, inter, scale); break;
    default: break;
  }
  for (float v : dst) {
    if (!std::isfinite(v)) throw NiftiError(path.string() + ": voxel data contains NaN or Inf");
  }
  return grid;
}

BinaryMask3D load_mask(const std::filesystem::path& path) { return to_mask(load_volume(path)); }

void save_volume(const VoxelGrid& grid, const std::filesystem::path& path) {
  grid.validate();
  auto bytes = make_header(grid.data.shape(), grid.spacing, kFloat32);
  const auto values = grid.data.values();
  const auto start = bytes.size();
  bytes.resize(start + values.size() * sizeof(float));
  std::memcpy(bytes.data() + start, values.data(), values.size() * sizeof(float));
  write_nifti(path, std::move(bytes));
}

void save_volume(const BinaryMask3D& mask, const std::filesystem::path& path) {
  mask.validate();
  auto bytes = make_header(mask.data.shape(), mask.spacing, kUInt8);
  const auto values = mask.data.values();
  bytes.insert(bytes.end(), values.begin(), values.end());
  write_nifti(path, std::move(bytes));
}

}  // namespace hippo::imaging
