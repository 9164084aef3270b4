#include <cstring>
#include <fstream>
#include <random>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "hippo/imaging.hpp"
#include "hippo/io_util.hpp"
#include "hippo/synthetic.hpp"

using namespace hippo;
using imaging::Axis;

namespace {

// Minimal NIfTI-1 writer kept independent of the library's header code.
void write_raw_nifti(const std::filesystem::path& path, std::vector<std::int16_t> dims, std::array<float, 3> pixdim,
                     const std::vector<float>& values) {
  std::vector<std::uint8_t> hdr(352, 0);
  auto put = [&](std::size_t offset, const auto& v) { std::memcpy(hdr.data() + offset, &v, sizeof(v)); };
  put(0, std::int32_t{348});
  std::int16_t dim[8] = {static_cast<std::int16_t>(dims.size()), 1, 1, 1, 1, 1, 1, 1};
  for (std::size_t i = 0; i < dims.size(); ++i) dim[i + 1] = dims[i];
  std::memcpy(hdr.data() + 40, dim, sizeof(dim));
  put(70, std::int16_t{16});
  put(72, std::int16_t{32});
  float pd[8] = {1, pixdim[0], pixdim[1], pixdim[2], 0, 0, 0, 0};
  std::memcpy(hdr.data() + 76, pd, sizeof(pd));
  put(108, 352.0f);
  std::memcpy(hdr.data() + 344, "n+1\0", 4);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(hdr.data()), static_cast<std::streamsize>(hdr.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

imaging::VoxelGrid index_grid(imaging::Shape3 shape, int which) {
  imaging::VoxelGrid g;
  g.data = imaging::Volume<float>(shape);
  for (std::size_t k = 0; k < shape[2]; ++k)
    for (std::size_t j = 0; j < shape[1]; ++j)
      for (std::size_t i = 0; i < shape[0]; ++i) {
        const std::size_t idx[3] = {i, j, k};
        g.data(i, j, k) = static_cast<float>(idx[which]);
      }
  return g;
}

}  // namespace

TEST_CASE("nifti round trip of a constant grid") {
  test::TempDir dir("nifti");
  imaging::VoxelGrid g;
  g.data = imaging::Volume<float>({4, 4, 4}, 7.0f);
  imaging::save_volume(g, dir / "c.nii.gz");
  auto back = imaging::load_volume(dir / "c.nii.gz");
  CHECK(back.data.shape() == imaging::Shape3{4, 4, 4});
  for (float v : back.data.values()) CHECK(v == 7.0f);
  CHECK(back.spacing == imaging::Spacing{1.0, 1.0, 1.0});
}

TEST_CASE("nifti spacing read from an independently written header") {
  test::TempDir dir("nifti");
  std::vector<float> values(2 * 3 * 4);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(i) * 0.5f;
  write_raw_nifti(dir / "s.nii", {2, 3, 4}, {0.9375f, 0.9375f, 1.2f}, values);
  auto g = imaging::load_volume(dir / "s.nii");
  CHECK(g.spacing[0] == static_cast<double>(0.9375f));
  CHECK(g.spacing[1] == static_cast<double>(0.9375f));
  CHECK(g.spacing[2] == static_cast<double>(1.2f));
  CHECK(g.data.shape() == imaging::Shape3{2, 3, 4});
  CHECK(g.data(1, 2, 3) == values[1 + 2 * (2 + 3 * 3)]);

  imaging::save_volume(g, dir / "s2.nii");
  CHECK(imaging::load_volume(dir / "s2.nii").spacing == g.spacing);
}

TEST_CASE("nifti rejects 2D and malformed files") {
  test::TempDir dir("nifti");
  write_raw_nifti(dir / "flat.nii", {4, 4}, {1, 1, 1}, std::vector<float>(16, 0.0f));
  CHECK_THROWS_WITH_AS(imaging::load_volume(dir / "flat.nii"), doctest::Contains("expected 3 spatial dimensions"),
                       imaging::NiftiError);

  write_raw_nifti(dir / "t4.nii", {2, 2, 2, 3}, {1, 1, 1}, std::vector<float>(24, 0.0f));
  CHECK_THROWS_AS(imaging::load_volume(dir / "t4.nii"), imaging::NiftiError);

  write_raw_nifti(dir / "single.nii", {2, 2, 2, 1}, {1, 1, 1}, std::vector<float>(8, 1.0f));
  CHECK(imaging::load_volume(dir / "single.nii").data.size() == 8);

  std::ofstream(dir / "junk.nii") << "not a nifti file at all";
  CHECK_THROWS_AS(imaging::load_volume(dir / "junk.nii"), imaging::NiftiError);
  CHECK_THROWS_AS(imaging::load_volume(dir / "missing.nii"), imaging::NiftiError);

  write_raw_nifti(dir / "short.nii", {4, 4, 4}, {1, 1, 1}, std::vector<float>(10, 0.0f));
  CHECK_THROWS_WITH_AS(imaging::load_volume(dir / "short.nii"), doctest::Contains("truncated"), imaging::NiftiError);
}

TEST_CASE("mask round trips") {
  test::TempDir dir("mask");
  SUBCASE("all zero") {
    imaging::BinaryMask3D m;
    m.data = imaging::Volume<std::uint8_t>({8, 8, 8});
    imaging::save_volume(m, dir / "z.nii.gz");
    CHECK(imaging::load_mask(dir / "z.nii.gz").data == m.data);
  }
  SUBCASE("random seed 42") {
    auto m = test::random_mask({8, 8, 8}, 42);
    imaging::save_volume(m, dir / "r.nii.gz");
    auto back = imaging::load_mask(dir / "r.nii.gz");
    CHECK(back.data == m.data);
  }
  SUBCASE("spacing 2") {
    auto m = test::random_mask({5, 6, 7}, 3);
    m.spacing = {2.0, 2.0, 2.0};
    imaging::save_volume(m, dir / "s.nii");
    CHECK(imaging::load_mask(dir / "s.nii").spacing == imaging::Spacing{2.0, 2.0, 2.0});
  }
  SUBCASE("non-binary values are not a mask") {
    imaging::VoxelGrid g;
    g.data = imaging::Volume<float>({2, 2, 2}, 0.5f);
    imaging::save_volume(g, dir / "g.nii");
    CHECK_THROWS(imaging::load_mask(dir / "g.nii"));
  }
}

TEST_CASE("extract_slice on an index grid") {
  auto g = index_grid({4, 4, 4}, 0);
  auto s = imaging::extract_slice(g, Axis::sagittal, 2);
  CHECK(s.channels == 1);
  CHECK(s.rows == 4);
  CHECK(s.cols == 4);
  for (float v : s.data) CHECK(v == 2.0f);
  CHECK_THROWS_AS(imaging::extract_slice(g, Axis::sagittal, 4), std::out_of_range);
  CHECK_THROWS_AS(imaging::extract_slice(g, Axis::axial, -1), std::out_of_range);
}

TEST_CASE("extract_slice matches a triple-loop oracle on a phantom") {
  synthetic::PhantomSpec spec;
  spec.n_timepoints = 2;
  spec.seed = 5;
  auto scan = synthetic::generate_phantom_subject(spec).front();
  const auto& v = scan.image.data;
  const auto shape = v.shape();
  for (long k : {0L, 30L, 56L, 111L}) {
    auto s = imaging::extract_slice(scan.image, Axis::axial, k);
    REQUIRE(s.rows == shape[0]);
    REQUIRE(s.cols == shape[1]);
    for (std::size_t i = 0; i < shape[0]; ++i)
      for (std::size_t j = 0; j < shape[1]; ++j) CHECK(s.at(0, i, j) == v(i, j, static_cast<std::size_t>(k)));
  }
  auto c = imaging::extract_slice(scan.image, Axis::coronal, 40);
  REQUIRE(c.rows == shape[0]);
  REQUIRE(c.cols == shape[2]);
  for (std::size_t i = 0; i < shape[0]; i += 7)
    for (std::size_t k = 0; k < shape[2]; k += 5) CHECK(c.at(0, i, k) == v(i, 40, k));
}

TEST_CASE("slice and reassemble is the identity for every axis") {
  auto m = test::random_mask({5, 7, 9}, 11);
  m.spacing = {0.5, 1.0, 2.0};
  for (Axis axis : {Axis::sagittal, Axis::coronal, Axis::axial}) {
    std::vector<imaging::Image2D<std::uint8_t>> slices;
    for (std::size_t s = 0; s < m.data.extent(axis); ++s) slices.push_back(imaging::extract_slice(m, axis, static_cast<long>(s)));
    auto back = imaging::reassemble_volume(slices, axis, m.data.shape(), m.spacing);
    CHECK(back.data == m.data);
    CHECK(back.spacing == m.spacing);
    slices.pop_back();
    CHECK_THROWS_AS(imaging::reassemble_volume(slices, axis, m.data.shape(), m.spacing), std::invalid_argument);
  }
}

TEST_CASE("reassembled phantom label equals the analytic voxelization") {
  synthetic::PhantomSpec spec;
  spec.n_timepoints = 2;
  auto scans = synthetic::generate_phantom_subject(spec);
  const auto& label = scans[1].label;
  std::vector<imaging::Image2D<std::uint8_t>> slices;
  for (std::size_t s = 0; s < label.data.extent(Axis::sagittal); ++s) {
    slices.push_back(imaging::extract_slice(label, Axis::sagittal, static_cast<long>(s)));
  }
  auto back = imaging::reassemble_volume(slices, Axis::sagittal, scans[1].image);
  auto e = synthetic::ellipsoids_at(spec, 1.0);
  auto analytic = synthetic::voxelize({e[0], e[1]}, spec.grid_shape, spec.spacing);
  CHECK(back.data == analytic.data);
}

TEST_CASE("plane_shape and axis names") {
  CHECK(imaging::plane_shape({3, 4, 5}, Axis::sagittal) == std::array<std::size_t, 2>{4, 5});
  CHECK(imaging::plane_shape({3, 4, 5}, Axis::coronal) == std::array<std::size_t, 2>{3, 5});
  CHECK(imaging::plane_shape({3, 4, 5}, Axis::axial) == std::array<std::size_t, 2>{3, 4});
  for (Axis a : {Axis::sagittal, Axis::coronal, Axis::axial}) CHECK(imaging::parse_axis(imaging::axis_name(a)) == a);
  CHECK_THROWS(imaging::parse_axis("oblique"));
}

TEST_CASE("grid validation") {
  imaging::VoxelGrid g;
  CHECK_THROWS(g.validate());
  g.data = imaging::Volume<float>({2, 2, 2});
  g.spacing = {1.0, 0.0, 1.0};
  CHECK_THROWS(g.validate());
  g.spacing = {1.0, 1.0, 1.0};
  g.data(1, 1, 1) = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS(g.validate());
}

TEST_CASE("gzip and png helpers") {
  std::vector<std::uint8_t> bytes(5000);
  std::mt19937_64 rng(1);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng() % 7);
  auto z = io::gzip_compress(bytes);
  CHECK(io::is_gzip(z));
  CHECK(io::gzip_decompress(z) == bytes);
  z.resize(z.size() / 2);
  CHECK_THROWS_AS(io::gzip_decompress(z), io::InputError);

  std::vector<std::uint8_t> px(6, 200);
  auto png = io::encode_png(3, 2, 1, px);
  REQUIRE(png.size() > 8);
  CHECK(png[1] == 'P');
  CHECK(png[2] == 'N');
  CHECK(png[3] == 'G');
}
