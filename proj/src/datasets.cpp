#include "hippo/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hippo/io_util.hpp"

namespace hippo::datasets {

using imaging::BinaryMask3D;
using imaging::VoxelGrid;

Variant parse_variant(std::string_view name) {
  if (name == "same_slice") return Variant::same_slice;
  if (name == "stacked") return Variant::stacked;
  if (name == "center_crop") return Variant::center_crop;
  throw std::invalid_argument("unknown dataset variant '" + std::string(name) +
                              "' (expected same_slice, stacked or center_crop)");
}

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::same_slice: return "same_slice";
    case Variant::stacked: return "stacked";
    case Variant::center_crop: return "center_crop";
  }
  return "unknown";
}

SizeMode parse_size_mode(std::string_view name) {
  if (name == "pad256") return SizeMode::pad256;
  if (name == "resize128") return SizeMode::resize128;
  if (name == "crop96") return SizeMode::crop96;
  throw std::invalid_argument("unknown size mode '" + std::string(name) + "' (expected pad256, resize128 or crop96)");
}

std::string_view size_mode_name(SizeMode m) {
  switch (m) {
    case SizeMode::pad256: return "pad256";
    case SizeMode::resize128: return "resize128";
    case SizeMode::crop96: return "crop96";
  }
  return "unknown";
}

LabelMode parse_label_mode(std::string_view name) {
  if (name == "center") return LabelMode::center;
  if (name == "collapsed") return LabelMode::collapsed;
  throw std::invalid_argument("unknown label mode '" + std::string(name) + "' (expected center or collapsed)");
}

std::string_view label_mode_name(LabelMode m) { return m == LabelMode::center ? "center" : "collapsed"; }

std::size_t model_size(SizeMode mode) {
  switch (mode) {
    case SizeMode::pad256: return 256;
    case SizeMode::resize128: return 128;
    case SizeMode::crop96: return 96;
  }
  return 0;
}

void DatasetRecipe::validate() const {
  if (slices_per_scan <= 0) throw std::invalid_argument("dataset.slices_per_scan must be > 0");
  if (variant == Variant::center_crop && size_mode != SizeMode::crop96) {
    throw std::invalid_argument("dataset.variant center_crop requires size_mode crop96");
  }
}

void DatasetRecipe::validate_plane(std::size_t rows, std::size_t cols) const {
  validate();
  if (size_mode == SizeMode::crop96 && (rows < 96 || cols < 96)) {
    throw std::invalid_argument("crop96 needs an in-plane extent of at least 96x96, got " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  if (size_mode == SizeMode::pad256 && (rows > 256 || cols > 256)) {
    throw std::invalid_argument("pad256 needs an in-plane extent of at most 256x256, got " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
}

nlohmann::json to_json(const DatasetRecipe& r) {
  return {{"variant", std::string(variant_name(r.variant))},
          {"size_mode", std::string(size_mode_name(r.size_mode))},
          {"label_mode", std::string(label_mode_name(r.label_mode))},
          {"slices_per_scan", r.slices_per_scan},
          {"axis", std::string(imaging::axis_name(r.axis))}};
}

DatasetRecipe recipe_from_json(const nlohmann::json& j) {
  DatasetRecipe r;
  r.variant = parse_variant(j.value("variant", std::string(variant_name(r.variant))));
  r.size_mode = parse_size_mode(j.value("size_mode", std::string(size_mode_name(r.size_mode))));
  r.label_mode = parse_label_mode(j.value("label_mode", std::string(label_mode_name(r.label_mode))));
  r.slices_per_scan = j.value("slices_per_scan", r.slices_per_scan);
  r.axis = imaging::parse_axis(j.value("axis", std::string(imaging::axis_name(r.axis))));
  return r;
}

std::vector<std::string> SampleSet::subjects() const {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.subject_id);
  return {ids.begin(), ids.end()};
}

VoxelGrid normalize_min_max(const VoxelGrid& grid) {
  VoxelGrid out = grid;
  auto values = out.data.values();
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double min = *lo;
  const double range = static_cast<double>(*hi) - min;
  for (auto& v : values) v = range > 0.0 ? static_cast<float>((v - min) / range) : 0.0f;
  return out;
}

namespace {

long clamp_index(long index, std::size_t extent) {
  return std::clamp(index, 0L, static_cast<long>(extent) - 1);
}

void check_index(std::size_t extent, long index) {
  if (index < 0 || index >= static_cast<long>(extent)) {
    throw std::out_of_range("slice index " + std::to_string(index) + " out of range for extent " +
                            std::to_string(extent));
  }
}

Image2D<float> stack_channels(const std::array<Image2D<float>, 3>& planes) {
  Image2D<float> out(3, planes[0].rows, planes[0].cols);
  for (std::size_t c = 0; c < 3; ++c) std::copy(planes[c].data.begin(), planes[c].data.end(), out.channel(c).begin());
  return out;
}

}  // namespace

Image2D<float> extract_same_slice_stack(const VoxelGrid& grid, Axis axis, long index) {
  auto s = imaging::extract_slice(grid, axis, index);
  return stack_channels({s, s, s});
}

Image2D<float> extract_adjacent_stack(const VoxelGrid& grid, Axis axis, long index) {
  const auto extent = grid.data.extent(axis);
  check_index(extent, index);
  return stack_channels({imaging::extract_slice(grid, axis, clamp_index(index - 1, extent)),
                         imaging::extract_slice(grid, axis, index),
                         imaging::extract_slice(grid, axis, clamp_index(index + 1, extent))});
}

Image2D<std::uint8_t> make_label(const BinaryMask3D& label, Axis axis, long index, LabelMode mode) {
  label.validate();
  const auto extent = label.data.extent(axis);
  check_index(extent, index);
  auto out = imaging::extract_slice(label, axis, index);
  if (mode == LabelMode::collapsed) {
    for (long d : {-1L, 1L}) {
      const auto other = imaging::extract_slice(label, axis, clamp_index(index + d, extent));
      for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(out.data[i], other.data[i]);
    }
  }
  return out;
}

Image2D<std::uint8_t> make_label(const VoxelGrid& label, Axis axis, long index, LabelMode mode) {
  return make_label(imaging::to_mask(label), axis, index, mode);
}

template <typename T>
Image2D<T> pad_center(const Image2D<T>& image, std::size_t size) {
  if (image.rows > size || image.cols > size) {
    throw std::invalid_argument("pad: image " + std::to_string(image.rows) + "x" + std::to_string(image.cols) +
                                " exceeds target " + std::to_string(size) + "x" + std::to_string(size));
  }
  Image2D<T> out(image.channels, size, size, T{});
  const std::size_t r0 = center_offset(size, image.rows);
  const std::size_t c0 = center_offset(size, image.cols);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t r = 0; r < image.rows; ++r) {
      for (std::size_t k = 0; k < image.cols; ++k) out.at(c, r0 + r, c0 + k) = image.at(c, r, k);
    }
  }
  return out;
}

template <typename T>
Image2D<T> crop_center(const Image2D<T>& image, std::size_t rows, std::size_t cols) {
  if (image.rows < rows || image.cols < cols) {
    throw std::invalid_argument("crop: image " + std::to_string(image.rows) + "x" + std::to_string(image.cols) +
                                " smaller than window " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Image2D<T> out(image.channels, rows, cols);
  const std::size_t r0 = center_offset(image.rows, rows);
  const std::size_t c0 = center_offset(image.cols, cols);
  for (std::size_t c = 0; c < image.channels; ++c) {
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < cols; ++k) out.at(c, r, k) = image.at(c, r0 + r, c0 + k);
    }
  }
  return out;
}

template <typename T>
Image2D<T> pad_to_256(const Image2D<T>& image) {
  return pad_center(image, 256);
}

template <typename T>
Image2D<T> center_crop_96(const Image2D<T>& image) {
  return crop_center(image, 96, 96);
}

Image2D<float> resize_bilinear(const Image2D<float>& image, std::size_t rows, std::size_t cols) {
  if (image.rows == 0 || image.cols == 0) throw std::invalid_argument("resize: empty image");
  Image2D<float> out(image.channels, rows, cols);
  const double sy = static_cast<double>(image.rows) / static_cast<double>(rows);
  const double sx = static_cast<double>(image.cols) / static_cast<double>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double fy = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, static_cast<double>(image.rows - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, image.rows - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t k = 0; k < cols; ++k) {
      const double fx =
          std::clamp((static_cast<double>(k) + 0.5) * sx - 0.5, 0.0, static_cast<double>(image.cols - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, image.cols - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < image.channels; ++c) {
        const double top = (1.0 - wx) * image.at(c, y0, x0) + wx * image.at(c, y0, x1);
        const double bottom = (1.0 - wx) * image.at(c, y1, x0) + wx * image.at(c, y1, x1);
        out.at(c, r, k) = static_cast<float>((1.0 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

Image2D<std::uint8_t> resize_nearest(const Image2D<std::uint8_t>& image, std::size_t rows, std::size_t cols) {
  if (image.rows == 0 || image.cols == 0) throw std::invalid_argument("resize: empty image");
  Image2D<std::uint8_t> out(image.channels, rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto y = std::min(image.rows - 1, static_cast<std::size_t>((static_cast<double>(r) + 0.5) *
                                                                     static_cast<double>(image.rows) /
                                                                     static_cast<double>(rows)));
    for (std::size_t k = 0; k < cols; ++k) {
      const auto x = std::min(image.cols - 1, static_cast<std::size_t>((static_cast<double>(k) + 0.5) *
                                                                       static_cast<double>(image.cols) /
                                                                       static_cast<double>(cols)));
      for (std::size_t c = 0; c < image.channels; ++c) out.at(c, r, k) = image.at(c, y, x);
    }
  }
  return out;
}

Image2D<float> resize_to_128(const Image2D<float>& image) { return resize_bilinear(image, 128, 128); }
Image2D<std::uint8_t> resize_to_128(const Image2D<std::uint8_t>& image) { return resize_nearest(image, 128, 128); }

Image2D<float> to_model_space(const Image2D<float>& image, SizeMode mode) {
  switch (mode) {
    case SizeMode::pad256: return pad_to_256(image);
    case SizeMode::resize128: return resize_to_128(image);
    case SizeMode::crop96: return center_crop_96(image);
  }
  throw std::logic_error("unreachable size mode");
}

Image2D<std::uint8_t> to_model_space(const Image2D<std::uint8_t>& label, SizeMode mode) {
  switch (mode) {
    case SizeMode::pad256: return pad_to_256(label);
    case SizeMode::resize128: return resize_to_128(label);
    case SizeMode::crop96: return center_crop_96(label);
  }
  throw std::logic_error("unreachable size mode");
}

Image2D<float> from_model_space(const Image2D<float>& probs, SizeMode mode, std::size_t rows, std::size_t cols) {
  switch (mode) {
    case SizeMode::pad256: return crop_center(probs, rows, cols);
    case SizeMode::resize128: return resize_bilinear(probs, rows, cols);
    case SizeMode::crop96: {
      Image2D<float> out(probs.channels, rows, cols, 0.0f);
      const std::size_t r0 = center_offset(rows, probs.rows);
      const std::size_t c0 = center_offset(cols, probs.cols);
      for (std::size_t c = 0; c < probs.channels; ++c) {
        for (std::size_t r = 0; r < probs.rows; ++r) {
          for (std::size_t k = 0; k < probs.cols; ++k) out.at(c, r0 + r, c0 + k) = probs.at(c, r, k);
        }
      }
      return out;
    }
  }
  throw std::logic_error("unreachable size mode");
}

Image2D<float> make_input(const VoxelGrid& normalized, const DatasetRecipe& recipe, long index) {
  auto stack = recipe.stacked_channels() ? extract_adjacent_stack(normalized, recipe.axis, index)
                                         : extract_same_slice_stack(normalized, recipe.axis, index);
  return to_model_space(stack, recipe.size_mode);
}

std::array<long, 2> slice_window(std::size_t extent, int count) {
  if (count <= 0 || static_cast<std::size_t>(count) > extent) {
    throw std::invalid_argument("slices_per_scan " + std::to_string(count) + " exceeds slicing extent " +
                                std::to_string(extent));
  }
  const long start = static_cast<long>(extent / 2) - count / 2;
  return {start, start + count};
}

SampleSet build_dataset(std::span<const Scan> scans, const DatasetRecipe& recipe) {
  recipe.validate();
  SampleSet set;
  set.recipe = recipe;
  for (std::size_t s = 0; s < scans.size(); ++s) {
    const auto& scan = scans[s];
    if (scan.image.data.shape() != scan.label.data.shape()) {
      throw std::invalid_argument("scan " + std::to_string(s) + " (" + scan.image.subject_id +
                                  "): image and label shapes differ");
    }
    const auto [rows, cols] = imaging::plane_shape(scan.image.data.shape(), recipe.axis);
    recipe.validate_plane(rows, cols);
    const auto normalized = normalize_min_max(scan.image);
    const auto [start, end] = slice_window(scan.image.data.extent(recipe.axis), recipe.slices_per_scan);
    for (long index = start; index < end; ++index) {
      SliceSample sample;
      sample.image = make_input(normalized, recipe, index);
      sample.label = to_model_space(make_label(scan.label, recipe.axis, index, recipe.label_mode), recipe.size_mode);
      sample.subject_id = scan.image.subject_id;
      sample.timepoint_years = scan.image.timepoint_years;
      sample.slice_index = static_cast<int>(index);
      set.samples.push_back(std::move(sample));
    }
  }
  return set;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw std::invalid_argument("split ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
  if (n < 3) throw std::invalid_argument("need at least 3 subjects to split into 3 parts, got " + std::to_string(n));

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    // Round first so that e.g. 0.6 * 10 = 6.000000000000001 lands on 6.
    const double exact = std::round(ratios[i] * static_cast<double>(n) * 1e9) / 1e9;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  while (assigned < n) {
    const auto i = static_cast<std::size_t>(std::max_element(frac.begin(), frac.end()) - frac.begin());
    ++counts[i];
    frac[i] = -1.0;
    ++assigned;
  }
  for (auto& c : counts) {
    if (c == 0) {
      auto largest = std::max_element(counts.begin(), counts.end());
      --*largest;
      c = 1;
    }
  }
  return counts;
}

std::array<std::vector<std::string>, 3> split_subjects(std::vector<std::string> subjects,
                                                       const std::array<double, 3>& ratios, std::uint64_t seed) {
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  const auto counts = split_counts(subjects.size(), ratios);
  std::mt19937_64 rng(seed);
  for (std::size_t i = subjects.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng() % i);
    std::swap(subjects[i - 1], subjects[j]);
  }
  std::array<std::vector<std::string>, 3> parts;
  std::size_t pos = 0;
  for (int p = 0; p < 3; ++p) {
    parts[p].assign(subjects.begin() + static_cast<long>(pos), subjects.begin() + static_cast<long>(pos + counts[p]));
    std::sort(parts[p].begin(), parts[p].end());
    pos += counts[p];
  }
  return parts;
}

Split split_dataset(const SampleSet& set, const std::array<double, 3>& ratios, std::uint64_t seed) {
  Split split;
  split.subjects = split_subjects(set.subjects(), ratios, seed);
  std::array<SampleSet*, 3> parts{&split.train, &split.val, &split.test};
  std::array<std::set<std::string>, 3> lookup;
  for (int p = 0; p < 3; ++p) {
    parts[p]->recipe = set.recipe;
    lookup[p].insert(split.subjects[p].begin(), split.subjects[p].end());
  }
  for (const auto& s : set.samples) {
    for (int p = 0; p < 3; ++p) {
      if (lookup[p].count(s.subject_id)) {
        parts[p]->samples.push_back(s);
        break;
      }
    }
  }
  return split;
}

static_assert(std::endian::native == std::endian::little, "sample files assume a little-endian host");

void save_sample_set(const SampleSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "hippo-samples";
  manifest["version"] = 1;
  manifest["recipe"] = to_json(set.recipe);
  auto& entries = manifest["samples"] = nlohmann::json::array();
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    const auto& s = set.samples[i];
    if (s.image.rows != s.label.rows || s.image.cols != s.label.cols) {
      throw std::invalid_argument("sample " + std::to_string(i) + ": image and label sizes differ");
    }
    char name[32];
    std::snprintf(name, sizeof(name), "sample_%05zu.bin", i);
    std::vector<std::uint8_t> bytes(s.image.data.size() * sizeof(float) + s.label.data.size());
    std::memcpy(bytes.data(), s.image.data.data(), s.image.data.size() * sizeof(float));
    std::memcpy(bytes.data() + s.image.data.size() * sizeof(float), s.label.data.data(), s.label.data.size());
    io::write_file_atomic(dir / name, bytes);
    entries.push_back({{"file", name},
                       {"subject_id", s.subject_id},
                       {"timepoint_years", s.timepoint_years},
                       {"slice_index", s.slice_index},
                       {"channels", s.image.channels},
                       {"rows", s.image.rows},
                       {"cols", s.image.cols}});
  }
  io::write_text_atomic(dir / "manifest.json", manifest.dump(2));
}

SampleSet load_sample_set(const std::filesystem::path& dir) {
  const auto manifest = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  if (manifest.value("format", "") != "hippo-samples") {
    throw io::InputError((dir / "manifest.json").string() + ": not a sample-set manifest");
  }
  SampleSet set;
  set.recipe = recipe_from_json(manifest.at("recipe"));
  for (const auto& e : manifest.at("samples")) {
    SliceSample s;
    const auto channels = e.at("channels").get<std::size_t>();
    const auto rows = e.at("rows").get<std::size_t>();
    const auto cols = e.at("cols").get<std::size_t>();
    s.image = Image2D<float>(channels, rows, cols);
    s.label = Image2D<std::uint8_t>(1, rows, cols);
    const auto bytes = io::read_file(dir / e.at("file").get<std::string>());
    const std::size_t img_bytes = s.image.data.size() * sizeof(float);
    if (bytes.size() != img_bytes + s.label.data.size()) {
      throw io::InputError("sample file " + e.at("file").get<std::string>() + " has unexpected size");
    }
    std::memcpy(s.image.data.data(), bytes.data(), img_bytes);
    std::memcpy(s.label.data.data(), bytes.data() + img_bytes, s.label.data.size());
    s.subject_id = e.at("subject_id").get<std::string>();
    s.timepoint_years = e.at("timepoint_years").get<double>();
    s.slice_index = e.at("slice_index").get<int>();
    set.samples.push_back(std::move(s));
  }
  return set;
}

template Image2D<float> pad_center(const Image2D<float>&, std::size_t);
template Image2D<std::uint8_t> pad_center(const Image2D<std::uint8_t>&, std::size_t);
template Image2D<float> crop_center(const Image2D<float>&, std::size_t, std::size_t);
template Image2D<std::uint8_t> crop_center(const Image2D<std::uint8_t>&, std::size_t, std::size_t);
template Image2D<float> pad_to_256(const Image2D<float>&);
template Image2D<std::uint8_t> pad_to_256(const Image2D<std::uint8_t>&);
template Image2D<float> center_crop_96(const Image2D<float>&);
template Image2D<std::uint8_t> center_crop_96(const Image2D<std::uint8_t>&);

}  // namespace hippo::datasets
