#include "hippo/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hippo/metrics.hpp"

namespace hippo::postprocess {

void PostprocessConfig::validate() const {
  if (!(prob_threshold > 0.0 && prob_threshold < 1.0)) {
    throw std::invalid_argument("postprocess.prob_threshold must be in (0, 1)");
  }
  if (min_component_voxels < 0) throw std::invalid_argument("postprocess.min_component_voxels must be >= 0");
  if (keep_largest_k < 0) throw std::invalid_argument("postprocess.keep_largest_k must be >= 0");
  if (roi_margin_voxels < 0) throw std::invalid_argument("postprocess.roi_margin_voxels must be >= 0");
  if (min_component_voxels == 0 && keep_largest_k == 0) {
    throw std::invalid_argument("postprocess: one of min_component_voxels or keep_largest_k must be > 0");
  }
}

nlohmann::json to_json(const PostprocessConfig& c) {
  return {{"prob_threshold", c.prob_threshold},
          {"min_component_voxels", c.min_component_voxels},
          {"keep_largest_k", c.keep_largest_k},
          {"roi_margin_voxels", c.roi_margin_voxels}};
}

PostprocessConfig postprocess_config_from_json(const nlohmann::json& j) {
  PostprocessConfig c;
  c.prob_threshold = j.value("prob_threshold", c.prob_threshold);
  c.min_component_voxels = j.value("min_component_voxels", c.min_component_voxels);
  c.keep_largest_k = j.value("keep_largest_k", c.keep_largest_k);
  c.roi_margin_voxels = j.value("roi_margin_voxels", c.roi_margin_voxels);
  return c;
}

std::vector<std::uint8_t> threshold_probabilities(std::span<const float> probs, double t) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const float p = probs[i];
    if (!(p >= 0.0f && p <= 1.0f)) {
      throw std::invalid_argument("threshold_probabilities: value " + std::to_string(p) + " at index " +
                                  std::to_string(i) + " outside [0, 1]");
    }
    out[i] = static_cast<double>(p) > t ? 1 : 0;
  }
  return out;
}

BinaryMask3D threshold_probabilities(const imaging::Volume<float>& probs, const imaging::Spacing& spacing, double t) {
  BinaryMask3D mask{imaging::Volume<std::uint8_t>(probs.shape()), spacing};
  const auto bits = threshold_probabilities(probs.values(), t);
  std::copy(bits.begin(), bits.end(), mask.data.values().begin());
  return mask;
}

std::vector<Component> connected_components(const BinaryMask3D& mask) {
  const auto& shape = mask.data.shape();
  const auto values = mask.data.values();
  std::vector<std::uint8_t> seen(values.size(), 0);
  std::vector<Component> out;
  std::vector<std::size_t> stack;
  const auto nx = static_cast<long>(shape[0]);
  const auto ny = static_cast<long>(shape[1]);
  const auto nz = static_cast<long>(shape[2]);
  for (std::size_t start = 0; start < values.size(); ++start) {
    if (!values[start] || seen[start]) continue;
    Component c;
    c.first_index = start;
    seen[start] = 1;
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      c.voxels.push_back(v);
      const long i = static_cast<long>(v % shape[0]);
      const long j = static_cast<long>((v / shape[0]) % shape[1]);
      const long k = static_cast<long>(v / (shape[0] * shape[1]));
      for (long dk = -1; dk <= 1; ++dk) {
        const long kk = k + dk;
        if (kk < 0 || kk >= nz) continue;
        for (long dj = -1; dj <= 1; ++dj) {
          const long jj = j + dj;
          if (jj < 0 || jj >= ny) continue;
          for (long di = -1; di <= 1; ++di) {
            const long ii = i + di;
            if (ii < 0 || ii >= nx) continue;
            const auto n = static_cast<std::size_t>(ii + nx * (jj + ny * kk));
            if (values[n] && !seen[n]) {
              seen[n] = 1;
              stack.push_back(n);
            }
          }
        }
      }
    }
    std::sort(c.voxels.begin(), c.voxels.end());
    c.size = c.voxels.size();
    for (const auto v : c.voxels) {
      c.centroid[0] += static_cast<double>(v % shape[0]);
      c.centroid[1] += static_cast<double>((v / shape[0]) % shape[1]);
      c.centroid[2] += static_cast<double>(v / (shape[0] * shape[1]));
    }
    for (auto& x : c.centroid) x /= static_cast<double>(c.size);
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

BinaryMask3D from_components(const BinaryMask3D& like, const std::vector<const Component*>& keep) {
  BinaryMask3D out{imaging::Volume<std::uint8_t>(like.data.shape()), like.spacing};
  auto values = out.data.values();
  for (const auto* c : keep) {
    for (const auto v : c->voxels) values[v] = 1;
  }
  return out;
}

}  // namespace

BinaryMask3D remove_small_components(const BinaryMask3D& mask, int min_voxels, int keep_largest_k) {
  if (min_voxels < 0 || keep_largest_k < 0) {
    throw std::invalid_argument("remove_small_components: min_voxels and keep_largest_k must be >= 0");
  }
  mask.validate();
  const auto components = connected_components(mask);
  std::vector<const Component*> keep;
  for (const auto& c : components) {
    if (c.size >= static_cast<std::size_t>(min_voxels)) keep.push_back(&c);
  }
  if (keep_largest_k > 0 && keep.size() > static_cast<std::size_t>(keep_largest_k)) {
    std::stable_sort(keep.begin(), keep.end(), [](const Component* a, const Component* b) {
      if (a->size != b->size) return a->size > b->size;
      return a->first_index < b->first_index;
    });
    keep.resize(static_cast<std::size_t>(keep_largest_k));
  }
  return from_components(mask, keep);
}

BinaryMask3D remove_small_components(const BinaryMask3D& mask, const PostprocessConfig& config) {
  return remove_small_components(mask, config.min_component_voxels, config.keep_largest_k);
}

bool RoiBox::contains(const std::array<double, 3>& p) const {
  for (int a = 0; a < 3; ++a) {
    if (p[a] < static_cast<double>(lo[a]) || p[a] > static_cast<double>(hi[a])) return false;
  }
  return true;
}

nlohmann::json to_json(const RoiBox& box) { return {{"lo", box.lo}, {"hi", box.hi}}; }

RoiBox roi_from_json(const nlohmann::json& j) {
  RoiBox box;
  box.lo = j.at("lo").get<std::array<std::size_t, 3>>();
  box.hi = j.at("hi").get<std::array<std::size_t, 3>>();
  for (int a = 0; a < 3; ++a) {
    if (box.lo[a] > box.hi[a]) throw std::invalid_argument("roi box: lo exceeds hi along axis " + std::to_string(a));
  }
  return box;
}

RoiBox derive_roi(std::span<const BinaryMask3D> masks, int margin_voxels) {
  if (margin_voxels < 0) throw std::invalid_argument("derive_roi: margin must be >= 0");
  if (masks.empty()) throw std::invalid_argument("derive_roi: no masks");
  const auto shape = masks.front().data.shape();
  std::array<std::size_t, 3> lo{shape[0], shape[1], shape[2]};
  std::array<std::size_t, 3> hi{0, 0, 0};
  bool any = false;
  for (const auto& m : masks) {
    if (m.data.shape() != shape) throw std::invalid_argument("derive_roi: masks have different shapes");
    for (std::size_t k = 0; k < shape[2]; ++k) {
      for (std::size_t j = 0; j < shape[1]; ++j) {
        for (std::size_t i = 0; i < shape[0]; ++i) {
          if (!m.data(i, j, k)) continue;
          any = true;
          const std::array<std::size_t, 3> p{i, j, k};
          for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], p[a]);
            hi[a] = std::max(hi[a], p[a]);
          }
        }
      }
    }
  }
  if (!any) throw std::invalid_argument("derive_roi: all masks are empty");
  const auto margin = static_cast<std::size_t>(margin_voxels);
  RoiBox box;
  for (int a = 0; a < 3; ++a) {
    box.lo[a] = lo[a] > margin ? lo[a] - margin : 0;
    box.hi[a] = std::min(hi[a] + margin, shape[a] - 1);
  }
  return box;
}

BinaryMask3D roi_filter(const BinaryMask3D& mask, const RoiBox& box) {
  const auto& shape = mask.data.shape();
  for (int a = 0; a < 3; ++a) {
    if (box.lo[a] > box.hi[a]) throw std::invalid_argument("roi_filter: degenerate box along axis " + std::to_string(a));
    if (box.hi[a] >= shape[a]) throw std::invalid_argument("roi_filter: box exceeds the volume along axis " + std::to_string(a));
  }
  mask.validate();
  const auto components = connected_components(mask);
  std::vector<const Component*> keep;
  for (const auto& c : components) {
    if (box.contains(c.centroid)) keep.push_back(&c);
  }
  return from_components(mask, keep);
}

BinaryMask3D postprocess_mask(const BinaryMask3D& mask, const PostprocessConfig& config,
                              const std::optional<RoiBox>& roi) {
  config.validate();
  const BinaryMask3D filtered = roi ? roi_filter(mask, *roi) : mask;
  return remove_small_components(filtered, config);
}

BinaryMask3D postprocess_probabilities(const imaging::Volume<float>& probs, const imaging::Spacing& spacing,
                                       const PostprocessConfig& config, const std::optional<RoiBox>& roi) {
  config.validate();
  return postprocess_mask(threshold_probabilities(probs, spacing, config.prob_threshold), config, roi);
}

double continuity_metric(const BinaryMask3D& mask, imaging::Axis axis) {
  mask.validate();
  const auto extent = mask.data.extent(axis);
  double sum = 0.0;
  std::size_t pairs = 0;
  imaging::Image2D<std::uint8_t> prev;
  bool prev_nonempty = false;
  for (std::size_t s = 0; s < extent; ++s) {
    auto cur = imaging::extract_slice(mask, axis, static_cast<long>(s));
    const bool nonempty = std::any_of(cur.data.begin(), cur.data.end(), [](std::uint8_t v) { return v != 0; });
    if (nonempty && prev_nonempty) {
      sum += metrics::dice_score(prev.data, cur.data);
      ++pairs;
    }
    prev = std::move(cur);
    prev_nonempty = nonempty;
  }
  return pairs == 0 ? 1.0 : sum / static_cast<double>(pairs);
}

}  // namespace hippo::postprocess
