#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "helpers.hpp"
#include "hippo/postprocess.hpp"

using namespace hippo;
using namespace hippo::postprocess;
using imaging::Axis;

namespace {

BinaryMask3D empty_mask(imaging::Shape3 s) {
  BinaryMask3D m;
  m.data = imaging::Volume<std::uint8_t>(s);
  return m;
}

void fill_box(BinaryMask3D& m, std::array<std::size_t, 3> lo, std::array<std::size_t, 3> hi) {
  for (std::size_t k = lo[2]; k <= hi[2]; ++k)
    for (std::size_t j = lo[1]; j <= hi[1]; ++j)
      for (std::size_t i = lo[0]; i <= hi[0]; ++i) m.data(i, j, k) = 1;
}

// Component sizes by breadth-first flood fill, sorted descending.
std::vector<std::size_t> flood_sizes(const BinaryMask3D& m) {
  const auto s = m.data.shape();
  std::vector<std::uint8_t> seen(m.data.size(), 0);
  std::vector<std::size_t> sizes;
  for (std::size_t start = 0; start < m.data.size(); ++start) {
    if (!m.data.values()[start] || seen[start]) continue;
    std::vector<std::size_t> stack{start};
    seen[start] = 1;
    std::size_t n = 0;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      ++n;
      const long i = static_cast<long>(v % s[0]), j = static_cast<long>((v / s[0]) % s[1]),
                 k = static_cast<long>(v / (s[0] * s[1]));
      for (long dk = -1; dk <= 1; ++dk)
        for (long dj = -1; dj <= 1; ++dj)
          for (long di = -1; di <= 1; ++di) {
            const long a = i + di, b = j + dj, c = k + dk;
            if (a < 0 || b < 0 || c < 0 || a >= static_cast<long>(s[0]) || b >= static_cast<long>(s[1]) ||
                c >= static_cast<long>(s[2]))
              continue;
            const auto w = m.data.linear(a, b, c);
            if (m.data.values()[w] && !seen[w]) {
              seen[w] = 1;
              stack.push_back(w);
            }
          }
    }
    sizes.push_back(n);
  }
  std::sort(sizes.rbegin(), sizes.rend());
  return sizes;
}

}  // namespace

TEST_CASE("thresholding is strict and validates its input") {
  std::vector<float> half(10, 0.5f), high(10, 0.9f);
  for (auto v : threshold_probabilities(half, 0.5)) CHECK(v == 0);
  for (auto v : threshold_probabilities(high, 0.5)) CHECK(v == 1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<float> r(1000);
  for (auto& v : r) v = u(rng);
  auto t = threshold_probabilities(r, 0.3);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(t[i] == (r[i] > 0.3f ? 1 : 0));
  CHECK_THROWS(threshold_probabilities(std::vector<float>{1.5f}, 0.5));
  CHECK_THROWS(threshold_probabilities(std::vector<float>{std::nanf("")}, 0.5));
}

TEST_CASE("speckles are removed, the blob stays") {
  auto m = empty_mask({20, 20, 20});
  fill_box(m, {5, 5, 5}, {9, 9, 8});  // 100 voxels
  m.data(0, 0, 0) = 1;
  m.data(19, 19, 19) = 1;
  m.data(0, 19, 10) = 1;
  auto out = remove_small_components(m, 5, 0);
  CHECK(out.count() == 100);
  CHECK(out.data(5, 5, 5) == 1);
  CHECK(out.data(0, 0, 0) == 0);
  CHECK(remove_small_components(empty_mask({4, 4, 4}), 5, 2).count() == 0);
}

TEST_CASE("keep_largest_k") {
  auto m = empty_mask({30, 10, 10});
  fill_box(m, {0, 0, 0}, {2, 2, 2});     // 27
  fill_box(m, {10, 0, 0}, {13, 3, 3});   // 64
  fill_box(m, {20, 0, 0}, {22, 2, 2});   // 27, ties with the first
  auto k1 = remove_small_components(m, 1, 1);
  CHECK(k1.count() == 64);
  auto k2 = remove_small_components(m, 1, 2);
  CHECK(k2.count() == 91);
  CHECK(k2.data(0, 0, 0) == 1);  // tie goes to the lower linear index
  CHECK(k2.data(20, 0, 0) == 0);
  CHECK(remove_small_components(m, 30, 0).count() == 64);
}

TEST_CASE("component sizes match a flood-fill oracle") {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = test::random_mask({10, 10, 10}, seed, 0.12);
    auto comps = connected_components(m);
    std::vector<std::size_t> sizes;
    std::size_t total = 0;
    for (const auto& c : comps) {
      sizes.push_back(c.size);
      total += c.voxels.size();
      CHECK(c.voxels.size() == c.size);
      CHECK(c.voxels.front() == c.first_index);
    }
    std::sort(sizes.rbegin(), sizes.rend());
    CHECK(sizes == flood_sizes(m));
    CHECK(total == m.count());
    for (std::size_t i = 1; i < comps.size(); ++i) CHECK(comps[i - 1].first_index < comps[i].first_index);
  }
}

TEST_CASE("diagonal neighbours are connected") {
  auto m = empty_mask({3, 3, 3});
  m.data(0, 0, 0) = 1;
  m.data(1, 1, 1) = 1;
  m.data(2, 2, 2) = 1;
  CHECK(connected_components(m).size() == 1);
}

TEST_CASE("roi filter by centroid") {
  auto m = empty_mask({30, 30, 30});
  fill_box(m, {10, 10, 10}, {12, 12, 12});  // centroid 11
  fill_box(m, {25, 25, 25}, {27, 27, 27});  // centroid 26
  fill_box(m, {17, 10, 10}, {23, 12, 12});  // centroid 20 straddles the box edge
  RoiBox box{{5, 5, 5}, {20, 20, 20}};
  auto out = roi_filter(m, box);
  CHECK(out.data(11, 11, 11) == 1);
  CHECK(out.data(26, 26, 26) == 0);
  CHECK(out.data(23, 11, 11) == 1);

  RoiBox tight{{5, 5, 5}, {19, 20, 20}};
  auto out2 = roi_filter(m, tight);
  for (const auto& c : connected_components(m)) {
    const bool inside = tight.contains(c.centroid);
    for (auto v : c.voxels) CHECK(out2.data.values()[v] == (inside ? 1 : 0));
  }
  CHECK_THROWS(roi_filter(m, RoiBox{{5, 5, 5}, {4, 20, 20}}));
  CHECK_THROWS(roi_filter(m, RoiBox{{0, 0, 0}, {30, 29, 29}}));
}

TEST_CASE("derive_roi") {
  auto a = empty_mask({20, 20, 20});
  fill_box(a, {5, 6, 7}, {8, 9, 10});
  auto b = empty_mask({20, 20, 20});
  b.data(15, 2, 18) = 1;
  std::vector<BinaryMask3D> masks{a, b};
  auto box = derive_roi(masks, 2);
  CHECK(box.lo == std::array<std::size_t, 3>{3, 0, 5});
  CHECK(box.hi == std::array<std::size_t, 3>{17, 11, 19});
  CHECK(roi_from_json(to_json(box)) == box);
  std::vector<BinaryMask3D> none{empty_mask({4, 4, 4})};
  CHECK_THROWS(derive_roi(none, 1));
}

TEST_CASE("post-processing never adds voxels and is idempotent") {
  PostprocessConfig cfg;
  cfg.min_component_voxels = 4;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto m = test::random_mask({16, 16, 16}, seed, 0.1);
    RoiBox box{{2, 2, 2}, {12, 13, 14}};
    auto once = postprocess_mask(m, cfg, box);
    auto twice = postprocess_mask(once, cfg, box);
    CHECK(twice.data == once.data);
    for (std::size_t i = 0; i < m.data.size(); ++i) CHECK(once.data.values()[i] <= m.data.values()[i]);
  }
  imaging::Volume<float> probs({8, 8, 8}, 0.2f);
  probs(3, 3, 3) = 0.9f;
  cfg.min_component_voxels = 1;
  auto out = postprocess_probabilities(probs, {1, 1, 1}, cfg, std::nullopt);
  CHECK(out.count() == 1);
  cfg.min_component_voxels = 0;
  cfg.keep_largest_k = 0;
  CHECK_THROWS(cfg.validate());
}

TEST_CASE("continuity metric") {
  SUBCASE("cylinder along the axis") {
    auto m = empty_mask({10, 12, 12});
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 12; ++j)
        for (std::size_t k = 0; k < 12; ++k) {
          const double y = j - 5.5, z = k - 5.5;
          if (y * y + z * z <= 16.0) m.data(i, j, k) = 1;
        }
    CHECK(continuity_metric(m, Axis::sagittal) == 1.0);
  }
  SUBCASE("alternating plates skip empty neighbours") {
    auto m = empty_mask({8, 4, 4});
    for (std::size_t i = 0; i < 8; i += 2) fill_box(m, {i, 0, 0}, {i, 3, 3});
    CHECK(continuity_metric(m, Axis::sagittal) == 1.0);
    fill_box(m, {1, 0, 0}, {1, 1, 1});
    // pairs (0,1) and (1,2): both 2*4/(16+4)
    CHECK(continuity_metric(m, Axis::sagittal) == doctest::Approx(0.4));
  }
  SUBCASE("empty and single slices") {
    CHECK(continuity_metric(empty_mask({4, 4, 4}), Axis::axial) == 1.0);
    auto m = empty_mask({4, 4, 4});
    m.data(1, 1, 2) = 1;
    CHECK(continuity_metric(m, Axis::axial) == 1.0);
  }
  SUBCASE("cone of lattice discs") {
    const std::size_t n = 20, side = 31;
    auto m = empty_mask({n, side, side});
    std::vector<double> counts(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = 14.0 * (1.0 - static_cast<double>(i) / n);
      for (std::size_t j = 0; j < side; ++j)
        for (std::size_t k = 0; k < side; ++k) {
          const double y = j - 15.0, z = k - 15.0;
          if (y * y + z * z <= r * r) {
            m.data(i, j, k) = 1;
            counts[i] += 1.0;
          }
        }
    }
    // concentric discs are nested, so the overlap is the smaller disc
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) sum += 2.0 * counts[i + 1] / (counts[i] + counts[i + 1]);
    CHECK(continuity_metric(m, Axis::sagittal) == doctest::Approx(sum / (n - 1)).epsilon(1e-12));
  }
}
