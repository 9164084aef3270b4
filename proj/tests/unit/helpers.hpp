#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "hippo/imaging.hpp"

namespace hippo::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hippo_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline imaging::BinaryMask3D random_mask(const imaging::Shape3& shape, std::uint64_t seed, double p = 0.5) {
  imaging::BinaryMask3D m;
  m.data = imaging::Volume<std::uint8_t>(shape);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution coin(p);
  for (auto& v : m.data.values()) v = coin(rng) ? 1 : 0;
  return m;
}

inline imaging::VoxelGrid random_grid(const imaging::Shape3& shape, std::uint64_t seed) {
  imaging::VoxelGrid g;
  g.data = imaging::Volume<float>(shape);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 3.0f);
  for (auto& v : g.data.values()) v = u(rng);
  return g;
}

}  // namespace hippo::test
