#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hippo/nn/layers.hpp"
#include "json.hpp"

namespace hippo::models {

enum class Variant { unet, attention_unet, nested_unet };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant variant);

struct ModelConfig {
  Variant variant = Variant::unet;
  int depth = 4;              // resolution levels, in [3, 5]
  int base_channels = 8;      // channels at level 0, doubling per level
  bool use_batchnorm = true;
  double dropout_rate = 0.0;  // in [0, 1)
  bool deep_supervision = false;  // nested_unet only
  int in_channels = 3;
  int out_channels = 1;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Input height and width must be multiples of this (2^(depth-1)).
  std::size_t required_divisor() const { return std::size_t{1} << (depth - 1); }
  std::size_t channels_at(int level) const { return static_cast<std::size_t>(base_channels) << level; }

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LayerCount {
  std::string name;
  std::size_t parameters = 0;
};

/// UNet, Attention-UNet or Nested-UNet (UNet++) with a sigmoid head.
/// Non-copyable because parameters are graph nodes; use clone().
template <typename T>
class SegmentationNet {
 public:
  SegmentationNet(const ModelConfig& config, std::uint64_t seed);
  SegmentationNet(SegmentationNet&&) noexcept = default;
  SegmentationNet& operator=(SegmentationNet&&) noexcept = default;
  SegmentationNet(const SegmentationNet&) = delete;
  SegmentationNet& operator=(const SegmentationNet&) = delete;

  const ModelConfig& config() const { return config_; }

  /// N x in_channels x H x W -> one N x 1 x H x W probability map per head,
  /// final head last. Training mode uses batch statistics, updates the
  /// batch-norm running estimates and applies dropout with `rng`. Attention
  /// coefficients are appended to `attention_maps` (coarsest gate first).
  std::vector<nn::Var<T>> forward(const nn::Var<T>& input, bool training = false,
                                  std::mt19937_64* rng = nullptr,
                                  std::vector<nn::Var<T>>* attention_maps = nullptr) const;

  /// Inference without graph recording; returns all heads.
  std::vector<nn::Tensor<T>> predict(const nn::Tensor<T>& batch) const;

  const nn::ParamRegistry<T>& registry() const { return registry_; }
  std::size_t parameter_count() const;
  std::vector<LayerCount> parameter_breakdown() const;
  std::size_t attention_gate_count() const { return gates_.size(); }
  std::size_t head_count() const { return heads_.size(); }

  void zero_grad();

  /// Named parameter and buffer values ("layer.param", "bn.running_mean").
  std::vector<std::pair<std::string, nn::Tensor<T>>> state() const;
  /// Throws if names or shapes differ from this model's layout.
  void load_state(const std::vector<std::pair<std::string, nn::Tensor<T>>>& state);

  SegmentationNet clone() const;

 private:
  void check_input(const nn::Shape4& shape) const;

  ModelConfig config_;
  nn::ParamRegistry<T> registry_;
  std::vector<nn::ConvBlock<T>> encoder_;                    // level i
  std::vector<nn::ConvTranspose2x2<T>> ups_;                 // unet/attention: index = level
  std::vector<nn::ConvBlock<T>> decoder_;                    // unet/attention: index = level
  std::vector<nn::AttentionGate<T>> gates_;                  // attention: index = level
  std::map<std::pair<int, int>, nn::ConvBlock<T>> nested_;   // X(i, j), j >= 1
  std::map<std::pair<int, int>, nn::ConvTranspose2x2<T>> nested_ups_;
  std::vector<nn::Conv2d<T>> heads_;
};

using Model = SegmentationNet<float>;

Model build_model(const ModelConfig& config, std::uint64_t seed);
std::size_t count_parameters(const Model& model);
std::vector<nn::Tensor<float>> forward(const Model& model, const nn::Tensor<float>& batch);

constexpr std::uint32_t kCheckpointVersion = 1;

/// Container: 8-byte magic "HIPPOCKP", u32 version, u64 header length, JSON
/// header (version, config, tensor index, caller metadata), then float32
/// little-endian tensor payloads in index order.
void save_checkpoint(const Model& model, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());
Model load_checkpoint(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

}  // namespace hippo::models
