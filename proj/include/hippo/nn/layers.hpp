#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hippo/nn/ops.hpp"

namespace hippo::nn {

/// Trainable layers and persistent buffers in registration (input to
/// output) order.
template <typename T>
class ParamRegistry {
 public:
  struct Layer {
    std::string name;
    std::vector<std::string> param_names;
    std::vector<Var<T>> params;

    std::size_t numel() const {
      std::size_t n = 0;
      for (const auto& p : params) n += p->value.size();
      return n;
    }
  };
  struct Buffer {
    std::string name;
    std::shared_ptr<BatchNormState<T>> state;
  };

  void add_layer(std::string name, std::vector<std::pair<std::string, Var<T>>> params) {
    Layer layer{std::move(name), {}, {}};
    for (auto& [pname, var] : params) {
      if (!var) continue;
      layer.param_names.push_back(std::move(pname));
      layer.params.push_back(std::move(var));
    }
    layers_.push_back(std::move(layer));
  }
  void add_buffer(std::string name, std::shared_ptr<BatchNormState<T>> state) {
    buffers_.push_back(Buffer{std::move(name), std::move(state)});
  }

  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<Buffer>& buffers() const { return buffers_; }

  /// Flattened "layer.param" view.
  std::vector<std::pair<std::string, Var<T>>> named_parameters() const {
    std::vector<std::pair<std::string, Var<T>>> out;
    for (const auto& l : layers_) {
      for (std::size_t i = 0; i < l.params.size(); ++i) out.emplace_back(l.name + "." + l.param_names[i], l.params[i]);
    }
    return out;
  }

 private:
  std::vector<Layer> layers_;
  std::vector<Buffer> buffers_;
};

/// Uniform draws from a 64-bit Mersenne twister, independent of the standard
/// library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
Tensor<T> he_uniform(Shape4 shape, std::size_t fan_in, std::mt19937_64& rng);

template <typename T>
struct Conv2d {
  Var<T> weight;
  Var<T> bias;

  static Conv2d make(ParamRegistry<T>& reg, std::string name, std::size_t in, std::size_t out, std::size_t kernel,
                     bool with_bias, std::mt19937_64& rng);
  std::size_t in_channels() const { return weight->value.shape().c; }
  std::size_t out_channels() const { return weight->value.shape().n; }
  Var<T> operator()(const Var<T>& x) const { return conv2d(x, weight, bias); }
};

template <typename T>
struct ConvTranspose2x2 {
  Var<T> weight;
  Var<T> bias;

  static ConvTranspose2x2 make(ParamRegistry<T>& reg, std::string name, std::size_t in, std::size_t out,
                               std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x) const { return conv_transpose2x2(x, weight, bias); }
};

template <typename T>
struct BatchNorm2d {
  Var<T> gamma;
  Var<T> beta;
  std::shared_ptr<BatchNormState<T>> state;

  static BatchNorm2d make(ParamRegistry<T>& reg, std::string name, std::size_t channels);
  Var<T> operator()(const Var<T>& x, bool training) const { return batch_norm(x, gamma, beta, *state, training); }
};

/// conv3x3 -> [BN] -> ReLU -> conv3x3 -> [BN] -> ReLU -> [dropout]
template <typename T>
struct ConvBlock {
  Conv2d<T> conv1;
  std::optional<BatchNorm2d<T>> bn1;
  Conv2d<T> conv2;
  std::optional<BatchNorm2d<T>> bn2;
  double dropout_rate = 0.0;

  static ConvBlock make(ParamRegistry<T>& reg, const std::string& name, std::size_t in, std::size_t out,
                        bool batchnorm, double dropout_rate, std::mt19937_64& rng);
  Var<T> operator()(const Var<T>& x, bool training, std::mt19937_64* rng) const;
};

/// Additive attention gate on a skip connection:
///   alpha = sigmoid(psi(relu(W_x x + W_g up(g)))),  out = alpha * x
/// The gating signal may be coarser than x by a power of two; W_g is applied
/// at the coarse resolution and nearest-upsampled (both are linear per pixel,
/// so the order does not change the result).
template <typename T>
class AttentionGate {
 public:
  struct Output {
    Var<T> gated;
    Var<T> alpha;
  };

  static AttentionGate make(ParamRegistry<T>& reg, const std::string& name, std::size_t skip_channels,
                            std::size_t gating_channels, std::size_t inter_channels, std::mt19937_64& rng);

  Output forward(const Var<T>& x, const Var<T>& g) const;

  std::size_t skip_channels() const { return skip_channels_; }
  std::size_t gating_channels() const { return gating_channels_; }
  std::size_t inter_channels() const { return inter_channels_; }

  Conv2d<T> theta_x;  // no bias
  Conv2d<T> phi_g;
  Conv2d<T> psi;

 private:
  std::size_t skip_channels_ = 0;
  std::size_t gating_channels_ = 0;
  std::size_t inter_channels_ = 0;
};

}  // namespace hippo::nn
