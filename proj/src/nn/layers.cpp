#include "hippo/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace hippo::nn {

template <typename T>
Tensor<T> he_uniform(Shape4 shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Tensor<T> t(shape);
  for (auto& v : t.values()) v = static_cast<T>((2.0 * uniform01(rng) - 1.0) * bound);
  return t;
}

template <typename T>
Conv2d<T> Conv2d<T>::make(ParamRegistry<T>& reg, std::string name, std::size_t in, std::size_t out,
                          std::size_t kernel, bool with_bias, std::mt19937_64& rng) {
  Conv2d c;
  c.weight = parameter(he_uniform<T>(Shape4{out, in, kernel, kernel}, in * kernel * kernel, rng));
  if (with_bias) c.bias = parameter(Tensor<T>(Shape4{out, 1, 1, 1}));
  reg.add_layer(std::move(name), {{"weight", c.weight}, {"bias", c.bias}});
  return c;
}

template <typename T>
ConvTranspose2x2<T> ConvTranspose2x2<T>::make(ParamRegistry<T>& reg, std::string name, std::size_t in,
                                              std::size_t out, std::mt19937_64& rng) {
  ConvTranspose2x2 c;
  // Each output pixel receives exactly `in` weighted inputs.
  c.weight = parameter(he_uniform<T>(Shape4{in, out, 2, 2}, in, rng));
  c.bias = parameter(Tensor<T>(Shape4{out, 1, 1, 1}));
  reg.add_layer(std::move(name), {{"weight", c.weight}, {"bias", c.bias}});
  return c;
}

template <typename T>
BatchNorm2d<T> BatchNorm2d<T>::make(ParamRegistry<T>& reg, std::string name, std::size_t channels) {
  BatchNorm2d b;
  b.gamma = parameter(Tensor<T>(Shape4{channels, 1, 1, 1}, T(1)));
  b.beta = parameter(Tensor<T>(Shape4{channels, 1, 1, 1}, T(0)));
  b.state = std::make_shared<BatchNormState<T>>();
  b.state->running_mean = Tensor<T>(Shape4{channels, 1, 1, 1}, T(0));
  b.state->running_var = Tensor<T>(Shape4{channels, 1, 1, 1}, T(1));
  reg.add_layer(name, {{"gamma", b.gamma}, {"beta", b.beta}});
  reg.add_buffer(std::move(name), b.state);
  return b;
}

template <typename T>
ConvBlock<T> ConvBlock<T>::make(ParamRegistry<T>& reg, const std::string& name, std::size_t in, std::size_t out,
                                bool batchnorm, double dropout_rate, std::mt19937_64& rng) {
  ConvBlock b;
  b.conv1 = Conv2d<T>::make(reg, name + ".conv1", in, out, 3, true, rng);
  if (batchnorm) b.bn1 = BatchNorm2d<T>::make(reg, name + ".bn1", out);
  b.conv2 = Conv2d<T>::make(reg, name + ".conv2", out, out, 3, true, rng);
  if (batchnorm) b.bn2 = BatchNorm2d<T>::make(reg, name + ".bn2", out);
  b.dropout_rate = dropout_rate;
  return b;
}

template <typename T>
Var<T> ConvBlock<T>::operator()(const Var<T>& x, bool training, std::mt19937_64* rng) const {
  Var<T> h = conv1(x);
  if (bn1) h = (*bn1)(h, training);
  h = relu(h);
  h = conv2(h);
  if (bn2) h = (*bn2)(h, training);
  h = relu(h);
  if (training && dropout_rate > 0.0) {
    if (!rng) throw std::invalid_argument("ConvBlock: dropout in training mode needs an RNG");
    h = dropout(h, dropout_rate, *rng);
  }
  return h;
}

template <typename T>
AttentionGate<T> AttentionGate<T>::make(ParamRegistry<T>& reg, const std::string& name, std::size_t skip_channels,
                                        std::size_t gating_channels, std::size_t inter_channels,
                                        std::mt19937_64& rng) {
  if (skip_channels == 0 || gating_channels == 0 || inter_channels == 0) {
    throw std::invalid_argument("AttentionGate: channel counts must be positive");
  }
  AttentionGate g;
  g.theta_x = Conv2d<T>::make(reg, name + ".theta_x", skip_channels, inter_channels, 1, false, rng);
  g.phi_g = Conv2d<T>::make(reg, name + ".phi_g", gating_channels, inter_channels, 1, true, rng);
  g.psi = Conv2d<T>::make(reg, name + ".psi", inter_channels, 1, 1, true, rng);
  g.skip_channels_ = skip_channels;
  g.gating_channels_ = gating_channels;
  g.inter_channels_ = inter_channels;
  return g;
}

template <typename T>
typename AttentionGate<T>::Output AttentionGate<T>::forward(const Var<T>& x, const Var<T>& g) const {
  const Shape4 xs = x->value.shape();
  const Shape4 gs = g->value.shape();
  if (xs.c != skip_channels_) {
    throw std::invalid_argument("attention gate: skip features have " + std::to_string(xs.c) +
                                " channels, gate configured for " + std::to_string(skip_channels_));
  }
  if (gs.c != gating_channels_) {
    throw std::invalid_argument("attention gate: gating signal has " + std::to_string(gs.c) +
                                " channels, gate configured for " + std::to_string(gating_channels_));
  }
  if (gs.n != xs.n || gs.h == 0 || gs.w == 0 || xs.h % gs.h != 0 || xs.w % gs.w != 0 ||
      xs.h / gs.h != xs.w / gs.w) {
    throw std::invalid_argument("attention gate: gating signal " + gs.str() + " must be a uniformly coarser grid of " +
                                xs.str());
  }
  const std::size_t factor = xs.h / gs.h;
  auto f = relu(add(theta_x(x), upsample_nearest(phi_g(g), factor)));
  auto alpha = sigmoid(psi(f));
  return Output{gate_multiply(alpha, x), alpha};
}

#define HIPPO_INSTANTIATE_LAYERS(T)                                                    \
  template Tensor<T> he_uniform<T>(Shape4, std::size_t, std::mt19937_64&);             \
  template struct Conv2d<T>;                                                           \
  template struct ConvTranspose2x2<T>;                                                 \
  template struct BatchNorm2d<T>;                                                      \
  template struct ConvBlock<T>;                                                        \
  template class AttentionGate<T>;

HIPPO_INSTANTIATE_LAYERS(float)
HIPPO_INSTANTIATE_LAYERS(double)

}  // namespace hippo::nn
