#include <sstream>
#include <stdexcept>

#include "hippo/models.hpp"

namespace hippo::models {

Variant parse_variant(std::string_view name) {
  if (name == "unet") return Variant::unet;
  if (name == "attention_unet") return Variant::attention_unet;
  if (name == "nested_unet") return Variant::nested_unet;
  throw std::invalid_argument("unknown model variant '" + std::string(name) +
                              "' (expected unet, attention_unet or nested_unet)");
}

std::string_view variant_name(Variant variant) {
  switch (variant) {
    case Variant::unet: return "unet";
    case Variant::attention_unet: return "attention_unet";
    case Variant::nested_unet: return "nested_unet";
  }
  return "unknown";
}

void ModelConfig::validate() const {
  if (depth < 3 || depth > 5) throw std::invalid_argument("model.depth must be in [3, 5], got " + std::to_string(depth));
  if (base_channels < 4) {
    throw std::invalid_argument("model.base_channels must be >= 4, got " + std::to_string(base_channels));
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw std::invalid_argument("model.dropout_rate must be in [0, 1)");
  if (deep_supervision && variant != Variant::nested_unet) {
    throw std::invalid_argument("model.deep_supervision requires variant nested_unet");
  }
  if (in_channels != 3) throw std::invalid_argument("model.in_channels must be 3");
  if (out_channels != 1) throw std::invalid_argument("model.out_channels must be 1");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"variant", std::string(variant_name(c.variant))},
          {"depth", c.depth},
          {"base_channels", c.base_channels},
          {"use_batchnorm", c.use_batchnorm},
          {"dropout_rate", c.dropout_rate},
          {"deep_supervision", c.deep_supervision},
          {"in_channels", c.in_channels},
          {"out_channels", c.out_channels}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.value("variant", std::string(variant_name(c.variant))));
  c.depth = j.value("depth", c.depth);
  c.base_channels = j.value("base_channels", c.base_channels);
  c.use_batchnorm = j.value("use_batchnorm", c.use_batchnorm);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.deep_supervision = j.value("deep_supervision", c.deep_supervision);
  c.in_channels = j.value("in_channels", c.in_channels);
  c.out_channels = j.value("out_channels", c.out_channels);
  return c;
}

template <typename T>
SegmentationNet<T>::SegmentationNet(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const int depth = config_.depth;
  const bool bn = config_.use_batchnorm;
  const double drop = config_.dropout_rate;
  auto ch = [&](int level) { return config_.channels_at(level); };
  const auto in0 = static_cast<std::size_t>(config_.in_channels);

  // Registration follows forward execution order so that gradient-flow
  // reports read input to output.
  if (config_.variant == Variant::nested_unet) {
    encoder_.push_back(nn::ConvBlock<T>::make(registry_, "x0_0", in0, ch(0), bn, drop, rng));
    for (int s = 1; s < depth; ++s) {
      encoder_.push_back(nn::ConvBlock<T>::make(registry_, "x" + std::to_string(s) + "_0", ch(s - 1), ch(s), bn, drop, rng));
      for (int j = 1; j <= s; ++j) {
        const int i = s - j;
        const std::string node = std::to_string(i) + "_" + std::to_string(j);
        nested_ups_.emplace(std::pair{i, j}, nn::ConvTranspose2x2<T>::make(registry_, "up" + node, ch(i + 1), ch(i), rng));
        nested_.emplace(std::pair{i, j},
                        nn::ConvBlock<T>::make(registry_, "x" + node, static_cast<std::size_t>(j + 1) * ch(i), ch(i), bn,
                                               drop, rng));
      }
    }
    if (config_.deep_supervision) {
      for (int j = 1; j < depth; ++j) {
        heads_.push_back(nn::Conv2d<T>::make(registry_, "head0_" + std::to_string(j), ch(0), 1, 1, true, rng));
      }
    } else {
      heads_.push_back(nn::Conv2d<T>::make(registry_, "head", ch(0), 1, 1, true, rng));
    }
    return;
  }

  for (int i = 0; i < depth; ++i) {
    encoder_.push_back(
        nn::ConvBlock<T>::make(registry_, "enc" + std::to_string(i), i == 0 ? in0 : ch(i - 1), ch(i), bn, drop, rng));
  }
  ups_.resize(static_cast<std::size_t>(depth - 1));
  decoder_.resize(static_cast<std::size_t>(depth - 1));
  if (config_.variant == Variant::attention_unet) gates_.resize(static_cast<std::size_t>(depth - 1));
  for (int i = depth - 2; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    const std::string lvl = std::to_string(i);
    ups_[idx] = nn::ConvTranspose2x2<T>::make(registry_, "up" + lvl, ch(i + 1), ch(i), rng);
    if (config_.variant == Variant::attention_unet) {
      gates_[idx] = nn::AttentionGate<T>::make(registry_, "att" + lvl, ch(i), ch(i + 1), std::max<std::size_t>(1, ch(i) / 2),
                                               rng);
    }
    decoder_[idx] = nn::ConvBlock<T>::make(registry_, "dec" + lvl, 2 * ch(i), ch(i), bn, drop, rng);
  }
  heads_.push_back(nn::Conv2d<T>::make(registry_, "head", ch(0), 1, 1, true, rng));
}

template <typename T>
void SegmentationNet<T>::check_input(const nn::Shape4& s) const {
  if (s.c != static_cast<std::size_t>(config_.in_channels)) {
    throw ShapeError("model input has " + std::to_string(s.c) + " channels, expected " +
                     std::to_string(config_.in_channels));
  }
  const std::size_t d = config_.required_divisor();
  if (s.h == 0 || s.w == 0 || s.h % d != 0 || s.w % d != 0) {
    std::ostringstream os;
    os << "input spatial dims " << s.h << "x" << s.w << " must be divisible by " << d << " (2^(depth-1) for depth "
       << config_.depth << ")";
    throw ShapeError(os.str());
  }
}

template <typename T>
std::vector<nn::Var<T>> SegmentationNet<T>::forward(const nn::Var<T>& input, bool training, std::mt19937_64* rng,
                                                    std::vector<nn::Var<T>>* attention_maps) const {
  check_input(input->value.shape());
  const int depth = config_.depth;
  std::vector<nn::Var<T>> outputs;

  if (config_.variant == Variant::nested_unet) {
    std::map<std::pair<int, int>, nn::Var<T>> x;
    x[{0, 0}] = encoder_[0](input, training, rng);
    for (int s = 1; s < depth; ++s) {
      x[{s, 0}] = encoder_[static_cast<std::size_t>(s)](nn::max_pool2x2(x[{s - 1, 0}]), training, rng);
      for (int j = 1; j <= s; ++j) {
        const int i = s - j;
        std::vector<nn::Var<T>> parts;
        for (int k = 0; k < j; ++k) parts.push_back(x[{i, k}]);
        parts.push_back(nested_ups_.at({i, j})(x[{i + 1, j - 1}]));
        x[{i, j}] = nested_.at({i, j})(nn::concat_channels(parts), training, rng);
      }
    }
    if (config_.deep_supervision) {
      for (int j = 1; j < depth; ++j) outputs.push_back(nn::sigmoid(heads_[static_cast<std::size_t>(j - 1)](x[{0, j}])));
    } else {
      outputs.push_back(nn::sigmoid(heads_[0](x[{0, depth - 1}])));
    }
    return outputs;
  }

  std::vector<nn::Var<T>> skips;
  nn::Var<T> h = input;
  for (int i = 0; i < depth; ++i) {
    if (i > 0) h = nn::max_pool2x2(h);
    h = encoder_[static_cast<std::size_t>(i)](h, training, rng);
    skips.push_back(h);
  }
  for (int i = depth - 2; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    nn::Var<T> skip = skips[idx];
    if (config_.variant == Variant::attention_unet) {
      auto gated = gates_[idx].forward(skip, h);
      if (attention_maps) attention_maps->push_back(gated.alpha);
      skip = gated.gated;
    }
    auto up = ups_[idx](h);
    h = decoder_[idx](nn::concat_channels<T>({skip, up}), training, rng);
  }
  outputs.push_back(nn::sigmoid(heads_[0](h)));
  return outputs;
}

template <typename T>
std::vector<nn::Tensor<T>> SegmentationNet<T>::predict(const nn::Tensor<T>& batch) const {
  nn::NoGradGuard guard;
  auto outs = forward(nn::constant(batch), false, nullptr);
  std::vector<nn::Tensor<T>> result;
  result.reserve(outs.size());
  for (auto& o : outs) result.push_back(std::move(o->value));
  return result;
}

template <typename T>
std::size_t SegmentationNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : registry_.layers()) n += l.numel();
  return n;
}

template <typename T>
std::vector<LayerCount> SegmentationNet<T>::parameter_breakdown() const {
  std::vector<LayerCount> out;
  for (const auto& l : registry_.layers()) out.push_back({l.name, l.numel()});
  return out;
}

template <typename T>
void SegmentationNet<T>::zero_grad() {
  for (const auto& l : registry_.layers()) {
    for (const auto& p : l.params) p->zero_grad();
  }
}

template <typename T>
std::vector<std::pair<std::string, nn::Tensor<T>>> SegmentationNet<T>::state() const {
  std::vector<std::pair<std::string, nn::Tensor<T>>> out;
  for (const auto& [name, var] : registry_.named_parameters()) out.emplace_back(name, var->value);
  for (const auto& b : registry_.buffers()) {
    out.emplace_back(b.name + ".running_mean", b.state->running_mean);
    out.emplace_back(b.name + ".running_var", b.state->running_var);
  }
  return out;
}

template <typename T>
void SegmentationNet<T>::load_state(const std::vector<std::pair<std::string, nn::Tensor<T>>>& state) {
  std::vector<std::pair<std::string, nn::Tensor<T>*>> slots;
  for (const auto& [name, var] : registry_.named_parameters()) slots.emplace_back(name, &var->value);
  for (const auto& b : registry_.buffers()) {
    slots.emplace_back(b.name + ".running_mean", &b.state->running_mean);
    slots.emplace_back(b.name + ".running_var", &b.state->running_var);
  }
  if (slots.size() != state.size()) {
    throw std::invalid_argument("load_state: expected " + std::to_string(slots.size()) + " tensors, got " +
                                std::to_string(state.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].first != state[i].first) {
      throw std::invalid_argument("load_state: tensor " + std::to_string(i) + " is '" + state[i].first +
                                  "', expected '" + slots[i].first + "'");
    }
    if (slots[i].second->shape() != state[i].second.shape()) {
      throw std::invalid_argument("load_state: shape mismatch for '" + slots[i].first + "'");
    }
  }
  for (std::size_t i = 0; i < slots.size(); ++i) *slots[i].second = state[i].second;
}

template <typename T>
SegmentationNet<T> SegmentationNet<T>::clone() const {
  SegmentationNet copy(config_, 0);
  copy.load_state(state());
  return copy;
}

template class SegmentationNet<float>;
template class SegmentationNet<double>;

Model build_model(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

std::size_t count_parameters(const Model& model) { return model.parameter_count(); }

std::vector<nn::Tensor<float>> forward(const Model& model, const nn::Tensor<float>& batch) {
  return model.predict(batch);
}

}  // namespace hippo::models
