#include "hippo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hippo::metrics {

namespace {

template <typename A, typename B>
void require_same_size(std::span<A> a, std::span<B> b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + " elements)");
  }
}

struct Overlap {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t both = 0;
};

Overlap overlap(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, const char* what) {
  require_same_size(a, b, what);
  Overlap o;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > 1 || b[i] > 1) throw std::invalid_argument(std::string(what) + ": masks must be binary");
    o.a += a[i];
    o.b += b[i];
    o.both += a[i] & b[i];
  }
  return o;
}

}  // namespace

double dice_score(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  const auto o = overlap(a, b, "dice_score");
  if (o.a + o.b == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double iou_score(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  const auto o = overlap(a, b, "iou_score");
  const std::size_t uni = o.a + o.b - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

LossKind parse_loss_kind(std::string_view name) {
  if (name == "dice") return LossKind::dice;
  if (name == "dice_bce") return LossKind::dice_bce;
  throw std::invalid_argument("unknown loss kind '" + std::string(name) + "' (expected dice or dice_bce)");
}

std::string_view loss_kind_name(LossKind kind) { return kind == LossKind::dice ? "dice" : "dice_bce"; }

void LossConfig::validate() const {
  if (!(bce_weight >= 0.0 && bce_weight <= 1.0)) throw std::invalid_argument("loss.bce_weight must be in [0, 1]");
  if (!(smooth > 0.0)) throw std::invalid_argument("loss.smooth must be > 0");
}

template <typename T>
double soft_dice_loss(std::span<const T> probs, std::span<const T> target, double smooth, std::span<T> grad) {
  require_same_size(probs, target, "soft_dice_loss");
  double inter = 0.0;
  double sum_p = 0.0;
  double sum_t = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    inter += static_cast<double>(probs[i]) * static_cast<double>(target[i]);
    sum_p += probs[i];
    sum_t += target[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = sum_p + sum_t + smooth;
  if (!grad.empty()) {
    require_same_size(probs, std::span<const T>(grad.data(), grad.size()), "soft_dice_loss gradient");
    // d/dp_i [1 - num/den] = -(2 t_i den - num) / den^2
    const double inv_den2 = 1.0 / (den * den);
    for (std::size_t i = 0; i < probs.size(); ++i) {
      grad[i] = static_cast<T>(-(2.0 * static_cast<double>(target[i]) * den - num) * inv_den2);
    }
  }
  return 1.0 - num / den;
}

template <typename T>
double bce_loss(std::span<const T> probs, std::span<const T> target, std::span<T> grad) {
  require_same_size(probs, target, "bce_loss");
  if (probs.empty()) throw std::invalid_argument("bce_loss: empty input");
  const double n = static_cast<double>(probs.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(static_cast<double>(probs[i]), kBceClamp, 1.0 - kBceClamp);
    const double t = target[i];
    sum -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    if (!grad.empty()) grad[i] = static_cast<T>((-t / p + (1.0 - t) / (1.0 - p)) / n);
  }
  return sum / n;
}

template <typename T>
double combined_loss(std::span<const T> probs, std::span<const T> target, const LossConfig& config,
                     std::span<T> grad) {
  config.validate();
  const double w = config.effective_bce_weight();
  if (w == 0.0) return soft_dice_loss(probs, target, config.smooth, grad);
  std::vector<T> g_dice(grad.empty() ? 0 : grad.size());
  std::vector<T> g_bce(grad.empty() ? 0 : grad.size());
  const double dice = soft_dice_loss(probs, target, config.smooth, std::span<T>(g_dice));
  const double bce = bce_loss(probs, target, std::span<T>(g_bce));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = static_cast<T>(w * static_cast<double>(g_bce[i]) + (1.0 - w) * static_cast<double>(g_dice[i]));
  }
  return w * bce + (1.0 - w) * dice;
}

template <typename T>
double deep_supervision_loss(const std::vector<std::span<const T>>& heads, std::span<const T> target,
                             const LossConfig& config, const std::vector<std::span<T>>& grads) {
  if (heads.empty()) throw std::invalid_argument("deep_supervision_loss: no heads");
  if (!grads.empty() && grads.size() != heads.size()) {
    throw std::invalid_argument("deep_supervision_loss: one gradient buffer per head required");
  }
  const double scale = 1.0 / static_cast<double>(heads.size());
  double total = 0.0;
  for (std::size_t h = 0; h < heads.size(); ++h) {
    std::span<T> g = grads.empty() ? std::span<T>() : grads[h];
    total += combined_loss(heads[h], target, config, g);
    for (auto& v : g) v = static_cast<T>(static_cast<double>(v) * scale);
  }
  return total * scale;
}

template <typename T>
std::vector<std::uint8_t> binarize(std::span<const T> probs, double threshold) {
  std::vector<std::uint8_t> out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = static_cast<double>(probs[i]) > threshold ? 1 : 0;
  return out;
}

#define HIPPO_INSTANTIATE_LOSSES(T)                                                                              \
  template double soft_dice_loss<T>(std::span<const T>, std::span<const T>, double, std::span<T>);              \
  template double bce_loss<T>(std::span<const T>, std::span<const T>, std::span<T>);                            \
  template double combined_loss<T>(std::span<const T>, std::span<const T>, const LossConfig&, std::span<T>);    \
  template double deep_supervision_loss<T>(const std::vector<std::span<const T>>&, std::span<const T>,          \
                                           const LossConfig&, const std::vector<std::span<T>>&);                \
  template std::vector<std::uint8_t> binarize<T>(std::span<const T>, double);

HIPPO_INSTANTIATE_LOSSES(float)
HIPPO_INSTANTIATE_LOSSES(double)

}  // namespace hippo::metrics
