#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace hippo::metrics {

/// Overlap 2|A∩B| / (|A| + |B|); 1 when both masks are empty.
double dice_score(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
/// |A∩B| / |A∪B|; 1 when both masks are empty.
double iou_score(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

enum class LossKind { dice, dice_bce };

LossKind parse_loss_kind(std::string_view name);
std::string_view loss_kind_name(LossKind kind);

struct LossConfig {
  LossKind kind = LossKind::dice_bce;
  double bce_weight = 0.5;  // weight of BCE; Dice gets 1 - bce_weight
  double smooth = 1e-6;     // soft-Dice stabilizer

  void validate() const;
  /// BCE weight actually applied (0 for kind == dice).
  double effective_bce_weight() const { return kind == LossKind::dice ? 0.0 : bce_weight; }
};

inline constexpr double kBceClamp = 1e-7;

// The losses below reduce over every element of the given arrays. When
// `grad` is non-empty it receives d(loss)/d(probs) (overwritten, same size).

/// 1 - (2 Σ p t + ε) / (Σ p + Σ t + ε)
template <typename T>
double soft_dice_loss(std::span<const T> probs, std::span<const T> target, double smooth, std::span<T> grad = {});

/// Mean binary cross entropy with probabilities clamped to
/// [1e-7, 1 - 1e-7]; the gradient is evaluated at the clamped value.
template <typename T>
double bce_loss(std::span<const T> probs, std::span<const T> target, std::span<T> grad = {});

/// w * BCE + (1 - w) * soft Dice.
template <typename T>
double combined_loss(std::span<const T> probs, std::span<const T> target, const LossConfig& config,
                     std::span<T> grad = {});

/// Unweighted mean of combined_loss over heads. `grads`, when given, holds
/// one span per head.
template <typename T>
double deep_supervision_loss(const std::vector<std::span<const T>>& heads, std::span<const T> target,
                             const LossConfig& config, const std::vector<std::span<T>>& grads = {});

/// Elementwise value > threshold.
template <typename T>
std::vector<std::uint8_t> binarize(std::span<const T> probs, double threshold = 0.5);

}  // namespace hippo::metrics
