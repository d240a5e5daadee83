#pragma once

#include "ptvseg/tensor.hpp"

#include <string_view>

namespace ptvseg {

enum class LossKind { Bce, Dice };

std::string_view loss_name(LossKind kind);
/// Accepts "bcel"/"bce" and "dice"/"dl". Throws std::invalid_argument otherwise.
LossKind parse_loss_kind(std::string_view name);

struct LossValue
{
    double value = 0.0;
    /// Gradient of value with respect to the loss input (probabilities or logits).
    Tensor grad;
};

inline constexpr double kBceEpsilon = 1e-7;

/// Mean per-pixel binary cross-entropy. p is clamped to [eps, 1 - eps]; the gradient
/// (p - y) / (p (1 - p)) / N is evaluated at the clamped p.
LossValue bce_loss(const Tensor& p, const Tensor& y);

/// Soft Dice with +1 smoothing over all pixels of the sample:
/// 1 - (2 sum(y p) + 1) / (sum(y) + sum(p) + 1).
LossValue dice_loss(const Tensor& p, const Tensor& y);

LossValue compute_loss(const Tensor& p, const Tensor& y, LossKind kind);

/// sigmoid followed by the chosen loss, evaluated without forming log(0) or exp overflow.
/// Equal to the composed path, including the BCE clamp. The gradient is on the logits.
LossValue loss_from_logits(const Tensor& logits, const Tensor& y, LossKind kind);

}  // namespace ptvseg
