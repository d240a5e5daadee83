#include "ptvseg/loss.hpp"

#include "ptvseg/simd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ptvseg {
namespace {

void check_pair(const Tensor& p, const Tensor& y, const char* what)
{
    if (p.shape() != y.shape())
        throw ShapeError(std::string(what) + ": prediction shape " + shape_to_string(p.shape()) +
                         " differs from target " + shape_to_string(y.shape()));
    if (p.empty())
        throw ShapeError(std::string(what) + ": empty input");
    for (double v : y.values())
        if (v != 0.0 && v != 1.0)
            throw std::invalid_argument(std::string(what) + ": target must be binary, found " + std::to_string(v));
}

struct DiceTerms
{
    double numerator;
    double denominator;
};

DiceTerms dice_terms(const Tensor& p, const Tensor& y)
{
    const auto& k = simd::kernels();
    const double overlap = k.dot(y.data(), p.data(), p.size());
    const double sum_y = k.sum(y.data(), y.size());
    const double sum_p = k.sum(p.data(), p.size());
    return {2.0 * overlap + 1.0, sum_y + sum_p + 1.0};
}

}  // namespace

std::string_view loss_name(LossKind kind)
{
    return kind == LossKind::Bce ? "bcel" : "dice";
}

LossKind parse_loss_kind(std::string_view name)
{
    if (name == "bcel" || name == "bce")
        return LossKind::Bce;
    if (name == "dice" || name == "dl")
        return LossKind::Dice;
    throw std::invalid_argument("unknown loss kind '" + std::string(name) + "' (expected bcel or dice)");
}

LossValue bce_loss(const Tensor& p, const Tensor& y)
{
    check_pair(p, y, "bce_loss");
    const double n = static_cast<double>(p.size());
    LossValue out{0.0, Tensor(p.shape())};
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
    {
        const double pc = std::clamp(p[i], kBceEpsilon, 1.0 - kBceEpsilon);
        total += -(y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc));
        out.grad[i] = (pc - y[i]) / (pc * (1.0 - pc)) / n;
    }
    out.value = total / n;
    return out;
}

LossValue dice_loss(const Tensor& p, const Tensor& y)
{
    check_pair(p, y, "dice_loss");
    const auto [num, den] = dice_terms(p, y);
    LossValue out{1.0 - num / den, Tensor(p.shape())};
    const double den2 = den * den;
    for (std::size_t i = 0; i < p.size(); ++i)
        out.grad[i] = (num - 2.0 * y[i] * den) / den2;
    return out;
}

LossValue compute_loss(const Tensor& p, const Tensor& y, LossKind kind)
{
    return kind == LossKind::Bce ? bce_loss(p, y) : dice_loss(p, y);
}

LossValue loss_from_logits(const Tensor& logits, const Tensor& y, LossKind kind)
{
    check_pair(logits, y, "loss_from_logits");
    const std::size_t count = logits.size();
    if (kind == LossKind::Dice)
    {
        const Tensor p = sigmoid_forward(logits);
        LossValue out = dice_loss(p, y);
        for (std::size_t i = 0; i < count; ++i)
            out.grad[i] *= p[i] * sigmoid(-logits[i]);
        return out;
    }

    // The clamp keeps both logarithms finite for any logit, so the value is evaluated exactly as
    // the composed path does. Inside the clamp the chain rule collapses to (s(z) - y) / N.
    const double n = static_cast<double>(count);
    LossValue out{0.0, Tensor(logits.shape())};
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i)
    {
        const double p = sigmoid(logits[i]);
        const double pc = std::clamp(p, kBceEpsilon, 1.0 - kBceEpsilon);
        total += -(y[i] * std::log(pc) + (1.0 - y[i]) * std::log(1.0 - pc));
        if (pc == p)
            out.grad[i] = (p - y[i]) / n;
        else
            out.grad[i] = (pc - y[i]) / (pc * (1.0 - pc)) * (p * sigmoid(-logits[i])) / n;
    }
    out.value = total / n;
    return out;
}

}  // namespace ptvseg
