#include "ptvseg/simd.hpp"

#include <cmath>

namespace ptvseg::simd::detail {
namespace {

void axpy_scalar(double a, const double* x, double* y, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
        y[i] += a * x[i];
}

// Lane i % 4 accumulates element i; lanes are combined pairwise at the end.
// This is the order the vector kernels reproduce.
double dot_scalar(const double* x, const double* y, std::size_t n)
{
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i)
        acc[i & 3] += x[i] * y[i];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

double sum_scalar(const double* x, std::size_t n)
{
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i)
        acc[i & 3] += x[i];
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

void adam_update_scalar(double* param, const double* grad, double* m, double* v, std::size_t n,
                        const AdamCoefficients& c)
{
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    for (std::size_t i = 0; i < n; ++i)
    {
        const double g = grad[i];
        m[i] = c.beta1 * m[i] + one_minus_b1 * g;
        v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
        const double m_hat = m[i] * c.bias_correction1;
        const double v_hat = v[i] * c.bias_correction2;
        param[i] = param[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

void gather_taps_scalar(const double* x, const std::ptrdiff_t* off, const double* w, std::size_t taps, double* y,
                        std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i)
    {
        double acc = y[i];
        for (std::size_t t = 0; t < taps; ++t)
            acc += w[t] * x[static_cast<std::ptrdiff_t>(i) + off[t]];
        y[i] = acc;
    }
}

void dot_taps_scalar(const double* x, const double* base, const std::ptrdiff_t* off, std::size_t taps, double* out,
                     std::size_t n)
{
    for (std::size_t t = 0; t < taps; ++t)
        out[t] = dot_scalar(x, base + off[t], n);
}

}  // namespace

const KernelTable scalar_table{Isa::Scalar,       axpy_scalar,        dot_scalar,     sum_scalar,
                               adam_update_scalar, gather_taps_scalar, dot_taps_scalar};

}  // namespace ptvseg::simd::detail
