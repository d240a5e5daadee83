#include "ptvseg/simd.hpp"

#include <immintrin.h>

// Compiled with -mavx2 only. FMA is deliberately not enabled: a fused
// multiply-add rounds once and would diverge from the scalar reference.

namespace ptvseg::simd::detail {
namespace {

void axpy_avx2(double a, const double* x, double* y, std::size_t n)
{
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
    {
        __m256d y0 = _mm256_loadu_pd(y + i);
        __m256d y1 = _mm256_loadu_pd(y + i + 4);
        y0 = _mm256_add_pd(y0, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        y1 = _mm256_add_pd(y1, _mm256_mul_pd(va, _mm256_loadu_pd(x + i + 4)));
        _mm256_storeu_pd(y + i, y0);
        _mm256_storeu_pd(y + i + 4, y1);
    }
    for (; i + 4 <= n; i += 4)
    {
        __m256d y0 = _mm256_loadu_pd(y + i);
        y0 = _mm256_add_pd(y0, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, y0);
    }
    for (; i < n; ++i)
        y[i] += a * x[i];
}

double dot_avx2(const double* x, const double* y, std::size_t n)
{
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    for (; i < n; ++i)
        lanes[i & 3] += x[i] * y[i];
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double sum_avx2(const double* x, std::size_t n)
{
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    for (; i < n; ++i)
        lanes[i & 3] += x[i];
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

void adam_update_avx2(double* param, const double* grad, double* m, double* v, std::size_t n,
                      const AdamCoefficients& c)
{
    const double one_minus_b1 = 1.0 - c.beta1;
    const double one_minus_b2 = 1.0 - c.beta2;
    const __m256d b1 = _mm256_set1_pd(c.beta1);
    const __m256d b2 = _mm256_set1_pd(c.beta2);
    const __m256d omb1 = _mm256_set1_pd(one_minus_b1);
    const __m256d omb2 = _mm256_set1_pd(one_minus_b2);
    const __m256d bc1 = _mm256_set1_pd(c.bias_correction1);
    const __m256d bc2 = _mm256_set1_pd(c.bias_correction2);
    const __m256d lr = _mm256_set1_pd(c.lr);
    const __m256d eps = _mm256_set1_pd(c.eps);

    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
    {
        const __m256d g = _mm256_loadu_pd(grad + i);
        __m256d mi = _mm256_loadu_pd(m + i);
        __m256d vi = _mm256_loadu_pd(v + i);
        mi = _mm256_add_pd(_mm256_mul_pd(b1, mi), _mm256_mul_pd(omb1, g));
        vi = _mm256_add_pd(_mm256_mul_pd(b2, vi), _mm256_mul_pd(omb2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d m_hat = _mm256_mul_pd(mi, bc1);
        const __m256d v_hat = _mm256_mul_pd(vi, bc2);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    if (i < n)
        scalar_table.adam_update(param + i, grad + i, m + i, v + i, n - i, c);
}

void gather_taps_avx2(const double* x, const std::ptrdiff_t* off, const double* w, std::size_t taps, double* y,
                      std::size_t n)
{
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16)
    {
        __m256d a0 = _mm256_loadu_pd(y + i);
        __m256d a1 = _mm256_loadu_pd(y + i + 4);
        __m256d a2 = _mm256_loadu_pd(y + i + 8);
        __m256d a3 = _mm256_loadu_pd(y + i + 12);
        for (std::size_t t = 0; t < taps; ++t)
        {
            const __m256d wt = _mm256_set1_pd(w[t]);
            const double* src = x + off[t] + static_cast<std::ptrdiff_t>(i);
            a0 = _mm256_add_pd(a0, _mm256_mul_pd(wt, _mm256_loadu_pd(src)));
            a1 = _mm256_add_pd(a1, _mm256_mul_pd(wt, _mm256_loadu_pd(src + 4)));
            a2 = _mm256_add_pd(a2, _mm256_mul_pd(wt, _mm256_loadu_pd(src + 8)));
            a3 = _mm256_add_pd(a3, _mm256_mul_pd(wt, _mm256_loadu_pd(src + 12)));
        }
        _mm256_storeu_pd(y + i, a0);
        _mm256_storeu_pd(y + i + 4, a1);
        _mm256_storeu_pd(y + i + 8, a2);
        _mm256_storeu_pd(y + i + 12, a3);
    }
    for (; i + 4 <= n; i += 4)
    {
        __m256d a0 = _mm256_loadu_pd(y + i);
        for (std::size_t t = 0; t < taps; ++t)
            a0 = _mm256_add_pd(a0, _mm256_mul_pd(_mm256_set1_pd(w[t]),
                                                 _mm256_loadu_pd(x + off[t] + static_cast<std::ptrdiff_t>(i))));
        _mm256_storeu_pd(y + i, a0);
    }
    if (i < n)
        scalar_table.gather_taps(x + i, off, w, taps, y + i, n - i);
}

template <std::size_t G>
void dot_group(const double* x, const double* base, const std::ptrdiff_t* off, double* out, std::size_t n)
{
    __m256d acc[G];
    for (std::size_t g = 0; g < G; ++g)
        acc[g] = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
    {
        const __m256d xv = _mm256_loadu_pd(x + i);
        for (std::size_t g = 0; g < G; ++g)
            acc[g] = _mm256_add_pd(acc[g], _mm256_mul_pd(xv, _mm256_loadu_pd(base + off[g] + static_cast<std::ptrdiff_t>(i))));
    }
    for (std::size_t g = 0; g < G; ++g)
    {
        alignas(32) double lanes[4];
        _mm256_store_pd(lanes, acc[g]);
        const double* y = base + off[g];
        for (std::size_t j = i; j < n; ++j)
            lanes[j & 3] += x[j] * y[j];
        out[g] = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    }
}

void dot_taps_avx2(const double* x, const double* base, const std::ptrdiff_t* off, std::size_t taps, double* out,
                   std::size_t n)
{
    std::size_t t = 0;
    for (; t + 9 <= taps; t += 9)
        dot_group<9>(x, base, off + t, out + t, n);
    for (; t + 4 <= taps; t += 4)
        dot_group<4>(x, base, off + t, out + t, n);
    for (; t < taps; ++t)
        dot_group<1>(x, base, off + t, out + t, n);
}

}  // namespace

const KernelTable avx2_table{Isa::Avx2,       axpy_avx2,        dot_avx2,     sum_avx2,
                             adam_update_avx2, gather_taps_avx2, dot_taps_avx2};

}  // namespace ptvseg::simd::detail
