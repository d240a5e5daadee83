#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

// Inner-loop kernels for the tensor library.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2
// variant. The variants are required to produce bit-identical results: the
// AVX2 code uses separate multiply and add (no FMA) and the scalar reference
// reduces in the same four-lane order the vector code uses. The active variant
// is chosen once at startup from the CPU features and may be overridden with
// the PTVSEG_ISA environment variable ("scalar" or "avx2").

namespace ptvseg::simd {

enum class Isa { Scalar, Avx2 };

struct AdamCoefficients
{
    double lr;
    double beta1;
    double beta2;
    double eps;
    double bias_correction1;  // 1 / (1 - beta1^t)
    double bias_correction2;  // 1 / (1 - beta2^t)
};

struct KernelTable
{
    Isa isa;
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // sum x[i] * y[i], accumulated in four interleaved lanes
    double (*dot)(const double* x, const double* y, std::size_t n);
    // sum x[i], same lane order as dot
    double (*sum)(const double* x, std::size_t n);
    void (*adam_update)(double* param, const double* grad, double* m, double* v, std::size_t n,
                        const AdamCoefficients& c);
    // y[i] += w[0] * x[i + off[0]], then w[1] * x[i + off[1]], ... for every i < n; the
    // per-element sequence equals `taps` consecutive axpy calls.
    void (*gather_taps)(const double* x, const std::ptrdiff_t* off, const double* w, std::size_t taps, double* y,
                        std::size_t n);
    // out[t] = dot(x, base + off[t], n) for t < taps
    void (*dot_taps)(const double* x, const double* base, const std::ptrdiff_t* off, std::size_t taps, double* out,
                     std::size_t n);
};

bool isa_available(Isa isa);

/// Kernel table for a specific ISA. Throws std::invalid_argument if unavailable.
const KernelTable& kernels_for(Isa isa);

/// Kernel table used by the library.
const KernelTable& kernels();

Isa active_isa();

/// Switches the library-wide kernel table. Not synchronized with in-flight work.
void set_active_isa(Isa isa);

std::string_view isa_name(Isa isa);

namespace detail {
extern const KernelTable scalar_table;
#if defined(PTVSEG_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
}  // namespace detail

}  // namespace ptvseg::simd
