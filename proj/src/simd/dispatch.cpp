#include "ptvseg/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace ptvseg::simd {
namespace {

bool cpu_has_avx2()
{
#if defined(PTVSEG_HAVE_AVX2)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

const KernelTable* initial_table()
{
    if (const char* forced = std::getenv("PTVSEG_ISA"))
    {
        const std::string name(forced);
        if (name == "scalar")
            return &detail::scalar_table;
        if (name == "avx2" && isa_available(Isa::Avx2))
            return &kernels_for(Isa::Avx2);
    }
    if (isa_available(Isa::Avx2))
        return &kernels_for(Isa::Avx2);
    return &detail::scalar_table;
}

std::atomic<const KernelTable*>& active_slot()
{
    static std::atomic<const KernelTable*> slot{initial_table()};
    return slot;
}

}  // namespace

bool isa_available(Isa isa)
{
    switch (isa)
    {
        case Isa::Scalar: return true;
        case Isa::Avx2: return cpu_has_avx2();
    }
    return false;
}

const KernelTable& kernels_for(Isa isa)
{
    if (!isa_available(isa))
        throw std::invalid_argument("kernel ISA not available on this CPU: " + std::string(isa_name(isa)));
#if defined(PTVSEG_HAVE_AVX2)
    if (isa == Isa::Avx2)
        return detail::avx2_table;
#endif
    return detail::scalar_table;
}

const KernelTable& kernels()
{
    return *active_slot().load(std::memory_order_acquire);
}

Isa active_isa()
{
    return kernels().isa;
}

void set_active_isa(Isa isa)
{
    active_slot().store(&kernels_for(isa), std::memory_order_release);
}

std::string_view isa_name(Isa isa)
{
    switch (isa)
    {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

}  // namespace ptvseg::simd
