#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "cascade/simd/kernels.hpp"

namespace cascade::simd {

const KernelTable& scalar_table();
const KernelTable& avx2_table();

const char* isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) {
  if (isa == Isa::kScalar) return true;
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

Isa detect_best_isa() { return isa_available(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar; }

namespace {

std::atomic<int> g_active{-1};

Isa init_active() {
  Isa isa = detect_best_isa();
  if (const char* env = std::getenv("CASCADE_SIMD")) {
    if (std::strcmp(env, "scalar") == 0) isa = Isa::kScalar;
    else if (std::strcmp(env, "avx2") == 0 && isa_available(Isa::kAvx2)) isa = Isa::kAvx2;
  }
  return isa;
}

}  // namespace

Isa active_isa() {
  int cur = g_active.load(std::memory_order_acquire);
  if (cur < 0) {
    Isa isa = init_active();
    g_active.store(static_cast<int>(isa), std::memory_order_release);
    return isa;
  }
  return static_cast<Isa>(cur);
}

bool force_isa(Isa isa) {
  if (!isa_available(isa)) return false;
  g_active.store(static_cast<int>(isa), std::memory_order_release);
  return true;
}

const KernelTable& kernels(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (!isa_available(Isa::kAvx2))
      throw std::runtime_error("avx2 kernels requested but this CPU lacks AVX2");
    return avx2_table();
  }
  return scalar_table();
}

const KernelTable& kernels() { return kernels(active_isa()); }

}  // namespace cascade::simd
