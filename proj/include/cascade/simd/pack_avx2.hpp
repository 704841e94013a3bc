#pragma once

// AVX2 op set. Only include from translation units compiled with -mavx2.

#include <immintrin.h>

#include "cascade/simd/pack.hpp"

namespace cascade::simd {

struct Avx2Ops {
  static constexpr int W = kLanes;
  using D = __m256d;
  using Q = __m256i;

  static D broadcast(double x) { return _mm256_set1_pd(x); }
  static D loadu(const double* p) { return _mm256_loadu_pd(p); }
  static void storeu(double* p, D a) { _mm256_storeu_pd(p, a); }
  static Q load_q(const uint64_t* p) {
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(p));
  }
  static D add(D a, D b) { return _mm256_add_pd(a, b); }
  static D sub(D a, D b) { return _mm256_sub_pd(a, b); }
  static D mul(D a, D b) { return _mm256_mul_pd(a, b); }
  static D div(D a, D b) { return _mm256_div_pd(a, b); }
  static D neg(D a) { return _mm256_xor_pd(a, _mm256_set1_pd(-0.0)); }
  static D sqrt(D a) { return _mm256_sqrt_pd(a); }
  static D abs(D a) { return _mm256_andnot_pd(_mm256_set1_pd(-0.0), a); }
  static D min(D a, D b) { return _mm256_min_pd(a, b); }
  static D max(D a, D b) { return _mm256_max_pd(a, b); }
  static D round_nearest(D a) {
    return _mm256_round_pd(a, _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  }
  static D floor(D a) { return _mm256_floor_pd(a); }

  static Q to_bits(D a) { return _mm256_castpd_si256(a); }
  static D from_bits(Q q) { return _mm256_castsi256_pd(q); }
  static Q shr(Q a, int k) { return _mm256_srli_epi64(a, k); }
  static Q shl(Q a, int k) { return _mm256_slli_epi64(a, k); }
  static Q and_(Q a, Q b) { return _mm256_and_si256(a, b); }
  static Q or_(Q a, Q b) { return _mm256_or_si256(a, b); }
  static Q bcast_q(uint64_t x) { return _mm256_set1_epi64x(static_cast<long long>(x)); }

  static Q cmp_lt(D a, D b) { return _mm256_castpd_si256(_mm256_cmp_pd(a, b, _CMP_LT_OQ)); }
  static Q cmp_le(D a, D b) { return _mm256_castpd_si256(_mm256_cmp_pd(a, b, _CMP_LE_OQ)); }
  static Q cmp_ge(D a, D b) { return _mm256_castpd_si256(_mm256_cmp_pd(a, b, _CMP_GE_OQ)); }
  static Q cmp_eq(D a, D b) { return _mm256_castpd_si256(_mm256_cmp_pd(a, b, _CMP_EQ_OQ)); }
  static D select(Q mask, D a, D b) {
    return _mm256_blendv_pd(b, a, _mm256_castsi256_pd(mask));
  }
  static int movemask(Q m) { return _mm256_movemask_pd(_mm256_castsi256_pd(m)); }

  static void set_lane(D& d, int i, double x) {
    alignas(32) double tmp[W];
    _mm256_store_pd(tmp, d);
    tmp[i] = x;
    d = _mm256_load_pd(tmp);
  }
  static double get_lane(D d, int i) {
    alignas(32) double tmp[W];
    _mm256_store_pd(tmp, d);
    return tmp[i];
  }

  // libm per lane; identical calls to the scalar sets, so identical results
  static D lane_call(D a, double (*fn)(double)) {
    alignas(32) double tmp[W];
    _mm256_store_pd(tmp, a);
    for (int i = 0; i < W; ++i) tmp[i] = fn(tmp[i]);
    return _mm256_load_pd(tmp);
  }
  static D lsin(D a) { return lane_call(a, [](double x) { return std::sin(x); }); }
  static D lcos(D a) { return lane_call(a, [](double x) { return std::cos(x); }); }
  static D lexp(D a) { return lane_call(a, [](double x) { return std::exp(x); }); }
  static D llog(D a) { return lane_call(a, [](double x) { return std::log(x); }); }
  static D ltanh(D a) { return lane_call(a, [](double x) { return std::tanh(x); }); }
  static D lpow(D a, D b) {
    alignas(32) double ta[W], tb[W];
    _mm256_store_pd(ta, a);
    _mm256_store_pd(tb, b);
    for (int i = 0; i < W; ++i) ta[i] = std::pow(ta[i], tb[i]);
    return _mm256_load_pd(ta);
  }
};

}  // namespace cascade::simd
