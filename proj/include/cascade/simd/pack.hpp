#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

// Lane packs and the per-ISA op sets. Every numeric kernel is written once,
// templated over an op set, and instantiated per ISA in its own translation
// unit. Lanes never interact, each op maps to a single correctly-rounded IEEE
// instruction (or a per-lane libm call), and FP contraction is disabled
// project-wide, so all instantiations produce bit-identical lanes.

namespace cascade::simd {

inline constexpr int kLanes = 4;

struct alignas(32) DPack {
  double v[kLanes];
};

struct alignas(32) QPack {
  uint64_t v[kLanes];
};

enum class Isa { kScalar = 0, kAvx2 = 1 };

const char* isa_name(Isa isa);
bool isa_available(Isa isa);
Isa detect_best_isa();

// Width-1 op set: plain doubles. Used for single-path integration and
// anywhere batching does not apply; arithmetically identical per lane to the
// batched sets.
struct Scalar1Ops {
  static constexpr int W = 1;
  using D = double;
  using Q = uint64_t;

  static D broadcast(double x) { return x; }
  static D loadu(const double* p) { return *p; }
  static void storeu(double* p, D a) { *p = a; }
  static Q load_q(const uint64_t* p) { return *p; }
  static D add(D a, D b) { return a + b; }
  static D sub(D a, D b) { return a - b; }
  static D mul(D a, D b) { return a * b; }
  static D div(D a, D b) { return a / b; }
  static D neg(D a) { return -a; }
  static D sqrt(D a) { return std::sqrt(a); }
  static D abs(D a) { return std::fabs(a); }
  static D min(D a, D b) { return a < b ? a : b; }  // vminpd semantics
  static D max(D a, D b) { return a > b ? a : b; }  // vmaxpd semantics
  static D round_nearest(D a) { return std::nearbyint(a); }
  static D floor(D a) { return std::floor(a); }

  static Q to_bits(D a) { Q q; std::memcpy(&q, &a, 8); return q; }
  static D from_bits(Q q) { D d; std::memcpy(&d, &q, 8); return d; }
  static Q shr(Q a, int k) { return a >> k; }
  static Q shl(Q a, int k) { return a << k; }
  static Q and_(Q a, Q b) { return a & b; }
  static Q or_(Q a, Q b) { return a | b; }
  static Q bcast_q(uint64_t x) { return x; }

  static Q cmp_lt(D a, D b) { return a < b ? ~0ull : 0ull; }
  static Q cmp_le(D a, D b) { return a <= b ? ~0ull : 0ull; }
  static Q cmp_ge(D a, D b) { return a >= b ? ~0ull : 0ull; }
  static Q cmp_eq(D a, D b) { return a == b ? ~0ull : 0ull; }
  static D select(Q mask, D a, D b) { return mask ? a : b; }  // mask ? a : b, lanewise
  static int movemask(Q m) { return m ? 1 : 0; }

  static void set_lane(D& d, int, double x) { d = x; }
  static double get_lane(D d, int) { return d; }

  static D lsin(D a) { return std::sin(a); }
  static D lcos(D a) { return std::cos(a); }
  static D lexp(D a) { return std::exp(a); }
  static D llog(D a) { return std::log(a); }
  static D ltanh(D a) { return std::tanh(a); }
  static D lpow(D a, D b) { return std::pow(a, b); }
};

// Width-4 reference op set: plain loops over the pack. This is the scalar
// reference the AVX2 variants are equivalence-tested against.
struct Scalar4Ops {
  static constexpr int W = kLanes;
  using D = DPack;
  using Q = QPack;

  static D broadcast(double x) { D r; for (int i = 0; i < W; ++i) r.v[i] = x; return r; }
  static D loadu(const double* p) { D r; std::memcpy(r.v, p, sizeof r.v); return r; }
  static void storeu(double* p, D a) { std::memcpy(p, a.v, sizeof a.v); }
  static Q load_q(const uint64_t* p) { Q r; std::memcpy(r.v, p, sizeof r.v); return r; }
#define CASCADE_LANEWISE(name, expr)                              \
  static D name(D a, D b) {                                       \
    D r;                                                          \
    for (int i = 0; i < W; ++i) r.v[i] = (expr);                  \
    return r;                                                     \
  }
  CASCADE_LANEWISE(add, a.v[i] + b.v[i])
  CASCADE_LANEWISE(sub, a.v[i] - b.v[i])
  CASCADE_LANEWISE(mul, a.v[i] * b.v[i])
  CASCADE_LANEWISE(div, a.v[i] / b.v[i])
  CASCADE_LANEWISE(min, a.v[i] < b.v[i] ? a.v[i] : b.v[i])
  CASCADE_LANEWISE(max, a.v[i] > b.v[i] ? a.v[i] : b.v[i])
#undef CASCADE_LANEWISE
  static D neg(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = -a.v[i]; return r; }
  static D sqrt(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::sqrt(a.v[i]); return r; }
  static D abs(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::fabs(a.v[i]); return r; }
  static D round_nearest(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::nearbyint(a.v[i]); return r; }
  static D floor(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::floor(a.v[i]); return r; }

  static Q to_bits(D a) { Q q; std::memcpy(q.v, a.v, sizeof q.v); return q; }
  static D from_bits(Q q) { D d; std::memcpy(d.v, q.v, sizeof d.v); return d; }
  static Q shr(Q a, int k) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] >> k; return r; }
  static Q shl(Q a, int k) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] << k; return r; }
  static Q and_(Q a, Q b) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] & b.v[i]; return r; }
  static Q or_(Q a, Q b) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] | b.v[i]; return r; }
  static Q bcast_q(uint64_t x) { Q r; for (int i = 0; i < W; ++i) r.v[i] = x; return r; }

  static Q cmp_lt(D a, D b) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] < b.v[i] ? ~0ull : 0ull; return r; }
  static Q cmp_le(D a, D b) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] <= b.v[i] ? ~0ull : 0ull; return r; }
  static Q cmp_ge(D a, D b) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] >= b.v[i] ? ~0ull : 0ull; return r; }
  static Q cmp_eq(D a, D b) { Q r; for (int i = 0; i < W; ++i) r.v[i] = a.v[i] == b.v[i] ? ~0ull : 0ull; return r; }
  static D select(Q mask, D a, D b) {
    D r;
    for (int i = 0; i < W; ++i) r.v[i] = mask.v[i] ? a.v[i] : b.v[i];
    return r;
  }
  static int movemask(Q m) {
    int r = 0;
    for (int i = 0; i < W; ++i) r |= (m.v[i] >> 63) ? (1 << i) : 0;
    return r;
  }

  static void set_lane(D& d, int i, double x) { d.v[i] = x; }
  static double get_lane(D d, int i) { return d.v[i]; }

  static D lsin(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::sin(a.v[i]); return r; }
  static D lcos(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::cos(a.v[i]); return r; }
  static D lexp(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::exp(a.v[i]); return r; }
  static D llog(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::log(a.v[i]); return r; }
  static D ltanh(D a) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::tanh(a.v[i]); return r; }
  static D lpow(D a, D b) { D r; for (int i = 0; i < W; ++i) r.v[i] = std::pow(a.v[i], b.v[i]); return r; }
};

}  // namespace cascade::simd
