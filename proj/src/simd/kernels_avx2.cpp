// AVX2 instantiations; the only TU compiled with -mavx2.

#include "cascade/simd/pack_avx2.hpp"
#include "cascade/simd/kernels_impl.hpp"

namespace cascade::simd {

// Vectorized Philox4x32-10: four blocks at once, counters in SoA form.
template <>
struct PhiloxBatch<Avx2Ops> {
  static inline void mulhilo(__m128i x, uint32_t mconst, __m128i& hi, __m128i& lo) {
    const __m128i mm = _mm_set1_epi32(static_cast<int>(mconst));
    const __m128i even = _mm_mul_epu32(x, mm);
    const __m128i odd = _mm_mul_epu32(_mm_srli_epi64(x, 32), mm);
    lo = _mm_blend_epi16(even, _mm_slli_epi64(odd, 32), 0xCC);
    hi = _mm_blend_epi16(_mm_srli_epi64(even, 32), odd, 0xCC);
  }

  static void gen(uint64_t seed, const uint64_t* streams, uint32_t channel, uint64_t block,
                  uint64_t* a_out, uint64_t* b_out) {
    alignas(16) uint32_t c[4][4];
    for (int l = 0; l < 4; ++l) {
      uint32_t ctr[4];
      rng::make_counter(streams[l], channel, block, ctr);
      for (int w = 0; w < 4; ++w) c[w][l] = ctr[w];
    }
    __m128i c0 = _mm_load_si128(reinterpret_cast<const __m128i*>(c[0]));
    __m128i c1 = _mm_load_si128(reinterpret_cast<const __m128i*>(c[1]));
    __m128i c2 = _mm_load_si128(reinterpret_cast<const __m128i*>(c[2]));
    __m128i c3 = _mm_load_si128(reinterpret_cast<const __m128i*>(c[3]));

    uint32_t key[2];
    rng::make_key(seed, key);
    uint32_t k0 = key[0], k1 = key[1];
    for (int round = 0;; ++round) {
      __m128i hi0, lo0, hi1, lo1;
      mulhilo(c0, kPhiloxM0, hi0, lo0);
      mulhilo(c2, kPhiloxM1, hi1, lo1);
      const __m128i k0v = _mm_set1_epi32(static_cast<int>(k0));
      const __m128i k1v = _mm_set1_epi32(static_cast<int>(k1));
      c0 = _mm_xor_si128(_mm_xor_si128(hi1, c1), k0v);
      c1 = lo1;
      const __m128i n2 = _mm_xor_si128(_mm_xor_si128(hi0, c3), k1v);
      c3 = lo0;
      c2 = n2;
      if (round == 9) break;
      k0 += kPhiloxW0;
      k1 += kPhiloxW1;
    }
    alignas(16) uint32_t o[4][4];
    _mm_store_si128(reinterpret_cast<__m128i*>(o[0]), c0);
    _mm_store_si128(reinterpret_cast<__m128i*>(o[1]), c1);
    _mm_store_si128(reinterpret_cast<__m128i*>(o[2]), c2);
    _mm_store_si128(reinterpret_cast<__m128i*>(o[3]), c3);
    for (int l = 0; l < 4; ++l) {
      a_out[l] = (static_cast<uint64_t>(o[1][l]) << 32) | o[0][l];
      b_out[l] = (static_cast<uint64_t>(o[3][l]) << 32) | o[2][l];
    }
  }
};

namespace {

using EA = Engine<Avx2Ops>;

void eval_program_avx2(const expr::Instr* code, size_t n, const DPack* slots, DPack* out,
                       QPack* finite) {
  // repack into native registers
  std::vector<__m256d> s(0);
  // slots count is bounded by the layout; find the highest slot referenced
  int max_slot = -1;
  for (size_t i = 0; i < n; ++i)
    if (code[i].op == expr::Op::kPushSlot) max_slot = std::max(max_slot, code[i].arg);
  s.resize(max_slot + 1);
  for (int i = 0; i <= max_slot; ++i) s[i] = _mm256_loadu_pd(slots[i].v);
  __m256d o;
  __m256i fin = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(finite->v));
  EA::eval_program(code, n, s.data(), &o, &fin);
  _mm256_storeu_pd(out->v, o);
  _mm256_storeu_si256(reinterpret_cast<__m256i*>(finite->v), fin);
}

void run_paths_avx2(const PathJob& job, uint64_t first_stream, int count, PathOutcome* outcomes,
                    double* snapshots) {
  EA::run_paths(job, first_stream, count, outcomes, snapshots, nullptr);
}

int thomas_avx2(const double* dl, const double* dg, const double* du, double* rhs,
                double* scratch, int n) {
  return EA::thomas(dl, dg, du, rhs, scratch, n);
}

void normals_avx2(uint64_t seed, const uint64_t* streams, uint32_t channel, uint64_t block,
                  DPack* z0, DPack* z1) {
  __m256d a, b;
  EA::normals(seed, streams, channel, block, &a, &b);
  _mm256_storeu_pd(z0->v, a);
  _mm256_storeu_pd(z1->v, b);
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Isa::kAvx2, eval_program_avx2, run_paths_avx2, thomas_avx2,
                                 normals_avx2};
  return table;
}

}  // namespace cascade::simd
