#pragma once

#include <array>
#include <cstdint>

// Counter-based random numbers (Philox4x32-10). A draw is a pure function of
// (seed, stream, channel, block), so per-trajectory streams are reproducible
// and independent of scheduling order or worker count.
//
// Counter layout:  c0 = stream lo32, c1 = stream hi32,
//                  c2 = block lo32,  c3 = channel<<24 | block hi24.
// Key = (seed lo32, seed hi32).

namespace cascade::rng {

inline constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;

// Channels keep independent Wiener processes and auxiliary draws apart.
enum Channel : uint32_t {
  kChannelSubsystemBase = 1,  // subsystem j noise uses channel j
  kChannelBridge = 0xF0,      // exit-bridge uniforms (first-subsystem exits)
  kChannelAux = 0xFE,         // restarts, shuffles, misc
};

inline std::array<uint32_t, 4> philox_block(const uint32_t key_in[2], const uint32_t ctr_in[4]) {
  uint32_t c0 = ctr_in[0], c1 = ctr_in[1], c2 = ctr_in[2], c3 = ctr_in[3];
  uint32_t k0 = key_in[0], k1 = key_in[1];
  for (int round = 0;; ++round) {
    const uint64_t p0 = static_cast<uint64_t>(kPhiloxM0) * c0;
    const uint64_t p1 = static_cast<uint64_t>(kPhiloxM1) * c2;
    const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    const uint32_t n0 = hi1 ^ c1 ^ k0;
    const uint32_t n1 = lo1;
    const uint32_t n2 = hi0 ^ c3 ^ k1;
    const uint32_t n3 = lo0;
    c0 = n0; c1 = n1; c2 = n2; c3 = n3;
    if (round == 9) break;
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return {c0, c1, c2, c3};
}

inline void make_counter(uint64_t stream, uint32_t channel, uint64_t block, uint32_t ctr[4]) {
  ctr[0] = static_cast<uint32_t>(stream);
  ctr[1] = static_cast<uint32_t>(stream >> 32);
  ctr[2] = static_cast<uint32_t>(block);
  ctr[3] = (channel << 24) | (static_cast<uint32_t>(block >> 32) & 0x00FFFFFFu);
}

inline void make_key(uint64_t seed, uint32_t key[2]) {
  key[0] = static_cast<uint32_t>(seed);
  key[1] = static_cast<uint32_t>(seed >> 32);
}

// Two 64-bit words from one block.
inline void block_u64(uint64_t seed, uint64_t stream, uint32_t channel, uint64_t block,
                      uint64_t& a, uint64_t& b) {
  uint32_t key[2], ctr[4];
  make_key(seed, key);
  make_counter(stream, channel, block, ctr);
  auto r = philox_block(key, ctr);
  a = (static_cast<uint64_t>(r[1]) << 32) | r[0];
  b = (static_cast<uint64_t>(r[3]) << 32) | r[2];
}

// Uniform in (0,1) with a 2^-53 lattice (odd numerators, so never 0 or 1).
inline double uniform_open(uint64_t seed, uint64_t stream, uint32_t channel, uint64_t block) {
  uint64_t a, b;
  block_u64(seed, stream, channel, block, a, b);
  (void)b;
  return static_cast<double>(a >> 12) * 0x1p-52 + 0x1p-53;
}

// Derives a child seed for independent substreams (sweep rows, pilots, ...).
inline uint64_t derive_seed(uint64_t seed, uint64_t salt) {
  uint64_t a, b;
  block_u64(seed, salt, kChannelAux, 0x5eedull, a, b);
  return a ^ (b << 1);
}

}  // namespace cascade::rng
