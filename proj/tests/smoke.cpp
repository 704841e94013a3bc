#include <cstdio>
#include "cascade/expr.hpp"
#include "cascade/model.hpp"
#include "cascade/simd/kernels.hpp"
#include "cascade/rng.hpp"

int main() {
  using namespace cascade;
  auto e = expr::Expression::parse("-x1[0] + sin(t)");
  std::printf("print: %s depth %d\n", e.print().c_str(), expr::depth(e.root()));
  expr::SlotLayout layout{2, 1, 0};
  std::vector<double> slots = {0.0, 2.0, 0.0};
  std::printf("tree eval: %.17g\n", e.eval_tree(layout, slots));
  auto prog = e.compile(layout);
  std::printf("prog eval: %.17g\n", prog.eval(slots));

  // philox known-answer checks
  {
    uint32_t key[2] = {0, 0}, ctr[4] = {0, 0, 0, 0};
    auto r = rng::philox_block(key, ctr);
    std::printf("philox zero: %08x %08x %08x %08x\n", r[0], r[1], r[2], r[3]);
    uint32_t keyf[2] = {0xffffffffu, 0xffffffffu},
             ctrf[4] = {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu};
    auto rf = rng::philox_block(keyf, ctrf);
    std::printf("philox ones: %08x %08x %08x %08x\n", rf[0], rf[1], rf[2], rf[3]);
    uint32_t keyp[2] = {0xa4093822u, 0x299f31d0u},
             ctrp[4] = {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u};
    auto rp = rng::philox_block(keyp, ctrp);
    std::printf("philox pi:   %08x %08x %08x %08x\n", rp[0], rp[1], rp[2], rp[3]);
  }

  std::printf("active isa: %s\n", simd::isa_name(simd::active_isa()));
  const char* lin2 = R"({
    "n": 2, "d": 1, "m": 1, "lambda_floor": 1.0,
    "drifts": ["0", "x1[0]"],
    "controls": [null, null],
    "sigma": "1"
  })";
  auto model = ChainModel::parse(lin2);
  std::printf("model n=%d d=%d m=%d\n", model.n(), model.d(), model.m());
  return 0;
}
