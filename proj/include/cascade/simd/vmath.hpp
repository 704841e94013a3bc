#pragma once

#include "cascade/simd/pack.hpp"

// Polynomial log / sincos used by the Gaussian sampler. Written once over the
// op set so every backend computes bit-identical values (plain IEEE ops only,
// no tables, no libm). Accuracy is ~1e-15 relative, verified against libm in
// the unit tests; plenty for Box-Muller.

namespace cascade::simd::vmath {

// Converts integer lanes < 2^52 to double exactly.
template <class O>
typename O::D u64_small_to_double(typename O::Q q) {
  const auto magic_bits = O::bcast_q(0x4330000000000000ull);  // 2^52
  return O::sub(O::from_bits(O::or_(q, magic_bits)), O::broadcast(0x1p52));
}

// Natural log for inputs in (0, 1]; arguments must be normal doubles.
template <class O>
typename O::D log_unit(typename O::D u) {
  using D = typename O::D;
  auto bits = O::to_bits(u);
  // exponent and mantissa split
  D e = O::sub(u64_small_to_double<O>(O::shr(bits, 52)), O::broadcast(1023.0));
  auto mant_bits = O::or_(O::and_(bits, O::bcast_q(0x000FFFFFFFFFFFFFull)),
                          O::bcast_q(0x3FF0000000000000ull));
  D m = O::from_bits(mant_bits);  // [1, 2)
  // reduce to [sqrt(1/2), sqrt(2))
  auto big = O::cmp_ge(m, O::broadcast(1.4142135623730951));
  m = O::select(big, O::mul(m, O::broadcast(0.5)), m);
  e = O::add(e, O::select(big, O::broadcast(1.0), O::broadcast(0.0)));
  // log(m) = 2 atanh(z), z = (m-1)/(m+1), |z| <= 0.1716
  D z = O::div(O::sub(m, O::broadcast(1.0)), O::add(m, O::broadcast(1.0)));
  D z2 = O::mul(z, z);
  D p = O::broadcast(2.0 / 21.0);
  const double coef[] = {2.0 / 19, 2.0 / 17, 2.0 / 15, 2.0 / 13, 2.0 / 11,
                         2.0 / 9,  2.0 / 7,  2.0 / 5,  2.0 / 3,  2.0};
  for (double c : coef) p = O::add(O::mul(p, z2), O::broadcast(c));
  const double ln2_hi = 6.93147180369123816490e-01;  // low 21 bits zero
  const double ln2_lo = 1.90821492927058770002e-10;
  D r = O::add(O::mul(e, O::broadcast(ln2_lo)), O::mul(z, p));
  return O::add(O::mul(e, O::broadcast(ln2_hi)), r);
}

// sin(2*pi*u) and cos(2*pi*u) for u in [0, 1).
template <class O>
void sincos_turns(typename O::D u, typename O::D& sin_out, typename O::D& cos_out) {
  using D = typename O::D;
  D q = O::round_nearest(O::mul(u, O::broadcast(4.0)));
  D r = O::sub(u, O::mul(q, O::broadcast(0.25)));  // exact, |r| <= 1/8
  D qm = O::sub(q, O::mul(O::broadcast(4.0), O::floor(O::mul(q, O::broadcast(0.25)))));
  D theta = O::mul(r, O::broadcast(6.283185307179586476925286766559));  // |theta| <= pi/4
  D t2 = O::mul(theta, theta);

  const double sc[] = {-1.0 / 1307674368000.0, 1.0 / 6227020800.0, -1.0 / 39916800.0,
                       1.0 / 362880.0,         -1.0 / 5040.0,      1.0 / 120.0,
                       -1.0 / 6.0};
  D sp = O::broadcast(sc[0]);
  for (int i = 1; i < 7; ++i) sp = O::add(O::mul(sp, t2), O::broadcast(sc[i]));
  D s = O::add(O::mul(O::mul(sp, t2), theta), theta);

  const double cc[] = {1.0 / 20922789888000.0, -1.0 / 87178291200.0, 1.0 / 479001600.0,
                       -1.0 / 3628800.0,       1.0 / 40320.0,        -1.0 / 720.0,
                       1.0 / 24.0,             -0.5};
  D cp = O::broadcast(cc[0]);
  for (int i = 1; i < 8; ++i) cp = O::add(O::mul(cp, t2), O::broadcast(cc[i]));
  D c = O::add(O::mul(cp, t2), O::broadcast(1.0));

  auto m1 = O::cmp_eq(qm, O::broadcast(1.0));
  auto m2 = O::cmp_eq(qm, O::broadcast(2.0));
  auto m3 = O::cmp_eq(qm, O::broadcast(3.0));
  sin_out = O::select(m1, c, O::select(m2, O::neg(s), O::select(m3, O::neg(c), s)));
  cos_out = O::select(m1, O::neg(s), O::select(m2, O::neg(c), O::select(m3, s, c)));
}

}  // namespace cascade::simd::vmath
