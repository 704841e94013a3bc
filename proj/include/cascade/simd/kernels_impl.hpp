#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "cascade/rng.hpp"
#include "cascade/simd/kernels.hpp"
#include "cascade/simd/vmath.hpp"

// Single-source kernel templates. Instantiated with Scalar1Ops / Scalar4Ops in
// kernels_scalar.cpp and Avx2Ops in kernels_avx2.cpp. Only lanewise IEEE ops
// and per-lane libm calls are used, so instantiations agree bit for bit.

namespace cascade::simd {

// Customization point for the counter generator; the AVX2 TU provides a
// vectorized specialization.
template <class Ops>
struct PhiloxBatch {
  static void gen(uint64_t seed, const uint64_t* streams, uint32_t channel, uint64_t block,
                  uint64_t* a_out, uint64_t* b_out) {
    for (int l = 0; l < Ops::W; ++l)
      rng::block_u64(seed, streams[l], channel, block, a_out[l], b_out[l]);
  }
};

namespace detail {

struct DomainView {
  int kind;  // 0 box, 1 ball
  int dim;
  double lo[16], hi[16], center[16];
  double radius;

  static DomainView from(const Domain& d) {
    DomainView v{};
    v.kind = d.kind() == Domain::Kind::kBox ? 0 : 1;
    v.dim = d.dim();
    for (int i = 0; i < v.dim; ++i) {
      if (v.kind == 0) {
        v.lo[i] = d.lo()[i];
        v.hi[i] = d.hi()[i];
      } else {
        v.center[i] = d.center()[i];
      }
    }
    v.radius = d.kind() == Domain::Kind::kBall ? d.radius() : 0.0;
    return v;
  }
};

}  // namespace detail

template <class Ops>
struct Engine {
  using D = typename Ops::D;
  using Q = typename Ops::Q;
  static constexpr int W = Ops::W;

  // ---- expression program interpretation --------------------------------

  static void eval_program(const expr::Instr* code, size_t n, const D* slots, D* out,
                           Q* finite) {
    const D dbl_max = Ops::broadcast(1.7976931348623157e308);
    D stack[expr::kMaxProgramStack];
    int sp = 0;
    Q fin = *finite;
    auto check = [&](D v) {
      fin = Ops::and_(fin, Ops::cmp_le(Ops::abs(v), dbl_max));
      return v;
    };
    for (size_t ip = 0; ip < n; ++ip) {
      const expr::Instr& ins = code[ip];
      using expr::Op;
      switch (ins.op) {
        case Op::kPushLit: stack[sp++] = Ops::broadcast(ins.literal); break;
        case Op::kPushSlot: stack[sp++] = slots[ins.arg]; break;
        case Op::kNeg: stack[sp - 1] = Ops::neg(stack[sp - 1]); break;
        case Op::kAdd: --sp; stack[sp - 1] = check(Ops::add(stack[sp - 1], stack[sp])); break;
        case Op::kSub: --sp; stack[sp - 1] = check(Ops::sub(stack[sp - 1], stack[sp])); break;
        case Op::kMul: --sp; stack[sp - 1] = check(Ops::mul(stack[sp - 1], stack[sp])); break;
        case Op::kDiv: --sp; stack[sp - 1] = check(Ops::div(stack[sp - 1], stack[sp])); break;
        case Op::kPow: --sp; stack[sp - 1] = check(Ops::lpow(stack[sp - 1], stack[sp])); break;
        case Op::kPowInt: {
          D base = stack[sp - 1];
          int e = ins.arg, ae = e < 0 ? -e : e;
          D acc = Ops::broadcast(1.0), sq = base;
          while (ae) {
            if (ae & 1) acc = Ops::mul(acc, sq);
            ae >>= 1;
            if (ae) sq = Ops::mul(sq, sq);
          }
          if (e < 0) acc = Ops::div(Ops::broadcast(1.0), acc);
          stack[sp - 1] = check(acc);
          break;
        }
        case Op::kSin: stack[sp - 1] = Ops::lsin(stack[sp - 1]); break;
        case Op::kCos: stack[sp - 1] = Ops::lcos(stack[sp - 1]); break;
        case Op::kExp: stack[sp - 1] = check(Ops::lexp(stack[sp - 1])); break;
        case Op::kLog: stack[sp - 1] = check(Ops::llog(stack[sp - 1])); break;
        case Op::kTanh: stack[sp - 1] = Ops::ltanh(stack[sp - 1]); break;
        case Op::kSqrt: stack[sp - 1] = check(Ops::sqrt(stack[sp - 1])); break;
        case Op::kAbs: stack[sp - 1] = Ops::abs(stack[sp - 1]); break;
        case Op::kMin: --sp; stack[sp - 1] = Ops::min(stack[sp - 1], stack[sp]); break;
        case Op::kMax: --sp; stack[sp - 1] = Ops::max(stack[sp - 1], stack[sp]); break;
      }
    }
    *out = stack[0];
    *finite = fin;
  }

  static D eval(const expr::Program& prog, const D* slots, Q* finite) {
    D out;
    eval_program(prog.code().data(), prog.code().size(), slots, &out, finite);
    return out;
  }

  // ---- counter-based normals ---------------------------------------------

  static void normals(uint64_t seed, const uint64_t* streams, uint32_t channel, uint64_t block,
                      D* z0, D* z1) {
    uint64_t a[W], b[W];
    PhiloxBatch<Ops>::gen(seed, streams, channel, block, a, b);
    for (int l = 0; l < W; ++l) {
      a[l] >>= 12;
      b[l] >>= 12;
    }
    Q qa = Ops::load_q(a), qb = Ops::load_q(b);
    const D scale = Ops::broadcast(0x1p-52);
    const D half_ulp = Ops::broadcast(0x1p-53);
    D u1 = Ops::add(Ops::mul(vmath::u64_small_to_double<Ops>(qa), scale), half_ulp);
    D u2 = Ops::add(Ops::mul(vmath::u64_small_to_double<Ops>(qb), scale), half_ulp);
    D r = Ops::sqrt(Ops::mul(Ops::broadcast(-2.0), vmath::log_unit<Ops>(u1)));
    D sn, cs;
    vmath::sincos_turns<Ops>(u2, sn, cs);
    *z0 = Ops::mul(r, cs);
    *z1 = Ops::mul(r, sn);
  }

  // ---- signed distance ----------------------------------------------------

  static D signed_distance(const detail::DomainView& dom, const D* x) {
    if (dom.kind == 1) {
      D s = Ops::broadcast(0.0);
      for (int i = 0; i < dom.dim; ++i) {
        D di = Ops::sub(x[i], Ops::broadcast(dom.center[i]));
        s = Ops::add(s, Ops::mul(di, di));
      }
      return Ops::sub(Ops::sqrt(s), Ops::broadcast(dom.radius));
    }
    D sd = Ops::broadcast(-1.7976931348623157e308);
    for (int i = 0; i < dom.dim; ++i) {
      D d_lo = Ops::sub(Ops::broadcast(dom.lo[i]), x[i]);
      D d_hi = Ops::sub(x[i], Ops::broadcast(dom.hi[i]));
      sd = Ops::max(sd, Ops::max(d_lo, d_hi));
    }
    return sd;
  }

  // ---- batched tridiagonal solve ------------------------------------------

  static int thomas(const double* dl, const double* dg, const double* du, double* rhs,
                    double* scratch, int n) {
    const D tiny = Ops::broadcast(1e-300);
    int ok = ~0;
    D cp = Ops::div(Ops::loadu(du), Ops::loadu(dg));
    D dp = Ops::div(Ops::loadu(rhs), Ops::loadu(dg));
    ok &= Ops::movemask(Ops::cmp_ge(Ops::abs(Ops::loadu(dg)), tiny));
    Ops::storeu(scratch, cp);
    Ops::storeu(rhs, dp);
    for (int i = 1; i < n; ++i) {
      const double* dli = dl + i * W;
      D m = Ops::sub(Ops::loadu(dg + i * W), Ops::mul(Ops::loadu(dli), cp));
      ok &= Ops::movemask(Ops::cmp_ge(Ops::abs(m), tiny));
      cp = Ops::div(Ops::loadu(du + i * W), m);
      dp = Ops::div(Ops::sub(Ops::loadu(rhs + i * W), Ops::mul(Ops::loadu(dli), dp)), m);
      Ops::storeu(scratch + i * W, cp);
      Ops::storeu(rhs + i * W, dp);
    }
    D x = Ops::loadu(rhs + (n - 1) * W);
    for (int i = n - 2; i >= 0; --i) {
      x = Ops::sub(Ops::loadu(rhs + i * W), Ops::mul(Ops::loadu(scratch + i * W), x));
      Ops::storeu(rhs + i * W, x);
    }
    const int full = (1 << W) - 1;
    return ok == full ? 0 : 1;
  }

  // ---- Euler-Maruyama path ensembles --------------------------------------

  struct LaneExit {
    PathClass cls = PathClass::kCensored;
    double theta = 0, transversality = 0;
  };

  static void run_paths(const PathJob& job, uint64_t first_stream, int count,
                        PathOutcome* outcomes, double* snapshots, StepRecorder* recorder) {
    const CompiledChain& cc = *job.chain;
    const int ell = job.ell, d = cc.d, m = cc.m;
    const int nstates = ell * d;
    const detail::DomainView dom = detail::DomainView::from(*job.domain);

    const double horizon = job.T - job.s;
    long k_full = horizon <= 0 ? 0 : static_cast<long>(std::floor(horizon / job.dt + 1e-9));
    double rem = horizon - static_cast<double>(k_full) * job.dt;
    if (rem < 1e-12 * job.dt) rem = 0;
    const long k_total = k_full + (rem > 0 ? 1 : 0);

    const double sqrt_eps = std::sqrt(job.eps);
    const long w_blocks = (m + 1) / 2;
    const long j_blocks = (d + 1) / 2;

    std::vector<D> slots(cc.layout.total(), Ops::broadcast(0.0));
    std::vector<D> prev(nstates);
    std::vector<D> fhat(nstates);
    std::vector<D> sig(d * m, Ops::broadcast(0.0));
    std::vector<D> zbuf(2 * std::max<long>(w_blocks, j_blocks));
    std::vector<double> rec_state(nstates), rec_dw(m + (ell > 1 ? (ell - 1) * d : 0));
    std::vector<double> scalar_slots(cc.layout.total());

    const bool sig_const = cc.sigma_constant;
    if (sig_const)
      for (int i = 0; i < d * m; ++i) sig[i] = Ops::broadcast(cc.sigma_const[i]);

    for (int base = 0; base < count; base += W) {
      const int lanes_used = std::min(W, count - base);
      uint64_t streams[W];
      for (int l = 0; l < W; ++l)
        streams[l] = first_stream + static_cast<uint64_t>(base + std::min(l, lanes_used - 1));

      // initial state, same for all paths
      for (int i = 0; i < nstates; ++i)
        slots[1 + i] = Ops::broadcast(job.init[i]);

      LaneExit lanes[W];
      double snap[W][16 * 32];
      int active = (1 << lanes_used) - 1;

      D sd_prev = signed_distance(dom, &slots[1 + (ell - 1) * d]);

      if (recorder && W == 1) {
        for (int i = 0; i < nstates; ++i) rec_state[i] = Ops::get_lane(slots[1 + i], 0);
        recorder->on_start(job.s, rec_state);
      }

      for (long k = 0; k < k_total && (active != 0 || (recorder && W == 1)); ++k) {
        const double dt_k = (k < k_full) ? job.dt : rem;
        const double t_k = job.s + static_cast<double>(k) * job.dt;
        const double t_next = (k + 1 < k_total) ? job.s + static_cast<double>(k + 1) * job.dt
                                                : job.T;
        const double sqrt_dt_k = std::sqrt(dt_k);
        slots[0] = Ops::broadcast(t_k);

        std::copy(slots.begin() + 1, slots.begin() + 1 + nstates, prev.begin());

        Q fin = Ops::bcast_q(~0ull);
        // closed-loop drifts for all subsystems (pre-update states)
        for (int i = 1; i <= ell; ++i) {
          const auto& kp = cc.control[i - 1];
          for (size_t c = 0; c < kp.size(); ++c)
            slots[cc.layout.u_slot(static_cast<int>(c))] = eval(kp[c], slots.data(), &fin);
          const auto& dp = cc.drift[i - 1];
          for (int c = 0; c < d; ++c)
            fhat[(i - 1) * d + c] = dp[c].is_constant()
                                        ? Ops::broadcast(dp[c].constant_value())
                                        : eval(dp[c], slots.data(), &fin);
        }
        if (!sig_const && job.eps > 0) {
          if (cc.sigma_diagonal) {
            D v = eval(cc.sigma[0], slots.data(), &fin);
            for (int i = 0; i < d; ++i)
              for (int j = 0; j < m; ++j) sig[i * m + j] = (i == j) ? v : Ops::broadcast(0.0);
          } else {
            for (int i = 0; i < d * m; ++i) sig[i] = eval(cc.sigma[i], slots.data(), &fin);
          }
        }

        if (recorder && W == 1) std::fill(rec_dw.begin(), rec_dw.end(), 0.0);

        // subsystem 1 update
        if (job.eps > 0) {
          for (long b = 0; b < w_blocks; ++b)
            normals(job.seed, streams, rng::kChannelSubsystemBase,
                    static_cast<uint64_t>(k) * w_blocks + b, &zbuf[2 * b], &zbuf[2 * b + 1]);
          const D se_dt = Ops::broadcast(sqrt_eps * sqrt_dt_k);
          for (int c = 0; c < d; ++c) {
            D noise = Ops::broadcast(0.0);
            for (int j = 0; j < m; ++j)
              noise = Ops::add(noise, Ops::mul(sig[c * m + j], zbuf[j]));
            D x = slots[1 + c];
            x = Ops::add(x, Ops::add(Ops::mul(fhat[c], Ops::broadcast(dt_k)),
                                     Ops::mul(noise, se_dt)));
            slots[1 + c] = x;
          }
          if (recorder && W == 1)
            for (int j = 0; j < m; ++j) rec_dw[j] = Ops::get_lane(zbuf[j], 0) * sqrt_dt_k;
        } else {
          for (int c = 0; c < d; ++c)
            slots[1 + c] = Ops::add(slots[1 + c], Ops::mul(fhat[c], Ops::broadcast(dt_k)));
        }

        // subsystems 2..ell
        for (int i = 2; i <= ell; ++i) {
          const double delta = job.deltas ? job.deltas[i] : 0.0;
          if (delta > 0) {
            for (long b = 0; b < j_blocks; ++b)
              normals(job.seed, streams, rng::kChannelSubsystemBase + (i - 1),
                      static_cast<uint64_t>(k) * j_blocks + b, &zbuf[2 * b], &zbuf[2 * b + 1]);
            const D sdel = Ops::broadcast(std::sqrt(delta) * sqrt_dt_k);
            for (int c = 0; c < d; ++c) {
              D x = slots[1 + (i - 1) * d + c];
              x = Ops::add(x, Ops::add(Ops::mul(fhat[(i - 1) * d + c], Ops::broadcast(dt_k)),
                                       Ops::mul(zbuf[c], sdel)));
              slots[1 + (i - 1) * d + c] = x;
              if (recorder && W == 1)
                rec_dw[m + (i - 2) * d + c] = Ops::get_lane(zbuf[c], 0) * sqrt_dt_k;
            }
          } else {
            for (int c = 0; c < d; ++c)
              slots[1 + (i - 1) * d + c] =
                  Ops::add(slots[1 + (i - 1) * d + c],
                           Ops::mul(fhat[(i - 1) * d + c], Ops::broadcast(dt_k)));
          }
        }

        // finiteness of the whole state
        for (int i = 0; i < nstates; ++i)
          fin = Ops::and_(fin, Ops::cmp_le(Ops::abs(slots[1 + i]),
                                           Ops::broadcast(1.7976931348623157e308)));
        // masks are all-ones or all-zero per lane, so the sign bit suffices
        const int fin_mask = Ops::movemask(fin);

        D sd_new = signed_distance(dom, &slots[1 + (ell - 1) * d]);
        const int crossed = Ops::movemask(Ops::cmp_ge(sd_new, Ops::broadcast(0.0)));

        for (int l = 0; l < lanes_used; ++l) {
          if (!(active & (1 << l))) continue;
          if (!(fin_mask & (1 << l))) {
            lanes[l].cls = PathClass::kBlown;
            lanes[l].theta = t_k;
            std::fill(snap[l], snap[l] + (ell > 1 ? (ell - 1) * d : 0), 0.0);
            active &= ~(1 << l);
            continue;
          }
          if (crossed & (1 << l)) {
            finalize_crossing(job, cc, dom, l, t_k, dt_k, prev.data(), &slots[1],
                              Ops::get_lane(sd_prev, l), Ops::get_lane(sd_new, l), lanes[l],
                              snap[l], scalar_slots);
            active &= ~(1 << l);
            continue;
          }
          if (job.bridge && dom.kind == 0 && job.eps > 0) {
            if (try_bridge(job, cc, dom, l, k, t_k, dt_k, streams[l], prev.data(), &slots[1],
                           sig.data(), lanes[l], snap[l], scalar_slots)) {
              active &= ~(1 << l);
              continue;
            }
          }
        }
        sd_prev = sd_new;

        if (recorder && W == 1) {
          for (int i = 0; i < nstates; ++i) rec_state[i] = Ops::get_lane(slots[1 + i], 0);
          recorder->on_step(t_next, rec_state, rec_dw);
        }
      }

      // censored lanes
      for (int l = 0; l < lanes_used; ++l) {
        if (active & (1 << l)) {
          lanes[l].cls = PathClass::kCensored;
          lanes[l].theta = job.T;
          lanes[l].transversality = 0;
          for (int i = 0; i < (ell - 1) * d; ++i)
            snap[l][i] = Ops::get_lane(slots[1 + d + i], l);
        }
        PathOutcome& out = outcomes[base + l];
        out.cls = lanes[l].cls;
        out.theta = lanes[l].theta;
        out.transversality = lanes[l].transversality;
        if (snapshots && job.snapshot_dims > 0)
          std::memcpy(snapshots + static_cast<size_t>(base + l) * job.snapshot_dims, snap[l],
                      sizeof(double) * job.snapshot_dims);
      }
    }
  }

  // Linear interpolation of the signed distance fixes theta; states are
  // interpolated to theta, the exit point projected onto the boundary, and
  // the hit classified by hat f_ell . n against the tolerance.
  static void finalize_crossing(const PathJob& job, const CompiledChain& cc,
                                const detail::DomainView& dom, int lane, double t_k, double dt_k,
                                const D* prev, const D* cur, double sd_p, double sd_n,
                                LaneExit& lane_out, double* snap,
                                std::vector<double>& scalar_slots) {
    const int ell = job.ell, d = cc.d;
    const double denom = sd_n - sd_p;
    double frac = denom > 0 ? (0.0 - sd_p) / denom : 1.0;
    if (frac < 0) frac = 0;
    if (frac > 1) frac = 1;
    const double theta = t_k + frac * dt_k;

    std::fill(scalar_slots.begin(), scalar_slots.end(), 0.0);
    scalar_slots[0] = theta;
    for (int i = 0; i < ell * d; ++i) {
      const double xp = Ops::get_lane(prev[i], lane);
      const double xn = Ops::get_lane(cur[i], lane);
      scalar_slots[1 + i] = xp + frac * (xn - xp);
    }
    classify_exit(job, cc, theta, lane_out, snap, scalar_slots);
  }

  // Two-sided Brownian-bridge crossing test per axis (diagonal-noise
  // approximation). Only used for diffusive exits (ell == 1, box domains).
  static bool try_bridge(const PathJob& job, const CompiledChain& cc,
                         const detail::DomainView& dom, int lane, long k, double t_k,
                         double dt_k, uint64_t stream, const D* prev, const D* cur,
                         const D* sig, LaneExit& lane_out, double* snap,
                         std::vector<double>& scalar_slots) {
    const int d = cc.d, m = cc.m;
    double p_face[2 * 16];
    double p_total = 0;
    for (int c = 0; c < d; ++c) {
      // diagonal diffusion coefficient for this axis
      double var = 0;
      for (int j = 0; j < m; ++j) {
        const double s = Ops::get_lane(sig[c * m + j], lane);
        var += s * s;
      }
      var *= job.eps;
      const double xp = Ops::get_lane(prev[c], lane);
      const double xn = Ops::get_lane(cur[c], lane);
      const double denom = var * dt_k;
      // lower face
      double p_lo = 0, p_hi = 0;
      if (denom > 0) {
        const double alo = (xp - dom.lo[c]) * (xn - dom.lo[c]);
        const double ahi = (dom.hi[c] - xp) * (dom.hi[c] - xn);
        if (alo > 0 && 2 * alo / denom < 41.0) p_lo = std::exp(-2 * alo / denom);
        if (ahi > 0 && 2 * ahi / denom < 41.0) p_hi = std::exp(-2 * ahi / denom);
      }
      p_face[2 * c] = p_lo;
      p_face[2 * c + 1] = p_hi;
      p_total = 1 - (1 - p_total) * (1 - p_lo) * (1 - p_hi);
    }
    if (p_total <= 0) return false;
    const double u = rng::uniform_open(job.seed, stream, rng::kChannelBridge,
                                       static_cast<uint64_t>(k));
    if (u >= p_total) return false;

    // most likely face
    int best = 0;
    for (int f = 1; f < 2 * d; ++f)
      if (p_face[f] > p_face[best]) best = f;
    const double theta = t_k + 0.5 * dt_k;
    std::fill(scalar_slots.begin(), scalar_slots.end(), 0.0);
    scalar_slots[0] = theta;
    for (int i = 0; i < job.ell * d; ++i) {
      const double xp = Ops::get_lane(prev[i], lane);
      const double xn = Ops::get_lane(cur[i], lane);
      scalar_slots[1 + i] = 0.5 * (xp + xn);
    }
    // pin the crossed axis to its face
    const int axis = best / 2;
    scalar_slots[1 + axis] = (best % 2 == 0) ? dom.lo[axis] : dom.hi[axis];
    classify_exit(job, cc, theta, lane_out, snap, scalar_slots);
    return true;
  }

  static void classify_exit(const PathJob& job, const CompiledChain& cc, double theta,
                            LaneExit& lane_out, double* snap,
                            std::vector<double>& scalar_slots) {
    const int ell = job.ell, d = cc.d;
    // project the exiting subsystem onto the boundary
    std::vector<double> xl(scalar_slots.begin() + 1 + (ell - 1) * d,
                           scalar_slots.begin() + 1 + ell * d);
    std::vector<double> proj(d), nrm(d);
    job.domain->project(xl, proj);
    job.domain->normal(proj, nrm);
    for (int c = 0; c < d; ++c) scalar_slots[1 + (ell - 1) * d + c] = proj[c];

    double trans = 0;
    std::vector<double> f(d);
    bool eval_ok = true;
    try {
      cc.eval_hat_drift(ell, scalar_slots, f);
    } catch (const expr::EvalError&) {
      eval_ok = false;
    }
    if (eval_ok)
      for (int c = 0; c < d; ++c) trans += f[c] * nrm[c];

    lane_out.theta = theta;
    lane_out.transversality = trans;
    lane_out.cls = trans > job.gamma_tol ? PathClass::kGammaPlus : PathClass::kGammaZero;
    for (int i = 0; i < (ell - 1) * d; ++i) snap[i] = scalar_slots[1 + d + i];
  }
};

}  // namespace cascade::simd
