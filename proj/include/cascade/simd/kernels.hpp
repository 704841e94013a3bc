#pragma once

#include <cstdint>

#include "cascade/domain.hpp"
#include "cascade/expr.hpp"
#include "cascade/model.hpp"
#include "cascade/simd/pack.hpp"

// Runtime-dispatched kernels. Each entry has a scalar reference build and an
// AVX2 build instantiated from the same template; outputs are bit-identical
// lane for lane (equivalence-tested in tests/test_simd.cpp).

namespace cascade::simd {

enum class PathClass : uint8_t { kCensored = 0, kGammaPlus = 1, kGammaZero = 2, kBlown = 3 };

struct PathOutcome {
  PathClass cls = PathClass::kCensored;
  double theta = 0;           // exit time, or T when censored
  double transversality = 0;  // hat f_ell . n at the exit point (0 when censored)
};

// One Euler-Maruyama ensemble job. Noise enters subsystem 1 scaled by
// sqrt(eps); subsystems j >= 2 get independent sqrt(delta_j) regularization
// noise. Exit is detected on subsystem `ell` against `domain`.
struct PathJob {
  const CompiledChain* chain = nullptr;
  int ell = 2;
  double eps = 0;
  const double* deltas = nullptr;  // indexed by subsystem, entries 2..ell read
  const Domain* domain = nullptr;
  const double* init = nullptr;  // ell*d states
  double s = 0, T = 1, dt = 1e-3;
  uint64_t seed = 0;
  // Intra-step boundary-crossing test for diffusive exits (ell == 1): the
  // exiting coordinate is itself a diffusion there, so grid crossing alone
  // underestimates exits by O(sqrt(dt)).
  bool bridge = false;
  double gamma_tol = 1e-6;
  int snapshot_dims = 0;  // (ell-1)*d values of x^2..x^ell at theta, or 0
};

// Records a single path (used for Trajectory capture; always scalar W = 1).
struct StepRecorder {
  virtual ~StepRecorder() = default;
  // state spans ell*d entries; dw spans m + (ell-1)*d entries (subsystem-1
  // increments first, then per-subsystem regularization increments, zeros
  // when that channel is off).
  virtual void on_start(double t0, std::span<const double> state) = 0;
  virtual void on_step(double t_next, std::span<const double> state,
                       std::span<const double> dw) = 0;
};

struct KernelTable {
  Isa isa = Isa::kScalar;

  // Evaluates a compiled expression program over one 4-lane slot batch.
  // `finite` accumulates per-lane all-finite masks (all bits set = ok).
  void (*eval_program)(const expr::Instr* code, size_t n_instr, const DPack* slots,
                       DPack* out, QPack* finite) = nullptr;

  // Runs paths first_stream .. first_stream+count-1 of the job, writing one
  // outcome per path (and snapshots when job.snapshot_dims > 0, stride
  // snapshot_dims). Deterministic per path regardless of batching.
  void (*run_paths)(const PathJob& job, uint64_t first_stream, int count,
                    PathOutcome* outcomes, double* snapshots) = nullptr;

  // Solves kLanes lane-interleaved tridiagonal systems in place (index
  // [i*kLanes + lane]); rhs receives the solution. Returns 0 on success,
  // nonzero if a pivot fell below 1e-300.
  int (*thomas_batch)(const double* lower, const double* diag, const double* upper,
                      double* rhs, double* scratch, int n) = nullptr;

  // Standard-normal pair for 4 streams at one (channel, block) counter.
  void (*normals)(uint64_t seed, const uint64_t* streams, uint32_t channel, uint64_t block,
                  DPack* z0, DPack* z1) = nullptr;
};

const KernelTable& kernels();          // table for the active ISA
const KernelTable& kernels(Isa isa);   // specific ISA (throws if unavailable)

Isa active_isa();
// Returns false when the requested ISA is not available. Honors the
// CASCADE_SIMD=scalar|avx2 environment override on first use.
bool force_isa(Isa isa);

// Scalar-only single-path runner with optional recording; bit-identical to
// the batched run_paths lane for the same stream.
void run_single_path(const PathJob& job, uint64_t stream, PathOutcome& outcome,
                     double* snapshot, StepRecorder* recorder);

}  // namespace cascade::simd
