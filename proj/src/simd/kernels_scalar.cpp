#include "cascade/simd/kernels_impl.hpp"

// Scalar reference instantiations (width 4 for the table, width 1 for
// single-path recording).

namespace cascade::simd {

namespace {

using E4 = Engine<Scalar4Ops>;

void eval_program4(const expr::Instr* code, size_t n, const DPack* slots, DPack* out,
                   QPack* finite) {
  E4::eval_program(code, n, slots, out, finite);
}

void run_paths4(const PathJob& job, uint64_t first_stream, int count, PathOutcome* outcomes,
                double* snapshots) {
  E4::run_paths(job, first_stream, count, outcomes, snapshots, nullptr);
}

int thomas4(const double* dl, const double* dg, const double* du, double* rhs, double* scratch,
            int n) {
  return E4::thomas(dl, dg, du, rhs, scratch, n);
}

void normals4(uint64_t seed, const uint64_t* streams, uint32_t channel, uint64_t block,
              DPack* z0, DPack* z1) {
  E4::normals(seed, streams, channel, block, z0, z1);
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::kScalar, eval_program4, run_paths4, thomas4, normals4};
  return table;
}

void run_single_path(const PathJob& job, uint64_t stream, PathOutcome& outcome,
                     double* snapshot, StepRecorder* recorder) {
  Engine<Scalar1Ops>::run_paths(job, stream, 1, &outcome, snapshot, recorder);
}

}  // namespace cascade::simd
