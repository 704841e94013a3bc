#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cascade/expr.hpp"

// Chain models: n subsystems of dimension d, noise (dimension m) entering the
// first subsystem only, drift of subsystem i depending on t, x^1..x^i and its
// own feedback control u_i = kappa_i(x^i).

namespace cascade {

struct ModelError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SigmaSpec {
  // Diagonal form (single expression, requires d == m) or a full d x m matrix.
  bool diagonal = true;
  expr::Expression diag;
  std::vector<std::vector<expr::Expression>> matrix;  // [d][m]
};

class ChainModel;

// Bound programs, ready for the integration kernels. Immutable after build.
struct CompiledChain {
  int n = 0, d = 0, m = 0;
  double lambda_floor = 0;
  expr::SlotLayout layout;
  std::vector<std::vector<expr::Program>> drift;    // [subsystem][component]
  std::vector<std::vector<expr::Program>> control;  // [subsystem][component], may be empty
  bool sigma_diagonal = true;
  std::vector<expr::Program> sigma;  // diagonal: 1 entry; matrix: d*m row-major
  bool sigma_constant = false;       // all sigma entries constant
  std::vector<double> sigma_const;   // cached d*m values when constant

  // Evaluates the closed-loop drift of subsystem i (1-based) into out[0..d).
  // `slots` must be laid out per `layout` with state entries filled for
  // subsystems 1..i; control slots are overwritten.
  void eval_hat_drift(int subsystem, std::span<double> slots, std::span<double> out) const;
  // sigma(t, x^1) into out (d*m row-major); uses slots for t and x^1.
  void eval_sigma(std::span<double> slots, std::span<double> out) const;
  // a = sigma sigma^T (d*d row-major).
  void eval_a(std::span<double> slots, std::span<double> a_out) const;
};

class ChainModel {
 public:
  // Parses and validates a JSON config (see README for the schema). Throws
  // ModelError / expr::ParseError with location details on bad input.
  static ChainModel parse(const std::string& config_text);

  int n() const { return n_; }
  int d() const { return d_; }
  int m() const { return m_; }
  double lambda_floor() const { return lambda_floor_; }
  int control_arity(int subsystem) const;  // r_i, 0 when kappa_i absent

  const std::vector<std::vector<expr::Expression>>& drifts() const { return drifts_; }
  const std::vector<std::optional<std::vector<expr::Expression>>>& controls() const {
    return controls_;
  }
  const SigmaSpec& sigma() const { return sigma_; }

  const CompiledChain& compiled() const { return compiled_; }

  // Optional problem defaults carried in the config ("problem" block).
  const std::string& problem_json() const { return problem_json_; }
  const std::string& source_text() const { return source_text_; }

 private:
  int n_ = 0, d_ = 0, m_ = 0;
  double lambda_floor_ = 0;
  std::vector<std::vector<expr::Expression>> drifts_;
  std::vector<std::optional<std::vector<expr::Expression>>> controls_;
  SigmaSpec sigma_;
  CompiledChain compiled_;
  std::string problem_json_;
  std::string source_text_;
};

// Sampling box for the regularity / rank checks: quasi-random (Halton) points
// over [lo, hi] in the (t, x^1..x^n) variables; index 0 is the lower corner.
struct PointCloudSpec {
  std::vector<double> lo, hi;  // dimension 1 + n*d
  int count = 4096;
};
PointCloudSpec default_cloud(const ChainModel& model, double t_max = 1.0, double box = 2.0);

struct ValidationReport {
  struct DriftDerivative {
    int subsystem;
    double max_abs_derivative;  // finite-difference, over all inputs and samples
  };
  std::vector<DriftDerivative> drift_derivatives;
  double min_sigma_eig = 0;     // min eigenvalue of sigma sigma^T over samples
  double lambda_floor = 0;
  bool pass = false;
  std::string to_json() const;
};

// Samples max |d f_i / d(t,x)| per subsystem and the minimum eigenvalue of
// sigma sigma^T; pass iff the eigenvalue floor holds on every sample.
ValidationReport validate_regularity(const ChainModel& model, const PointCloudSpec& samples);

struct RankReport {
  struct PairRank {
    int from_subsystem, to_subsystem;  // Jacobian d f_to / d x_from
    int min_rank;                      // over samples
    int full_rank;                     // = d
    int deficient_samples;             // samples with rank < d
  };
  std::vector<PairRank> consecutive;   // (j, j+1) for j = 1..n-1
  std::vector<PairRank> versus_first;  // (1, i) for i = 3..n, reported as stated
  bool all_full_rank = false;
  std::string to_json() const;
};

// Sampled surrogate for the rank condition: numerical rank (SVD, threshold
// d * eps * sigma_max * 1e3) of the finite-difference Jacobians d f_{j+1}/d x^j.
RankReport rank_chain_check(const ChainModel& model, const PointCloudSpec& samples);

// Halton sequence point (index 0 = all zeros), mapped into [lo, hi].
void halton_point(int index, std::span<const double> lo, std::span<const double> hi,
                  std::span<double> out);

}  // namespace cascade
