#include "cascade/model.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace cascade {

namespace {

using nlohmann::json;

constexpr int kMaxSubsystems = 32;
constexpr int kMaxDim = 16;

std::vector<expr::Expression> parse_bundle_or_throw(const std::string& text, const char* what,
                                                    int subsystem) {
  try {
    return expr::Expression::parse_bundle(text);
  } catch (const expr::ParseError& e) {
    std::ostringstream os;
    os << what << " " << subsystem << ": syntax error at line " << e.line << ", column "
       << e.col << ": " << e.what();
    throw ModelError(os.str());
  }
}

void check_drift_vars(const expr::VarSet& vars, int subsystem, int d, int r_i) {
  for (auto& [i, k] : vars.x) {
    if (i > subsystem) {
      std::ostringstream os;
      os << "cascade violation: drift " << subsystem << " references x" << i << "[" << k
         << "] (only x1..x" << subsystem << " allowed)";
      throw ModelError(os.str());
    }
    if (k >= d) {
      std::ostringstream os;
      os << "unknown variable: drift " << subsystem << " references x" << i << "[" << k
         << "] but d = " << d;
      throw ModelError(os.str());
    }
  }
  if (vars.max_u_component() >= r_i) {
    std::ostringstream os;
    os << "unknown variable: drift " << subsystem << " references u["
       << vars.max_u_component() << "] but kappa_" << subsystem << " has arity " << r_i;
    throw ModelError(os.str());
  }
}

void check_control_vars(const expr::VarSet& vars, int subsystem, int d) {
  if (vars.uses_t)
    throw ModelError("control " + std::to_string(subsystem) +
                     " references t (stationary Markov controls are time-invariant)");
  if (!vars.u.empty())
    throw ModelError("control " + std::to_string(subsystem) + " references u");
  for (auto& [i, k] : vars.x) {
    if (i != subsystem || k >= d) {
      std::ostringstream os;
      os << "control " << subsystem << " may reference only x" << subsystem
         << "[0.." << d - 1 << "], got x" << i << "[" << k << "]";
      throw ModelError(os.str());
    }
  }
}

void check_sigma_vars(const expr::VarSet& vars, int d) {
  if (!vars.u.empty()) throw ModelError("sigma references u");
  for (auto& [i, k] : vars.x) {
    if (i != 1 || k >= d) {
      std::ostringstream os;
      os << "sigma may reference only t and x1[0.." << d - 1 << "], got x" << i << "[" << k
         << "]";
      throw ModelError(os.str());
    }
  }
}

}  // namespace

ChainModel ChainModel::parse(const std::string& config_text) {
  json cfg;
  try {
    cfg = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw ModelError(std::string("config is not valid JSON: ") + e.what());
  }
  for (const char* key : {"n", "d", "m", "lambda_floor", "drifts", "controls", "sigma"})
    if (!cfg.contains(key))
      throw ModelError(std::string("config missing required key '") + key + "'");
  for (auto& [key, value] : cfg.items()) {
    (void)value;
    static const char* known[] = {"n", "d",     "m",       "lambda_floor",
                                  "drifts", "controls", "sigma", "problem", "name", "comment"};
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known))
      throw ModelError("config has unknown key '" + key + "'");
  }

  ChainModel model;
  model.source_text_ = config_text;
  model.n_ = cfg.at("n").get<int>();
  model.d_ = cfg.at("d").get<int>();
  model.m_ = cfg.at("m").get<int>();
  model.lambda_floor_ = cfg.at("lambda_floor").get<double>();
  if (model.n_ < 2 || model.n_ > kMaxSubsystems)
    throw ModelError("n must be in [2, " + std::to_string(kMaxSubsystems) + "]");
  if (model.d_ < 1 || model.d_ > kMaxDim) throw ModelError("d must be in [1, 16]");
  if (model.m_ < 1 || model.m_ > kMaxDim) throw ModelError("m must be in [1, 16]");
  if (!(model.lambda_floor_ > 0)) throw ModelError("lambda_floor must be positive");

  const auto& jd = cfg.at("drifts");
  if (!jd.is_array() || static_cast<int>(jd.size()) != model.n_)
    throw ModelError("drifts must be an array of n expression strings");
  const auto& jc = cfg.at("controls");
  if (!jc.is_array() || static_cast<int>(jc.size()) != model.n_)
    throw ModelError("controls must be an array of n strings or nulls");

  // controls first; their arity fixes r_i for the drift variable checks
  std::vector<int> arity(model.n_ + 1, 0);
  for (int i = 1; i <= model.n_; ++i) {
    const auto& entry = jc.at(i - 1);
    if (entry.is_null()) {
      model.controls_.emplace_back(std::nullopt);
      continue;
    }
    if (!entry.is_string()) throw ModelError("controls entries must be strings or null");
    auto bundle = parse_bundle_or_throw(entry.get<std::string>(), "control", i);
    for (const auto& e : bundle) check_control_vars(e.variables(), i, model.d_);
    arity[i] = static_cast<int>(bundle.size());
    model.controls_.emplace_back(std::move(bundle));
  }

  for (int i = 1; i <= model.n_; ++i) {
    const auto& entry = jd.at(i - 1);
    if (!entry.is_string()) throw ModelError("drifts entries must be strings");
    auto bundle = parse_bundle_or_throw(entry.get<std::string>(), "drift", i);
    if (static_cast<int>(bundle.size()) != model.d_) {
      std::ostringstream os;
      os << "dimension mismatch: drift " << i << " has arity " << bundle.size() << " but d = "
         << model.d_;
      throw ModelError(os.str());
    }
    for (const auto& e : bundle) check_drift_vars(e.variables(), i, model.d_, arity[i]);
    model.drifts_.push_back(std::move(bundle));
  }

  const auto& js = cfg.at("sigma");
  if (js.is_string()) {
    if (model.d_ != model.m_)
      throw ModelError("scalar sigma form requires d == m (diagonal matrix)");
    model.sigma_.diagonal = true;
    model.sigma_.diag = expr::Expression::parse(js.get<std::string>());
    check_sigma_vars(model.sigma_.diag.variables(), model.d_);
  } else if (js.is_array()) {
    model.sigma_.diagonal = false;
    if (static_cast<int>(js.size()) != model.d_)
      throw ModelError("sigma matrix must have d rows");
    for (int r = 0; r < model.d_; ++r) {
      const auto& row = js.at(r);
      if (!row.is_array() || static_cast<int>(row.size()) != model.m_)
        throw ModelError("sigma matrix rows must have m entries");
      std::vector<expr::Expression> row_exprs;
      for (int c = 0; c < model.m_; ++c) {
        row_exprs.push_back(expr::Expression::parse(row.at(c).get<std::string>()));
        check_sigma_vars(row_exprs.back().variables(), model.d_);
      }
      model.sigma_.matrix.push_back(std::move(row_exprs));
    }
  } else {
    throw ModelError("sigma must be a string or an array of arrays of strings");
  }

  if (cfg.contains("problem")) model.problem_json_ = cfg.at("problem").dump();

  // compile everything against the full layout
  CompiledChain& cc = model.compiled_;
  cc.n = model.n_;
  cc.d = model.d_;
  cc.m = model.m_;
  cc.lambda_floor = model.lambda_floor_;
  int max_arity = *std::max_element(arity.begin(), arity.end());
  cc.layout = expr::SlotLayout{model.n_, model.d_, max_arity};
  for (int i = 1; i <= model.n_; ++i) {
    std::vector<expr::Program> dp;
    for (const auto& e : model.drifts_[i - 1]) dp.push_back(e.compile(cc.layout));
    cc.drift.push_back(std::move(dp));
    std::vector<expr::Program> kp;
    if (model.controls_[i - 1])
      for (const auto& e : *model.controls_[i - 1]) kp.push_back(e.compile(cc.layout));
    cc.control.push_back(std::move(kp));
  }
  cc.sigma_diagonal = model.sigma_.diagonal;
  if (cc.sigma_diagonal) {
    cc.sigma.push_back(model.sigma_.diag.compile(cc.layout));
  } else {
    for (int r = 0; r < model.d_; ++r)
      for (int c = 0; c < model.m_; ++c)
        cc.sigma.push_back(model.sigma_.matrix[r][c].compile(cc.layout));
  }
  cc.sigma_constant =
      std::all_of(cc.sigma.begin(), cc.sigma.end(), [](const auto& p) { return p.is_constant(); });
  if (cc.sigma_constant) {
    std::vector<double> slots(cc.layout.total(), 0.0);
    cc.sigma_const.resize(cc.d * cc.m);
    cc.eval_sigma(slots, cc.sigma_const);
  }
  return model;
}

int ChainModel::control_arity(int subsystem) const {
  const auto& c = controls_.at(subsystem - 1);
  return c ? static_cast<int>(c->size()) : 0;
}

void CompiledChain::eval_hat_drift(int subsystem, std::span<double> slots,
                                   std::span<double> out) const {
  const auto& kp = control[subsystem - 1];
  for (size_t k = 0; k < kp.size(); ++k)
    slots[layout.u_slot(static_cast<int>(k))] = kp[k].eval(slots);
  const auto& dp = drift[subsystem - 1];
  for (int c = 0; c < d; ++c) out[c] = dp[c].eval(slots);
}

void CompiledChain::eval_sigma(std::span<double> slots, std::span<double> out) const {
  if (sigma_constant && !sigma_const.empty()) {
    std::copy(sigma_const.begin(), sigma_const.end(), out.begin());
    return;
  }
  if (sigma_diagonal) {
    double v = sigma[0].eval(slots);
    std::fill(out.begin(), out.end(), 0.0);
    for (int i = 0; i < d; ++i) out[i * m + i] = v;
    return;
  }
  for (int i = 0; i < d * m; ++i) out[i] = sigma[i].eval(slots);
}

void CompiledChain::eval_a(std::span<double> slots, std::span<double> a_out) const {
  std::vector<double> sig(d * m);
  eval_sigma(slots, sig);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      double s = 0;
      for (int k = 0; k < m; ++k) s += sig[i * m + k] * sig[j * m + k];
      a_out[i * d + j] = s;
    }
}

void halton_point(int index, std::span<const double> lo, std::span<const double> hi,
                  std::span<double> out) {
  static const int primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37, 41,
                               43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101};
  const int dims = static_cast<int>(lo.size());
  for (int dim = 0; dim < dims; ++dim) {
    const int base = primes[dim % (sizeof primes / sizeof primes[0])];
    double f = 1.0, r = 0.0;
    int i = index;
    while (i > 0) {
      f /= base;
      r += f * (i % base);
      i /= base;
    }
    out[dim] = lo[dim] + (hi[dim] - lo[dim]) * r;
  }
}

PointCloudSpec default_cloud(const ChainModel& model, double t_max, double box) {
  PointCloudSpec spec;
  const int dims = 1 + model.n() * model.d();
  spec.lo.assign(dims, -box);
  spec.hi.assign(dims, box);
  spec.lo[0] = 0.0;
  spec.hi[0] = t_max;
  spec.count = 4096;
  return spec;
}

namespace {

// central finite difference of hat-drift component wrt slot `slot`
double fd_derivative(const CompiledChain& cc, int subsystem, int component,
                     std::vector<double>& slots, int slot) {
  const double x0 = slots[slot];
  const double h = 1e-5 * std::max(1.0, std::fabs(x0));
  std::vector<double> out(cc.d);
  slots[slot] = x0 + h;
  cc.eval_hat_drift(subsystem, slots, out);
  const double fp = out[component];
  slots[slot] = x0 - h;
  cc.eval_hat_drift(subsystem, slots, out);
  const double fm = out[component];
  slots[slot] = x0;
  return (fp - fm) / (2 * h);
}

}  // namespace

ValidationReport validate_regularity(const ChainModel& model, const PointCloudSpec& samples) {
  const CompiledChain& cc = model.compiled();
  const int dims = 1 + cc.n * cc.d;
  if (static_cast<int>(samples.lo.size()) != dims)
    throw ModelError("sample box dimension must be 1 + n*d");

  ValidationReport report;
  report.lambda_floor = cc.lambda_floor;
  report.drift_derivatives.resize(cc.n);
  for (int i = 1; i <= cc.n; ++i)
    report.drift_derivatives[i - 1] = {i, 0.0};
  report.min_sigma_eig = std::numeric_limits<double>::infinity();

  std::vector<double> point(dims);
  std::vector<double> slots(cc.layout.total(), 0.0);
  std::vector<double> a(cc.d * cc.d);
  Eigen::MatrixXd A(cc.d, cc.d);

  for (int s = 0; s < samples.count; ++s) {
    halton_point(s, samples.lo, samples.hi, point);
    std::fill(slots.begin(), slots.end(), 0.0);
    std::copy(point.begin(), point.end(), slots.begin());  // t then x-block, same order

    try {
      for (int i = 1; i <= cc.n; ++i) {
        // derivatives wrt t and all states the subsystem can see
        double& acc = report.drift_derivatives[i - 1].max_abs_derivative;
        for (int c = 0; c < cc.d; ++c) {
          acc = std::max(acc, std::fabs(fd_derivative(cc, i, c, slots, cc.layout.t_slot())));
          for (int j = 1; j <= i; ++j)
            for (int k = 0; k < cc.d; ++k)
              acc = std::max(acc,
                             std::fabs(fd_derivative(cc, i, c, slots, cc.layout.x_slot(j, k))));
        }
      }
      cc.eval_a(slots, a);
    } catch (const expr::EvalError& e) {
      std::ostringstream os;
      os << "evaluation failure at sample " << s << " (t = " << point[0] << "): " << e.what();
      throw ModelError(os.str());
    }
    for (int i = 0; i < cc.d; ++i)
      for (int j = 0; j < cc.d; ++j) A(i, j) = a[i * cc.d + j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(A, Eigen::EigenvaluesOnly);
    report.min_sigma_eig = std::min(report.min_sigma_eig, eig.eigenvalues().minCoeff());
  }
  report.pass = report.min_sigma_eig >= cc.lambda_floor * (1.0 - 1e-9);
  return report;
}

RankReport rank_chain_check(const ChainModel& model, const PointCloudSpec& samples) {
  const CompiledChain& cc = model.compiled();
  const int dims = 1 + cc.n * cc.d;
  if (static_cast<int>(samples.lo.size()) != dims)
    throw ModelError("sample box dimension must be 1 + n*d");

  auto rank_of = [&](int from, int to, std::vector<double>& slots) {
    Eigen::MatrixXd J(cc.d, cc.d);
    for (int c = 0; c < cc.d; ++c)
      for (int k = 0; k < cc.d; ++k)
        J(c, k) = fd_derivative(cc, to, c, slots, cc.layout.x_slot(from, k));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    const auto& sv = svd.singularValues();
    const double thresh = cc.d * std::numeric_limits<double>::epsilon() * sv(0) * 1e3;
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
      if (sv(i) > thresh) ++rank;
    return rank;
  };

  RankReport report;
  for (int j = 1; j < cc.n; ++j)
    report.consecutive.push_back({j, j + 1, cc.d, cc.d, 0});
  for (int i = 3; i <= cc.n; ++i)
    report.versus_first.push_back({1, i, cc.d, cc.d, 0});

  std::vector<double> point(dims);
  std::vector<double> slots(cc.layout.total(), 0.0);
  for (int s = 0; s < samples.count; ++s) {
    halton_point(s, samples.lo, samples.hi, point);
    std::fill(slots.begin(), slots.end(), 0.0);
    std::copy(point.begin(), point.end(), slots.begin());
    for (auto& pr : report.consecutive) {
      int r = rank_of(pr.from_subsystem, pr.to_subsystem, slots);
      pr.min_rank = std::min(pr.min_rank, r);
      if (r < cc.d) ++pr.deficient_samples;
    }
    for (auto& pr : report.versus_first) {
      int r = rank_of(pr.from_subsystem, pr.to_subsystem, slots);
      pr.min_rank = std::min(pr.min_rank, r);
      if (r < cc.d) ++pr.deficient_samples;
    }
  }
  report.all_full_rank = std::all_of(report.consecutive.begin(), report.consecutive.end(),
                                     [&](const auto& p) { return p.min_rank == cc.d; });
  return report;
}

std::string ValidationReport::to_json() const {
  json j;
  j["lambda_floor"] = lambda_floor;
  j["min_sigma_eig"] = min_sigma_eig;
  j["pass"] = pass;
  json arr = json::array();
  for (const auto& d : drift_derivatives)
    arr.push_back({{"subsystem", d.subsystem}, {"max_abs_derivative", d.max_abs_derivative}});
  j["drift_derivatives"] = arr;
  return j.dump(2);
}

std::string RankReport::to_json() const {
  json j;
  auto dump_pairs = [](const std::vector<PairRank>& v) {
    json arr = json::array();
    for (const auto& p : v)
      arr.push_back({{"from", p.from_subsystem},
                     {"to", p.to_subsystem},
                     {"min_rank", p.min_rank},
                     {"full_rank", p.full_rank},
                     {"deficient_samples", p.deficient_samples}});
    return arr;
  };
  j["consecutive"] = dump_pairs(consecutive);
  j["versus_first"] = dump_pairs(versus_first);
  j["all_full_rank"] = all_full_rank;
  return j.dump(2);
}

}  // namespace cascade
