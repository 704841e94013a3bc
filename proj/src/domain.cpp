#include "cascade/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cascade {

Domain Domain::box(std::vector<double> lo, std::vector<double> hi) {
  if (lo.size() != hi.size() || lo.empty())
    throw std::invalid_argument("box domain: lo/hi size mismatch");
  for (size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i])) throw std::invalid_argument("box domain: empty interior");
  Domain d;
  d.kind_ = Kind::kBox;
  d.dim_ = static_cast<int>(lo.size());
  d.lo_ = std::move(lo);
  d.hi_ = std::move(hi);
  return d;
}

Domain Domain::ball(std::vector<double> center, double radius) {
  if (center.empty() || !(radius > 0))
    throw std::invalid_argument("ball domain: need nonempty center and radius > 0");
  Domain d;
  d.kind_ = Kind::kBall;
  d.dim_ = static_cast<int>(center.size());
  d.center_ = std::move(center);
  d.radius_ = radius;
  return d;
}

double Domain::signed_distance(std::span<const double> x) const {
  if (kind_ == Kind::kBall) {
    double s = 0;
    for (int i = 0; i < dim_; ++i) {
      double dxi = x[i] - center_[i];
      s += dxi * dxi;
    }
    return std::sqrt(s) - radius_;
  }
  // box: max over per-axis distances (exact inside; outer approximation of
  // the Euclidean distance outside, which only matters for diagnostics)
  double sd = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim_; ++i) {
    double di = std::max(lo_[i] - x[i], x[i] - hi_[i]);
    sd = std::max(sd, di);
  }
  return sd;
}

void Domain::normal(std::span<const double> x, std::span<double> n_out) const {
  std::fill(n_out.begin(), n_out.end(), 0.0);
  if (kind_ == Kind::kBall) {
    double s = 0;
    for (int i = 0; i < dim_; ++i) {
      n_out[i] = x[i] - center_[i];
      s += n_out[i] * n_out[i];
    }
    s = std::sqrt(s);
    if (s == 0) {  // degenerate query at the center
      n_out[0] = 1.0;
      return;
    }
    for (int i = 0; i < dim_; ++i) n_out[i] /= s;
    return;
  }
  int axis = 0;
  double best = -std::numeric_limits<double>::infinity();
  double sign = 1.0;
  for (int i = 0; i < dim_; ++i) {
    double d_lo = lo_[i] - x[i];
    double d_hi = x[i] - hi_[i];
    if (d_hi > best) { best = d_hi; axis = i; sign = 1.0; }
    if (d_lo > best) { best = d_lo; axis = i; sign = -1.0; }
  }
  n_out[axis] = sign;
}

void Domain::project(std::span<const double> x, std::span<double> out) const {
  if (kind_ == Kind::kBall) {
    double s = 0;
    for (int i = 0; i < dim_; ++i) {
      out[i] = x[i] - center_[i];
      s += out[i] * out[i];
    }
    s = std::sqrt(s);
    double scale = s == 0 ? 0.0 : radius_ / s;
    for (int i = 0; i < dim_; ++i) out[i] = center_[i] + out[i] * scale;
    if (s == 0) out[0] = center_[0] + radius_;
    return;
  }
  // clamp into the closed box, then push the most-penetrating axis onto the face
  for (int i = 0; i < dim_; ++i) out[i] = std::clamp(x[i], lo_[i], hi_[i]);
  if (signed_distance(x) < 0) {
    int axis = 0;
    double best = -std::numeric_limits<double>::infinity();
    double target = 0;
    for (int i = 0; i < dim_; ++i) {
      double d_lo = lo_[i] - x[i];
      double d_hi = x[i] - hi_[i];
      if (d_hi > best) { best = d_hi; axis = i; target = hi_[i]; }
      if (d_lo > best) { best = d_lo; axis = i; target = lo_[i]; }
    }
    out[axis] = target;
  }
}

Domain Domain::scaled(double factor) const {
  if (!(factor > 0)) throw std::invalid_argument("domain scale factor must be > 0");
  if (kind_ == Kind::kBall) return ball(center_, radius_ * factor);
  std::vector<double> lo(dim_), hi(dim_);
  for (int i = 0; i < dim_; ++i) {
    double c = 0.5 * (lo_[i] + hi_[i]);
    double h = 0.5 * (hi_[i] - lo_[i]) * factor;
    lo[i] = c - h;
    hi[i] = c + h;
  }
  return box(std::move(lo), std::move(hi));
}

double Domain::inradius() const {
  if (kind_ == Kind::kBall) return radius_;
  double r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim_; ++i) r = std::min(r, 0.5 * (hi_[i] - lo_[i]));
  return r;
}

}  // namespace cascade
