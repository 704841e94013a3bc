#pragma once

#include <span>
#include <stdexcept>
#include <vector>

// Bounded open domains over a single subsystem's state space.
// signed_distance < 0 strictly inside, = 0 on the boundary, > 0 outside.

namespace cascade {

class Domain {
 public:
  enum class Kind { kBox, kBall };

  static Domain box(std::vector<double> lo, std::vector<double> hi);
  static Domain ball(std::vector<double> center, double radius);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }
  const std::vector<double>& center() const { return center_; }
  double radius() const { return radius_; }

  double signed_distance(std::span<const double> x) const;

  // Outward unit normal at (or near) the boundary. For boxes the normal at an
  // edge/corner is the axis of maximal penetration; ties pick the lowest axis
  // index (measure-zero event).
  void normal(std::span<const double> x, std::span<double> n_out) const;

  // Nearest boundary point.
  void project(std::span<const double> x, std::span<double> out) const;

  // Uniformly scaled copy about the domain center (factor > 0).
  Domain scaled(double factor) const;

  // Largest inscribed radius (used to scale penalty ramps).
  double inradius() const;

 private:
  Kind kind_ = Kind::kBox;
  int dim_ = 0;
  std::vector<double> lo_, hi_;      // box
  std::vector<double> center_;       // ball
  double radius_ = 0;
};

}  // namespace cascade
