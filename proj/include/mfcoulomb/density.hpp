#pragma once

// Radially symmetric initial densities on R^3 shared by the particle sampler
// and the continuum solver.

#include <string>
#include <variant>
#include <vector>

namespace mfc {

struct GaussianDensity {
  double sigma = 1.0;
};

struct UniformBallDensity {
  double radius = 1.0;
};

// Piecewise-linear rho(r) on r[0] = 0 < r[1] < ... ; zero beyond the last node.
// Mass is taken under 4 pi r^2 dr.
struct RadialTableDensity {
  std::vector<double> r;
  std::vector<double> rho;
};

class InitialDensity {
 public:
  using Kind = std::variant<GaussianDensity, UniformBallDensity, RadialTableDensity>;

  // Throws InputError for invalid parameters or an invalid table. Tables whose
  // mass is within 1e-3 of one are renormalised; anything further off is rejected.
  explicit InitialDensity(Kind kind);

  static InitialDensity gaussian(double sigma) { return InitialDensity(GaussianDensity{sigma}); }
  static InitialDensity uniform_ball(double radius) { return InitialDensity(UniformBallDensity{radius}); }

  const Kind& kind() const { return kind_; }

  double density(double r) const;
  // P(|X| <= r).
  double enclosed_mass(double r) const;
  // Smallest radius holding all but `tail` of the mass (exact support edge for compact kinds).
  double support_radius(double tail = 1e-12) const;
  // Inverse of enclosed_mass, u in (0, 1).
  double radius_quantile(double u) const;
  double second_moment() const;

  std::string describe() const;

 private:
  Kind kind_;
  std::vector<double> table_mass_;  // cumulative mass at table nodes
};

}  // namespace mfc
