#pragma once

// Exact and mollified Coulomb interaction in three dimensions.
//
// The potential is the fundamental solution of -Laplace, g(x) = 1/(4 pi |x|),
// and the repulsive force is F = -grad g. The mollified kernel is
// g_eps = J_eps * g with the radial bump J(x) = c (1 - |x|^2)^3 on the unit
// ball. For a radial bump the shell theorem gives
//
//   F_eps(x) = F(x) m(|x| / eps),   m(s) = mass of J inside radius s,
//
// so everything reduces to polynomials in s^2 inside the core and to the
// exact kernel outside it.

#include <cstddef>
#include <span>

#include "mfcoulomb/common.hpp"

namespace mfc::kernel {

// Normalisation c of J(s) = c (1 - s^2)^3 on the unit ball.
inline constexpr double kBumpNorm = 315.0 / (64.0 * kPi);

// sup_s m(s) / (4 pi s^3), attained as s -> 0.
inline constexpr double kCoreSlope = 105.0 / (64.0 * kPi);

class KernelSpec {
 public:
  explicit KernelSpec(double epsilon);

  double epsilon() const { return epsilon_; }
  static constexpr int dimension() { return 3; }

 private:
  double epsilon_;
};

// Unit-scale profile; s is a radius in units of epsilon.
double bump_density(double s);
double mass_profile(double s);
double mass_profile_derivative(double s);

// J_eps(x) = eps^-3 J(|x| / eps).
double mollifier(const Vec3& x, const KernelSpec& spec);

double coulomb_potential(const Vec3& x);
Vec3 coulomb_force(const Vec3& x);

Vec3 mollified_force(const Vec3& x, const KernelSpec& spec);
double mollified_potential(const Vec3& x, const KernelSpec& spec);

// Scalar q with F_eps(x) = q(|x|^2) x. Shared by every evaluator so the far field
// is bitwise identical to coulomb_force.
inline double far_force_factor(double r2) { return 1.0 / (kFourPi * r2 * std::sqrt(r2)); }

inline double core_force_factor(double r2, double inv_eps2, double inv_four_pi_eps3) {
  const double u = r2 * inv_eps2;
  // m(s) / s^3 expanded in u = s^2.
  const double p = 315.0 / 48.0 + u * (-189.0 / 16.0 + u * (135.0 / 16.0 - u * (35.0 / 16.0)));
  return p * inv_four_pi_eps3;
}

enum class SumMethod { direct, tree };

struct PairwiseOptions {
  SumMethod method = SumMethod::direct;
  double theta = 0.15;    // opening angle for the tree
  std::size_t leaf_size = 8;
  unsigned workers = 1;
};

// Row i of the result is (1/N) sum_{j != i} F_eps(x_i - x_j).
Positions pairwise_forces(std::span<const Vec3> positions, const KernelSpec& spec,
                          const PairwiseOptions& options = {});

}  // namespace mfc::kernel
