#pragma once

// Weak-form residual of the empirical measure against the limiting equation,
//
//   K(mu^N) = (1/N^2) sum_{i,j} [ phi(X_t^i) - phi(X_0^i)
//             - (1/2) int_0^t (grad phi(X^i) - grad phi(X^j)) . F(X^i - X^j) ds
//             - int_0^t Laplace phi(X^i) ds ],
//
// together with the martingale track and the work integral. Time integrals use
// the trapezoid rule on the stored frames.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfcoulomb/common.hpp"
#include "mfcoulomb/kernel.hpp"
#include "mfcoulomb/sde.hpp"

namespace mfc::weakform {

class TestFunction {
 public:
  enum class Kind { gaussian_bump, polynomial_taper, constant, linear };

  // exp(-|x - c|^2 / (2 w^2)).
  static TestFunction gaussian_bump(const Vec3& center, double width);
  // (1 - |x - c|^2 / R^2)^3 inside the ball of radius R, 0 outside. C^2.
  static TestFunction polynomial_taper(const Vec3& center, double radius);
  static TestFunction constant(double value);
  // a . x + b. Unbounded, useful for exactness checks.
  static TestFunction linear(const Vec3& a, double b = 0.0);

  Kind kind() const { return kind_; }
  double value(const Vec3& x) const;
  Vec3 gradient(const Vec3& x) const;
  double laplacian(const Vec3& x) const;
  // Bound on the operator norm of the Hessian over R^3.
  double hessian_bound() const;
  std::string describe() const;

 private:
  TestFunction(Kind kind, Vec3 center, double scale, double offset) : kind_(kind), c_(center), s_(scale), b_(offset) {}
  Kind kind_;
  Vec3 c_;        // centre, or slope for linear
  double s_;      // width / radius
  double b_;      // constant value or offset
};

// Five Gaussian bumps centred on icosahedron vertices at distance `scale`, widths
// alternating 0.5 and 1.0 (times scale).
std::vector<TestFunction> test_battery(double scale = 1.0);

// Kernel used inside the residual: nullopt is the exact Coulomb force.
using KernelChoice = std::optional<kernel::KernelSpec>;

// (grad phi(x) - grad phi(y)) . F(x - y). The exact kernel throws
// SingularityError at x = y.
double symmetrized_pair_integrand(const Vec3& x, const Vec3& y, const TestFunction& phi, const KernelChoice& kernel);

struct Decomposition {
  double ito_martingale_part = 0.0;      // residual of the simulated kernel (martingale + time discretisation)
  double mollification_gap_part = 0.0;   // evaluation kernel minus simulated kernel
};

struct WeakResidualReport {
  double value = 0.0;
  std::size_t n = 0;
  double epsilon = 0.0;  // evaluation epsilon, 0 for the exact kernel
  double t = 0.0;
  std::uint64_t seed = 0;
  Decomposition decomposition;
  std::string phi;

  std::string to_json() const;
};

// Residual at frame time t. The interaction term uses the identity
// sum_{i,j} (grad phi_i - grad phi_j) . F_ij = 2 N sum_i grad phi_i . drift_i.
// Throws InputError when t is not a frame time or fewer than two frames cover it.
WeakResidualReport weak_residual(const sde::Trajectory& traj, const TestFunction& phi, const KernelChoice& kernel,
                                 double t);

// Same value by the explicit O(N^2) double sum; reference implementation.
double weak_residual_direct(const sde::Trajectory& traj, const TestFunction& phi, const KernelChoice& kernel, double t);

// K_a - K_b on the same trajectory. Only pairs closer than the larger core
// radius contribute, so this is cheap even for large N.
double residual_gap(const sde::Trajectory& traj, const TestFunction& phi, const KernelChoice& a, const KernelChoice& b,
                    double t);

struct MartingalePoint {
  double t = 0.0;
  double value = 0.0;
};

// M_t = (2 sqrt 2 / N) sum_{i != j} int F_eps(X^i - X^j) . dB^i at every frame.
// Throws UnavailableError when the simulator did not retain increments.
std::vector<MartingalePoint> martingale_track(const sde::Trajectory& traj);

// int_0^t (1/N) sum_i |drift_i|^2 ds by the trapezoid rule on the frames. A
// different epsilon than the simulation one recomputes the drift.
double work_integral(const sde::Trajectory& traj, const kernel::KernelSpec& spec, double t);
double work_integral(const sde::Trajectory& traj, double t);

}  // namespace mfc::weakform
