#pragma once

// Distances between particle clouds and the continuum reference, and the
// two-particle correlation estimator.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mfcoulomb/common.hpp"
#include "mfcoulomb/pde.hpp"
#include "mfcoulomb/weakform.hpp"

namespace mfc::chaos {

// Radial CDF P(|X| <= r) of a piecewise-constant radial field. Throws InputError
// when the field mass is not 1 within 1e-6.
class RadialCdf {
 public:
  explicit RadialCdf(const pde::RadialField& field);
  double operator()(double r) const;
  // P(u . X > z) for any unit vector u (the projected tail, z >= 0).
  double projected_tail(double z) const;
  // P(u . X <= z).
  double projected_cdf(double z) const;
  double outer_radius() const { return edges_.back(); }

 private:
  std::vector<double> edges_, rho_, cum_, s2_, s3_;
};

// Kolmogorov-Smirnov distance between the empirical CDF of |X_i| and a radial CDF.
double radial_ks(std::span<const Vec3> samples, const std::function<double(double)>& cdf);
double radial_ks(std::span<const Vec3> samples, const pde::RadialField& rho);

// 99% DKW band for a one-sample KS statistic.
inline double dkw_bound(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

// Deterministic pseudo-random unit directions.
std::vector<Vec3> directions(std::size_t count, std::uint64_t seed);

// Mean over directions of the 1D W1 distance between projections.
double sliced_w1(std::span<const Vec3> a, std::span<const Vec3> b, std::span<const Vec3> dirs);
double sliced_w1(std::span<const Vec3> samples, const pde::RadialField& rho, std::span<const Vec3> dirs);

// 1D W1 between two empirical samples (any sizes).
double w1_samples(std::vector<double> a, std::vector<double> b);

struct PairCovariance {
  double estimate = 0.0;
  double se = 0.0;  // jackknife over seeds
  std::size_t seeds = 0;
};

// Var_seeds(<mu, phi>) - mean_seeds(within-cloud variance) / (N - 1), an unbiased
// estimate of Cov(phi(X^1), phi(X^2)). Needs at least 8 clouds of a common size.
PairCovariance pair_covariance(const std::vector<Positions>& clouds, const weakform::TestFunction& phi);

struct ChaosReport {
  std::size_t n = 0;
  double t = 0.0;
  double radial_ks = 0.0;   // median over seeds
  double sliced_w1 = 0.0;   // median over seeds
  std::vector<double> pair_cov;
  std::vector<double> pair_cov_se;
  std::size_t seeds = 0;

  std::string to_json() const;
};

}  // namespace mfc::chaos
