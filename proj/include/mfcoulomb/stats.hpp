#pragma once

// Sample estimators for the functionals tracked along the dynamics: Coulomb
// energy, entropy (sign convention H = int rho log rho), Fisher information and
// second moment.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mfcoulomb/common.hpp"
#include "mfcoulomb/kernel.hpp"
#include "mfcoulomb/pde.hpp"

namespace mfc::stats {

struct DiagnosticsRow {
  double t = 0.0;
  double energy = 0.0;            // (1 / 2N^2) sum_{i != j} g
  double energy_mollified = 0.0;  // same with g_eps
  double entropy_est = 0.0;       // kNN estimate of int rho log rho, NaN when skipped
  double fisher_est = 0.0;        // KDE estimate of int |grad rho|^2 / rho, NaN when skipped
  double m2 = 0.0;
  double min_dist = 0.0;          // +inf for a single particle
  double martingale = 0.0;
  double work = 0.0;              // work integral accumulated up to t
};

// Column order of the diagnostics CSV.
const std::vector<std::string>& diagnostics_columns();
std::string diagnostics_header();
std::string to_csv(const DiagnosticsRow& row);
// Parses one line written by to_csv.
DiagnosticsRow diagnostics_from_csv(const std::string& line);

// nullopt selects the exact kernel, which throws SingularityError on coincident pairs.
double empirical_energy(std::span<const Vec3> positions, const std::optional<kernel::KernelSpec>& mollified = std::nullopt);

struct PairSummary {
  double energy = 0.0;
  double energy_mollified = 0.0;
  double min_dist = 0.0;
};

// Exact energy, mollified energy and minimum separation in a single O(N^2) pass.
PairSummary pair_summary(std::span<const Vec3> positions, const kernel::KernelSpec& spec);

// (1/2) int int g rho rho for a radial field.
double continuum_energy(const pde::RadialField& rho);

struct KnnOptions {
  int k = 4;
  bool strict = false;  // duplicates throw instead of being jittered
};

// Kozachenko-Leonenko estimate of int rho log rho.
double entropy_knn(std::span<const Vec3> samples, const KnnOptions& options = {});
inline double entropy_knn(std::span<const Vec3> samples, int k) { return entropy_knn(samples, KnnOptions{k, false}); }

struct BandwidthRule {
  double factor = 1.0;          // h_a = factor * sd_a * N^exponent
  double exponent = -1.0 / 7.0;
  std::size_t max_eval = 20000;  // evaluation points (deterministic stride)
  double cutoff = 5.0;          // kernel truncation in bandwidth units
};

// Plug-in Fisher information: mean over samples of |grad log rho_hat|^2 with a
// leave-one-out product-Gaussian KDE.
double fisher_kde(std::span<const Vec3> samples, const BandwidthRule& rule = {});

double second_moment(std::span<const Vec3> samples);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};
MeanSe mean_se(std::span<const double> values);
double median(std::vector<double> values);
// Linear interpolation between order statistics, q in [0, 1].
double quantile(std::vector<double> values, double q);

// Least-squares slope of log y against log x.
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
// Wilson score interval for k successes in n trials.
Interval wilson_interval(std::size_t k, std::size_t n, double z = 1.96);

}  // namespace mfc::stats
