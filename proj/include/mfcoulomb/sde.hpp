#pragma once

// Euler-Maruyama integration of the regularized particle system
//
//   dX_i = (1/N) sum_{j != i} F_eps(X_i - X_j) dt + sqrt(2) dB_i,
//
// with addressable Brownian increments so runs can be refined, relabelled and
// replayed exactly.

#include <cstdint>
#include <optional>
#include <vector>

#include "mfcoulomb/common.hpp"
#include "mfcoulomb/density.hpp"
#include "mfcoulomb/kernel.hpp"
#include "mfcoulomb/stats.hpp"

namespace mfc::sde {

struct ParticleEnsemble {
  Positions positions;
  std::vector<std::uint64_t> stream_ids;  // noise stream of each particle
  double t = 0.0;
  std::uint64_t step = 0;  // steps taken, the counter of the next increment
  std::uint64_t seed = 0;

  std::size_t size() const { return positions.size(); }
};

// N i.i.d. draws from rho0, stream ids 0..N-1.
ParticleEnsemble sample_initial(const InitialDensity& rho0, std::size_t n, std::uint64_t seed);

struct StepPolicy {
  double dt = 0.0;
  bool drift_cap_check = true;  // dt * max|drift| <= eps / 4
  bool noise = true;
  // The increment over one step is built from 2^refinement unit normals, so a
  // run with dt and refinement L shares its Brownian path with a run at
  // dt / 2^L and refinement 0.
  unsigned refinement = 0;
  kernel::PairwiseOptions pairwise;
};

// The default step size pi eps^3: a drift of 1/(4 pi eps^2) moves a particle eps/4.
inline double default_dt(double epsilon) { return kPi * epsilon * epsilon * epsilon; }

// Unit-variance Brownian increment of one particle for one step, times sqrt(dt).
Vec3 brownian_increment(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, double dt, unsigned refinement);

struct StepRecord {
  Positions drift;       // drift at the start of the step
  Positions increments;  // dB of each particle
};

// One step. Throws StepSizeError when the drift cap is violated.
ParticleEnsemble step(const ParticleEnsemble& ens, const kernel::KernelSpec& spec, const StepPolicy& policy,
                      StepRecord* record = nullptr);

// As step(), with a drift already evaluated at the current positions.
void advance(ParticleEnsemble& ens, const Positions& drift, const kernel::KernelSpec& spec, const StepPolicy& policy,
             Positions* increments = nullptr);

struct Frame {
  double t = 0.0;
  Positions positions;
  Positions drift;  // at the simulation epsilon
};

struct Trajectory {
  std::size_t n = 0;
  double epsilon = 0.0;
  double dt = 0.0;  // step actually used
  std::uint64_t seed = 0;
  std::vector<Frame> frames;
  std::vector<double> martingale;  // M at every frame; empty when increments were not retained
  std::vector<double> monitor_t;    // per-step minimum distance monitor
  std::vector<double> monitor_min;
  bool stopped_early = false;
};

struct DiagnosticsOptions {
  bool enabled = true;
  bool entropy = true;   // needs N > k
  bool fisher = true;    // needs N >= 1000
  int knn_k = 4;
};

struct SimulationSpec {
  InitialDensity rho0 = InitialDensity::gaussian(1.0);
  std::size_t n = 2;
  double epsilon = 0.05;
  double dt = 0.0;       // upper bound; 0 selects default_dt(epsilon)
  double t_end = 0.25;
  std::size_t outputs = 64;  // output intervals on [0, T]
  std::uint64_t seed = 0;
  bool noise = true;
  unsigned refinement = 0;
  bool drift_cap_check = true;
  kernel::PairwiseOptions pairwise;
  bool record_martingale = true;
  bool monitor_min_distance = false;
  std::optional<double> stop_below;  // end the run once the monitored distance is <= this
  DiagnosticsOptions diagnostics;
};

struct SimulationResult {
  Trajectory trajectory;
  std::vector<stats::DiagnosticsRow> diagnostics;
};

// The step is the largest dt' <= dt that divides every output interval.
double effective_dt(const SimulationSpec& spec);

SimulationResult simulate(const SimulationSpec& spec);
// Starts from a given ensemble instead of sampling rho0.
SimulationResult simulate(const SimulationSpec& spec, ParticleEnsemble initial);

// Exact minimum over unordered pairs. N < 2 throws InputError.
double min_pair_distance(std::span<const Vec3> positions);
inline double min_pair_distance(const ParticleEnsemble& ens) { return min_pair_distance(ens.positions); }

// First recorded time with minimum distance <= threshold. Uses the per-step
// monitor when present, the frames otherwise.
std::optional<double> stopping_time(const Trajectory& traj, double threshold);

}  // namespace mfc::sde
