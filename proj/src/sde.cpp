#include "mfcoulomb/sde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mfcoulomb/io.hpp"
#include "mfcoulomb/rng.hpp"

namespace mfc::sde {

ParticleEnsemble sample_initial(const InitialDensity& rho0, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InputError("sample_initial: N must be >= 1");
  ParticleEnsemble ens;
  ens.seed = seed;
  ens.positions.resize(n);
  ens.stream_ids.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ens.stream_ids[i] = i;
    const auto g = rng::normal3(seed, i, 0, rng::Purpose::initial);
    const Vec3 z{g[0], g[1], g[2]};
    if (const auto* gd = std::get_if<GaussianDensity>(&rho0.kind())) {
      ens.positions[i] = gd->sigma * z;
      continue;
    }
    const double u = rng::uniform_pair(seed, i, 1, rng::Purpose::initial)[0];
    double r;
    if (const auto* ub = std::get_if<UniformBallDensity>(&rho0.kind())) {
      r = ub->radius * std::cbrt(u);
    } else {
      r = rho0.radius_quantile(u);
    }
    const double zn = norm(z);
    ens.positions[i] = (r / zn) * z;
  }
  return ens;
}

Vec3 brownian_increment(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, double dt, unsigned refinement) {
  if (refinement == 0) {
    const auto g = rng::normal3(seed, stream, step, rng::Purpose::brownian);
    const double s = std::sqrt(dt);
    return {s * g[0], s * g[1], s * g[2]};
  }
  const std::uint64_t sub = std::uint64_t{1} << refinement;
  Vec3 acc{};
  for (std::uint64_t m = 0; m < sub; ++m) {
    const auto g = rng::normal3(seed, stream, step * sub + m, rng::Purpose::brownian);
    acc += Vec3{g[0], g[1], g[2]};
  }
  return std::sqrt(dt / static_cast<double>(sub)) * acc;
}

namespace {

void check_policy(const StepPolicy& policy) {
  if (!(policy.dt > 0.0) || !std::isfinite(policy.dt)) throw InputError("step: dt must be finite and > 0");
  if (policy.refinement > 20) throw InputError("step: refinement level above 20");
}

}  // namespace

void advance(ParticleEnsemble& ens, const Positions& drift, const kernel::KernelSpec& spec, const StepPolicy& policy,
             Positions* increments) {
  check_policy(policy);
  const std::size_t n = ens.size();
  if (drift.size() != n) throw InputError("advance: drift size mismatch");
  if (policy.drift_cap_check) {
    double vmax = 0.0;
    for (const Vec3& d : drift) vmax = std::max(vmax, norm(d));
    const double move = policy.dt * vmax;
    if (move > 0.25 * spec.epsilon()) {
      throw StepSizeError("drift cap violated: dt*max|drift| = " + io::format_double(move) + " > eps/4 = " +
                          io::format_double(0.25 * spec.epsilon()) + " (use dt <= pi*eps^3)");
    }
  }
  if (increments) increments->assign(n, Vec3{});
  const double s2 = std::sqrt(2.0);
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 x = ens.positions[i] + policy.dt * drift[i];
    if (policy.noise) {
      const Vec3 db = brownian_increment(ens.seed, ens.stream_ids[i], ens.step, policy.dt, policy.refinement);
      x += s2 * db;
      if (increments) (*increments)[i] = db;
    }
    ens.positions[i] = x;
  }
  ++ens.step;
  ens.t = static_cast<double>(ens.step) * policy.dt;
}

ParticleEnsemble step(const ParticleEnsemble& ens, const kernel::KernelSpec& spec, const StepPolicy& policy,
                      StepRecord* record) {
  for (const Vec3& p : ens.positions) {
    if (!is_finite(p)) throw InputError("step: non-finite position");
  }
  ParticleEnsemble next = ens;
  Positions drift = kernel::pairwise_forces(ens.positions, spec, policy.pairwise);
  advance(next, drift, spec, policy, record ? &record->increments : nullptr);
  if (record) record->drift = std::move(drift);
  return next;
}

double effective_dt(const SimulationSpec& spec) {
  if (spec.outputs == 0) throw InputError("simulate: outputs must be >= 1");
  if (!(spec.t_end >= 0.0) || !std::isfinite(spec.t_end)) throw InputError("simulate: T must be finite and >= 0");
  const double dt = spec.dt > 0.0 ? spec.dt : default_dt(spec.epsilon);
  if (!std::isfinite(dt)) throw InputError("simulate: dt must be finite");
  if (spec.t_end == 0.0) return dt;
  const double interval = spec.t_end / static_cast<double>(spec.outputs);
  const double sub = std::ceil(interval / dt * (1.0 - 1e-12));
  return interval / std::max(1.0, sub);
}

namespace {

double mean_sq(const Positions& v) {
  double s = 0.0;
  for (const Vec3& d : v) s += norm2(d);
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

stats::DiagnosticsRow diagnose(const Frame& f, const kernel::KernelSpec& spec, const DiagnosticsOptions& opt,
                               double martingale, double work) {
  stats::DiagnosticsRow row;
  row.t = f.t;
  row.martingale = martingale;
  row.work = work;
  row.m2 = stats::second_moment(f.positions);
  const std::size_t n = f.positions.size();
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (n >= 2) {
    const auto ps = stats::pair_summary(f.positions, spec);
    row.energy = ps.energy;
    row.energy_mollified = ps.energy_mollified;
    row.min_dist = ps.min_dist;
  } else {
    row.min_dist = std::numeric_limits<double>::infinity();
  }
  row.entropy_est = opt.entropy && n > static_cast<std::size_t>(opt.knn_k) ? stats::entropy_knn(f.positions, opt.knn_k) : nan;
  row.fisher_est = opt.fisher && n >= 1000 ? stats::fisher_kde(f.positions) : nan;
  return row;
}

}  // namespace

SimulationResult simulate(const SimulationSpec& spec) {
  return simulate(spec, sample_initial(spec.rho0, spec.n, spec.seed));
}

SimulationResult simulate(const SimulationSpec& spec, ParticleEnsemble ens) {
  const kernel::KernelSpec kspec(spec.epsilon);
  const double dt = effective_dt(spec);
  if (ens.size() == 0) throw InputError("simulate: empty ensemble");

  StepPolicy policy;
  policy.dt = dt;
  policy.drift_cap_check = spec.drift_cap_check;
  policy.noise = spec.noise;
  policy.refinement = spec.refinement;
  policy.pairwise = spec.pairwise;

  SimulationResult res;
  Trajectory& tr = res.trajectory;
  tr.n = ens.size();
  tr.epsilon = spec.epsilon;
  tr.dt = dt;
  tr.seed = ens.seed;

  const std::size_t outputs = spec.t_end == 0.0 ? 0 : spec.outputs;
  const std::uint64_t per_output =
      outputs == 0 ? 0 : static_cast<std::uint64_t>(std::llround(spec.t_end / static_cast<double>(outputs) / dt));
  const bool monitor = spec.monitor_min_distance && ens.size() >= 2;
  const bool keep_m = spec.record_martingale && spec.noise;

  double martingale = 0.0;
  double work = 0.0;
  double prev_power = 0.0;
  const double mscale = 2.0 * std::sqrt(2.0);

  auto emit = [&](std::size_t f, Positions drift) {
    Frame fr;
    fr.t = outputs == 0 ? 0.0 : spec.t_end * static_cast<double>(f) / static_cast<double>(outputs);
    fr.positions = ens.positions;
    fr.drift = std::move(drift);
    const double power = mean_sq(fr.drift);
    if (f > 0) work += 0.5 * (prev_power + power) * (fr.t - tr.frames.back().t);
    prev_power = power;
    if (keep_m) tr.martingale.push_back(martingale);
    if (spec.diagnostics.enabled) res.diagnostics.push_back(diagnose(fr, kspec, spec.diagnostics, keep_m ? martingale : 0.0, work));
    tr.frames.push_back(std::move(fr));
  };

  auto check_monitor = [&]() {
    if (!monitor) return false;
    const double d = min_pair_distance(ens.positions);
    tr.monitor_t.push_back(ens.t);
    tr.monitor_min.push_back(d);
    return spec.stop_below && d <= *spec.stop_below;
  };

  Positions drift = kernel::pairwise_forces(ens.positions, kspec, spec.pairwise);
  if (check_monitor()) tr.stopped_early = true;
  emit(0, drift);
  Positions inc;
  for (std::size_t f = 1; f <= outputs && !tr.stopped_early; ++f) {
    for (std::uint64_t s = 0; s < per_output; ++s) {
      advance(ens, drift, kspec, policy, keep_m ? &inc : nullptr);
      if (keep_m) {
        double dm = 0.0;
        for (std::size_t i = 0; i < ens.size(); ++i) dm += dot(drift[i], inc[i]);
        martingale += mscale * dm;
      }
      drift = kernel::pairwise_forces(ens.positions, kspec, spec.pairwise);
      if (check_monitor()) {
        tr.stopped_early = true;
        break;
      }
    }
    if (tr.stopped_early) break;
    emit(f, drift);
  }
  return res;
}

double min_pair_distance(std::span<const Vec3> positions) {
  const std::size_t n = positions.size();
  if (n < 2) throw InputError("min_pair_distance: need N >= 2");
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) best = std::min(best, norm2(positions[i] - positions[j]));
  }
  return std::sqrt(best);
}

std::optional<double> stopping_time(const Trajectory& traj, double threshold) {
  if (!traj.monitor_t.empty()) {
    for (std::size_t k = 0; k < traj.monitor_t.size(); ++k) {
      if (traj.monitor_min[k] <= threshold) return traj.monitor_t[k];
    }
    return std::nullopt;
  }
  for (const Frame& f : traj.frames) {
    if (f.positions.size() < 2) return std::nullopt;
    if (min_pair_distance(f.positions) <= threshold) return f.t;
  }
  return std::nullopt;
}

}  // namespace mfc::sde
