#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mfcoulomb/sde.hpp"
#include "mfcoulomb/stats.hpp"

using namespace mfc;
using namespace mfc::sde;

TEST_CASE("initial sampling") {
  const auto g = sample_initial(InitialDensity::gaussian(1.0), 100000, 1);
  Vec3 mean{};
  double cov[3][3]{};
  for (const Vec3& p : g.positions) mean += p;
  mean *= 1e-5;
  for (const Vec3& p : g.positions)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov[a][b] += p[a] * p[b] * 1e-5;
  for (int a = 0; a < 3; ++a) {
    CHECK(std::abs(mean[a]) < 0.02);
    for (int b = 0; b < 3; ++b) CHECK(std::abs(cov[a][b] - (a == b ? 1.0 : 0.0)) < 0.02);
  }
  const auto u = sample_initial(InitialDensity::uniform_ball(2.0), 100000, 2);
  double m2 = stats::second_moment(u.positions);
  CHECK(std::abs(m2 - 0.6 * 4.0) < 0.01 * 2.4);
  for (const Vec3& p : u.positions) CHECK(norm(p) <= 2.0);

  RadialTableDensity t;
  for (int k = 0; k <= 50; ++k) {
    t.r.push_back(k / 50.0);
    t.rho.push_back(3.0 / kPi * (1.0 - k / 50.0));
  }
  const auto tb = sample_initial(InitialDensity(t), 100000, 3);
  CHECK(std::abs(stats::second_moment(tb.positions) - 0.4) < 0.01 * 0.4);

  const auto a = sample_initial(InitialDensity::gaussian(1.0), 50, 9);
  const auto b = sample_initial(InitialDensity::gaussian(1.0), 50, 9);
  CHECK(a.positions == b.positions);
  CHECK(a.stream_ids[49] == 49);
  CHECK_THROWS_AS(sample_initial(InitialDensity::gaussian(1.0), 0, 1), InputError);
}

TEST_CASE("free diffusion has E|X_t - X_0|^2 = 6t") {
  SimulationSpec spec;
  spec.n = 1;
  spec.epsilon = 0.1;
  spec.t_end = 0.5;
  spec.outputs = 4;
  spec.dt = 0.05;
  spec.diagnostics.enabled = false;
  std::vector<double> d2;
  for (std::uint64_t s = 0; s < 10000; ++s) {
    spec.seed = s;
    const auto r = simulate(spec);
    d2.push_back(norm2(r.trajectory.frames.back().positions[0] - r.trajectory.frames.front().positions[0]));
  }
  const auto ms = stats::mean_se(d2);
  CHECK(std::abs(ms.mean - 3.0) <= 3.0 * ms.se);
}

TEST_CASE("deterministic drift steps") {
  const kernel::KernelSpec spec(0.1);
  StepPolicy pol;
  pol.dt = 1e-3;
  pol.noise = false;

  ParticleEnsemble e;
  e.positions = {{-0.5, 0, 0}, {0.5, 0, 0}};
  e.stream_ids = {0, 1};
  const auto one = step(e, spec, pol);
  const Vec3 f = 0.5 * kernel::coulomb_force(e.positions[0] - e.positions[1]);
  CHECK(one.positions[0].x == e.positions[0].x + pol.dt * f.x);
  CHECK(one.positions[1].x == e.positions[1].x - pol.dt * f.x);
  CHECK(one.step == 1);
  CHECK(one.t == pol.dt);

  ParticleEnsemble m = e;
  for (int k = 0; k < 500; ++k) m = step(m, spec, pol);
  CHECK(m.positions[0].x == -m.positions[1].x);
  CHECK(m.positions[0].y == 0.0);

  // Centre of mass is fixed without noise.
  auto cloud = sample_initial(InitialDensity::gaussian(0.3), 64, 4);
  Vec3 c0{};
  for (const Vec3& p : cloud.positions) c0 += p;
  pol.dt = default_dt(0.1);
  for (int k = 0; k < 200; ++k) cloud = step(cloud, spec, pol);
  Vec3 c1{};
  for (const Vec3& p : cloud.positions) c1 += p;
  CHECK(norm(c1 - c0) / 64.0 < 1e-10);
}

TEST_CASE("drift cap and policy validation") {
  const kernel::KernelSpec spec(0.01);
  ParticleEnsemble e;
  e.positions = {{0, 0, 0}, {0.005, 0, 0}};
  e.stream_ids = {0, 1};
  StepPolicy pol;
  pol.dt = 1.0;
  CHECK_THROWS_AS(step(e, spec, pol), StepSizeError);
  pol.drift_cap_check = false;
  CHECK_NOTHROW(step(e, spec, pol));
  pol.dt = 0.0;
  CHECK_THROWS_AS(step(e, spec, pol), InputError);
  e.positions[1].x = NAN;
  pol.dt = 1e-3;
  CHECK_THROWS_AS(step(e, spec, pol), InputError);
}

TEST_CASE("simulation bookkeeping") {
  SimulationSpec spec;
  spec.n = 8;
  spec.epsilon = 0.1;
  spec.t_end = 0.0;
  spec.seed = 3;
  const auto zero = simulate(spec);
  REQUIRE(zero.trajectory.frames.size() == 1);
  CHECK(zero.trajectory.frames[0].positions == sample_initial(spec.rho0, 8, 3).positions);
  CHECK(zero.diagnostics.size() == 1);
  CHECK(zero.diagnostics[0].martingale == 0.0);

  spec.t_end = 0.01;
  spec.outputs = 4;
  const auto a = simulate(spec);
  const auto b = simulate(spec);
  CHECK(a.trajectory.frames.size() == 5);
  CHECK(a.trajectory.frames.back().t == 0.01);
  std::string sa, sb;
  for (const auto& r : a.diagnostics) sa += stats::to_csv(r) + "\n";
  for (const auto& r : b.diagnostics) sb += stats::to_csv(r) + "\n";
  CHECK(sa == sb);
  CHECK(effective_dt(spec) <= default_dt(0.1));
  const double steps = 0.0025 / effective_dt(spec);
  CHECK(steps == doctest::Approx(std::round(steps)).epsilon(1e-12));
  CHECK(a.trajectory.martingale.size() == 5);
  CHECK(a.diagnostics.back().work > 0.0);
}

TEST_CASE("relabelling particles with their streams permutes the output") {
  auto e = sample_initial(InitialDensity::gaussian(0.5), 16, 21);
  ParticleEnsemble p = e;
  std::vector<std::size_t> perm(16);
  for (std::size_t i = 0; i < 16; ++i) perm[i] = (i * 7 + 3) % 16;
  for (std::size_t i = 0; i < 16; ++i) {
    p.positions[i] = e.positions[perm[i]];
    p.stream_ids[i] = e.stream_ids[perm[i]];
  }
  SimulationSpec spec;
  spec.epsilon = 0.1;
  spec.t_end = 0.02;
  spec.outputs = 2;
  spec.diagnostics.enabled = false;
  const auto ra = simulate(spec, e);
  const auto rb = simulate(spec, p);
  const auto& xa = ra.trajectory.frames.back().positions;
  const auto& xb = rb.trajectory.frames.back().positions;
  for (std::size_t i = 0; i < 16; ++i) CHECK(norm(xb[i] - xa[perm[i]]) < 1e-12);
}

TEST_CASE("coupled refinement converges with strong order near one") {
  // Reference at dt / 2^5, coarse runs reuse the same Brownian path.
  SimulationSpec spec;
  spec.n = 8;
  spec.epsilon = 0.5;
  spec.t_end = 0.5;
  spec.outputs = 1;
  spec.rho0 = InitialDensity::gaussian(0.3);
  spec.diagnostics.enabled = false;
  spec.record_martingale = false;
  const int finest = 10;
  std::vector<double> err(4, 0.0);
  const int seeds = 32;
  for (int s = 0; s < seeds; ++s) {
    spec.seed = static_cast<std::uint64_t>(s);
    spec.dt = 0.5 / std::pow(2.0, finest);
    spec.refinement = 0;
    const auto ref = simulate(spec).trajectory.frames.back().positions;
    for (int l = 0; l < 4; ++l) {
      const int level = finest - 6 + l;  // 16 .. 128 steps
      spec.dt = 0.5 / std::pow(2.0, level);
      spec.refinement = static_cast<unsigned>(finest - level);
      const auto x = simulate(spec).trajectory.frames.back().positions;
      double e = 0.0;
      for (std::size_t i = 0; i < x.size(); ++i) e = std::max(e, norm(x[i] - ref[i]));
      err[static_cast<std::size_t>(l)] += e / seeds;
    }
  }
  std::vector<double> h{1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128}, ev(err.begin(), err.end());
  const double order = stats::loglog_slope(h, ev);
  CAPTURE(err[0]);
  CAPTURE(err[3]);
  CHECK(order >= 0.8);
}

TEST_CASE("min distance and stopping time") {
  CHECK(min_pair_distance(Positions{{0, 0, 0}, {1, 0, 0}}) == 1.0);
  CHECK(min_pair_distance(Positions{{0, 0, 0}, {1, 0, 0}, {3, 0, 0}}) == 1.0);
  CHECK_THROWS_AS(min_pair_distance(Positions{{0, 0, 0}}), InputError);
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  Positions pts(128);
  for (auto& p : pts) p = {nd(gen), nd(gen), nd(gen)};
  double best = INFINITY;
  for (std::size_t i = 0; i < 128; ++i)
    for (std::size_t j = 0; j < 128; ++j)
      if (i != j) best = std::min(best, norm(pts[i] - pts[j]));
  CHECK(min_pair_distance(pts) == best);

  SimulationSpec spec;
  spec.n = 16;
  spec.epsilon = 0.1;
  spec.t_end = 0.05;
  spec.outputs = 5;
  spec.monitor_min_distance = true;
  spec.diagnostics.enabled = false;
  const auto r = simulate(spec);
  CHECK_FALSE(stopping_time(r.trajectory, 0.0).has_value());
  const double d0 = min_pair_distance(r.trajectory.frames[0].positions);
  REQUIRE(stopping_time(r.trajectory, d0).has_value());
  CHECK(*stopping_time(r.trajectory, d0) == 0.0);
  CHECK(r.trajectory.monitor_t.size() == r.trajectory.monitor_min.size());

  spec.stop_below = 1e9;
  const auto stopped = simulate(spec);
  CHECK(stopped.trajectory.stopped_early);
  CHECK(stopped.trajectory.frames.size() == 1);
}
