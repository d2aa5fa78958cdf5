#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "mfcoulomb/stats.hpp"
#include "mfcoulomb/weakform.hpp"

using namespace mfc;
using namespace mfc::weakform;

namespace {

sde::Trajectory run(std::size_t n, std::uint64_t seed, double eps = 0.2, bool noise = true, double t_end = 0.1,
                    std::size_t outputs = 10) {
  sde::SimulationSpec spec;
  spec.n = n;
  spec.epsilon = eps;
  spec.t_end = t_end;
  spec.outputs = outputs;
  spec.seed = seed;
  spec.noise = noise;
  spec.diagnostics.enabled = false;
  spec.rho0 = InitialDensity::gaussian(0.5);
  return sde::simulate(spec).trajectory;
}

}  // namespace

TEST_CASE("test functions") {
  const auto g = TestFunction::gaussian_bump({0.1, 0.2, 0.3}, 0.7);
  const Vec3 x{0.4, -0.1, 0.5};
  const double h = 1e-5;
  double lap = 0.0;
  for (int a = 0; a < 3; ++a) {
    Vec3 p = x, m = x;
    p[a] += h;
    m[a] -= h;
    CHECK(g.gradient(x)[a] == doctest::Approx((g.value(p) - g.value(m)) / (2 * h)).epsilon(1e-7));
    lap += (g.value(p) - 2 * g.value(x) + g.value(m)) / (h * h);
  }
  CHECK(g.laplacian(x) == doctest::Approx(lap).epsilon(1e-4));
  CHECK(g.value({0.1, 0.2, 0.3}) == 1.0);

  const auto t = TestFunction::polynomial_taper({0, 0, 0}, 1.0);
  CHECK(t.value({1.0, 0, 0}) == 0.0);
  CHECK(t.value({2.0, 0, 0}) == 0.0);
  CHECK(t.gradient({2.0, 0, 0}) == Vec3{});
  CHECK(t.value({0, 0, 0}) == 1.0);
  CHECK(t.laplacian({0, 0, 0}) == doctest::Approx(-18.0));

  CHECK_THROWS_AS(TestFunction::gaussian_bump({0, 0, 0}, 0.0), InputError);
  CHECK_THROWS_AS(TestFunction::polynomial_taper({0, 0, 0}, -1.0), InputError);

  const auto battery = test_battery();
  REQUIRE(battery.size() == 5);
  for (const auto& phi : battery) CHECK(phi.kind() == TestFunction::Kind::gaussian_bump);
  CHECK(battery[0].describe() != battery[1].describe());
}

TEST_CASE("pair integrand is bounded by the Hessian") {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> nd;
  const auto phi = TestFunction::gaussian_bump({0.2, 0, -0.1}, 0.5);
  const double H = phi.hessian_bound();
  CHECK(H == doctest::Approx(4.0));
  for (int k = 0; k < 2000; ++k) {
    const Vec3 x{nd(gen), nd(gen), nd(gen)};
    const Vec3 y = x + 0.1 * Vec3{nd(gen), nd(gen), nd(gen)};
    const double r = norm(x - y);
    const double exact = symmetrized_pair_integrand(x, y, phi, std::nullopt);
    CHECK(std::abs(exact) <= H / (4 * kPi * r) * (1 + 1e-12));
    const double moll = symmetrized_pair_integrand(x, y, phi, kernel::KernelSpec(0.1));
    CHECK(std::abs(moll) <= std::min(H / (4 * kPi * r), H * kernel::kCoreSlope * r * r / 1e-3) * (1 + 1e-12));
    CHECK(symmetrized_pair_integrand(y, x, phi, std::nullopt) == doctest::Approx(exact).epsilon(1e-12));
  }
  CHECK_THROWS_AS(symmetrized_pair_integrand({1, 0, 0}, {1, 0, 0}, phi, std::nullopt), SingularityError);
  CHECK(symmetrized_pair_integrand({1, 0, 0}, {1, 0, 0}, phi, kernel::KernelSpec(0.1)) == 0.0);
}

TEST_CASE("constant and linear test functions") {
  const auto traj = run(16, 1);
  CHECK(weak_residual(traj, TestFunction::constant(3.0), std::nullopt, 0.1).value == 0.0);
  CHECK(weak_residual(traj, TestFunction::constant(3.0), kernel::KernelSpec(0.2), 0.1).value == 0.0);
  const auto still = run(16, 1, 0.2, false);
  const auto lin = TestFunction::linear({1.0, -2.0, 0.5}, 0.3);
  CHECK(std::abs(weak_residual(still, lin, kernel::KernelSpec(0.2), 0.1).value) <= 1e-13);
  CHECK(std::abs(weak_residual(still, lin, std::nullopt, 0.1).value) <= 1e-13);
}

TEST_CASE("fast and direct residuals agree") {
  const auto traj = run(24, 5, 0.3);
  for (const auto& phi : test_battery(0.5)) {
    for (const KernelChoice& k : {KernelChoice(kernel::KernelSpec(0.3)), KernelChoice(kernel::KernelSpec(0.1)),
                                  KernelChoice(kernel::KernelSpec(0.6)), KernelChoice()}) {
      const auto rep = weak_residual(traj, phi, k, 0.1);
      const double d = weak_residual_direct(traj, phi, k, 0.1);
      CHECK(rep.value == doctest::Approx(d).epsilon(1e-9).scale(1e-6));
      CHECK(rep.value == doctest::Approx(rep.decomposition.ito_martingale_part + rep.decomposition.mollification_gap_part));
    }
    const auto at_sim = weak_residual(traj, phi, kernel::KernelSpec(0.3), 0.05);
    CHECK(at_sim.decomposition.mollification_gap_part == 0.0);
    CHECK(at_sim.t == 0.05);
    // Gap is antisymmetric.
    const double ab = residual_gap(traj, phi, kernel::KernelSpec(0.1), std::nullopt, 0.1);
    const double ba = residual_gap(traj, phi, std::nullopt, kernel::KernelSpec(0.1), 0.1);
    CHECK(ab == -ba);
  }
  CHECK(weak_residual(traj, test_battery()[0], std::nullopt, 0.0).value == 0.0);
  CHECK_THROWS_AS(weak_residual(traj, test_battery()[0], std::nullopt, 0.033), InputError);

  const auto rep = weak_residual(traj, test_battery()[0], kernel::KernelSpec(0.1), 0.1);
  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j.at("N") == 24);
  CHECK(j.at("epsilon").get<double>() == 0.1);
  CHECK(j.at("value").get<double>() == rep.value);
}

TEST_CASE("single particle residual has zero mean") {
  const auto phi = TestFunction::gaussian_bump({0.3, 0, 0}, 0.5);
  std::vector<double> v;
  for (std::uint64_t s = 0; s < 200; ++s) v.push_back(weak_residual(run(1, s, 0.2, true, 0.1, 50), phi, std::nullopt, 0.1).value);
  const auto ms = stats::mean_se(v);
  CAPTURE(ms.mean);
  CAPTURE(ms.se);
  CHECK(std::abs(ms.mean) <= 3.0 * ms.se);
}

TEST_CASE("martingale and work") {
  const auto one = run(1, 3);
  CHECK(work_integral(one, 0.1) == 0.0);
  for (const auto& p : martingale_track(one)) CHECK(p.value == 0.0);

  sde::SimulationSpec spec;
  spec.n = 16;
  spec.epsilon = 0.2;
  spec.t_end = 0.1;
  spec.outputs = 10;
  spec.rho0 = InitialDensity::gaussian(0.5);
  spec.record_martingale = false;
  CHECK_THROWS_AS(martingale_track(sde::simulate(spec).trajectory), UnavailableError);

  spec.record_martingale = true;
  const auto res = sde::simulate(spec);
  const auto track = martingale_track(res.trajectory);
  REQUIRE(track.size() == res.trajectory.frames.size());
  CHECK(track.front().value == 0.0);
  CHECK(track.back().value == res.diagnostics.back().martingale);
  CHECK(work_integral(res.trajectory, 0.1) == doctest::Approx(res.diagnostics.back().work).epsilon(1e-12));
  CHECK(work_integral(res.trajectory, kernel::KernelSpec(0.2), 0.1) ==
        doctest::Approx(work_integral(res.trajectory, 0.1)).epsilon(1e-12));
  CHECK(work_integral(res.trajectory, kernel::KernelSpec(0.4), 0.1) < work_integral(res.trajectory, 0.1));
  CHECK(work_integral(res.trajectory, 0.05) < work_integral(res.trajectory, 0.1));

  // Ito isometry: E[M^2] = 8 N E[work].
  std::vector<double> m, m2, w;
  spec.diagnostics.enabled = false;
  for (std::uint64_t s = 0; s < 400; ++s) {
    spec.seed = s;
    const auto tr = sde::simulate(spec).trajectory;
    m.push_back(tr.martingale.back());
    m2.push_back(tr.martingale.back() * tr.martingale.back());
    w.push_back(8.0 * 16.0 * work_integral(tr, 0.1));
  }
  const auto mm = stats::mean_se(m);
  CHECK(std::abs(mm.mean) <= 3.0 * mm.se);
  const auto a = stats::mean_se(m2), b = stats::mean_se(w);
  CAPTURE(a.mean);
  CAPTURE(b.mean);
  CHECK(std::abs(a.mean - b.mean) <= 3.0 * std::hypot(a.se, b.se));
}
