#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "mfcoulomb/chaos.hpp"
#include "mfcoulomb/rng.hpp"
#include "mfcoulomb/sde.hpp"

using namespace mfc;
using namespace mfc::chaos;

namespace {

Positions gaussian_cloud(std::size_t n, std::uint64_t seed, double sigma = 1.0) {
  return sde::sample_initial(InitialDensity::gaussian(sigma), n, seed).positions;
}

double gaussian_radial_cdf(double r) {
  return std::erf(r / std::sqrt(2.0)) - std::sqrt(2.0 / kPi) * r * std::exp(-0.5 * r * r);
}

}  // namespace

TEST_CASE("radial cdf of a field") {
  const auto ball = pde::RadialField::from_density(InitialDensity::uniform_ball(1.0), 200, 2.0);
  const RadialCdf cdf(ball);
  CHECK(cdf(0.0) == 0.0);
  CHECK(cdf(0.5) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(cdf(1.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cdf(5.0) == 1.0);
  // Uniform ball projection: P(u.X > z) = (1 - z)^2 (2 + z) / 4.
  for (double z : {0.0, 0.2, 0.5, 0.9, 1.0, 1.5}) {
    const double exact = z >= 1.0 ? 0.0 : (1 - z) * (1 - z) * (2 + z) / 4.0;
    CHECK(cdf.projected_tail(z) == doctest::Approx(exact).epsilon(1e-6).scale(1e-6));
    CHECK(cdf.projected_cdf(-z) == doctest::Approx(exact).epsilon(1e-6).scale(1e-6));
  }
  auto half = ball;
  for (double& v : half.rho) v *= 0.5;
  CHECK_THROWS_AS(RadialCdf{half}, InputError);
}

TEST_CASE("radial ks") {
  const auto g = gaussian_cloud(20000, 1);
  const double ks = radial_ks(g, gaussian_radial_cdf);
  CHECK(ks <= dkw_bound(20000));
  const auto field = pde::RadialField::from_density(InitialDensity::gaussian(1.0), 2000, 10.0);
  CHECK(std::abs(radial_ks(g, field) - ks) <= 1e-3);
  CHECK(radial_ks(gaussian_cloud(20000, 1, 1.2), gaussian_radial_cdf) > dkw_bound(20000));
  CHECK(radial_ks(Positions{{0, 0, 1}}, [](double r) { return r >= 1.0 ? 1.0 : 0.0; }) == 1.0);
  CHECK_THROWS_AS(radial_ks(Positions{}, gaussian_radial_cdf), InputError);
  CHECK(dkw_bound(100) == doctest::Approx(0.1628));
}

TEST_CASE("one dimensional w1") {
  CHECK(w1_samples({0.0, 1.0}, {0.0, 1.0}) == 0.0);
  CHECK(w1_samples({0.0, 1.0}, {2.0, 3.0}) == doctest::Approx(2.0));
  CHECK(w1_samples({0.0}, {0.0, 1.0}) == doctest::Approx(0.5));
  CHECK(w1_samples({3.0, 1.0, 2.0}, {2.0, 3.0, 4.0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(w1_samples({}, {1.0}), InputError);
}

TEST_CASE("sliced w1") {
  const auto dirs = directions(64, 3);
  REQUIRE(dirs.size() == 64);
  for (const Vec3& d : dirs) CHECK(norm(d) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(directions(8, 3) == std::vector<Vec3>(dirs.begin(), dirs.begin() + 8));

  const auto a = gaussian_cloud(4000, 5);
  CHECK(sliced_w1(a, a, dirs) == 0.0);
  // Translation by v moves every projection by u.v; W1 is the mean of |u.v|.
  const Vec3 v{0.3, -0.1, 0.2};
  Positions b = a;
  for (auto& p : b) p += v;
  double expect = 0.0;
  for (const Vec3& u : dirs) expect += std::abs(dot(u, v));
  expect /= 64.0;
  CHECK(sliced_w1(a, b, dirs) == doctest::Approx(expect).epsilon(1e-10));
  CHECK(sliced_w1(a, b, dirs) == doctest::Approx(sliced_w1(b, a, dirs)).epsilon(1e-14));

  // Dilation by a factor c: W1 between projections of N(0,1) and N(0,c^2) is |c - 1| sqrt(2/pi).
  const auto field = pde::RadialField::from_density(InitialDensity::gaussian(1.0), 2000, 10.0);
  const auto big = gaussian_cloud(100000, 7, 1.5);
  CHECK(sliced_w1(big, field, dirs) == doctest::Approx(0.5 * std::sqrt(2.0 / kPi)).epsilon(0.03));
  const auto same = gaussian_cloud(100000, 7);
  CHECK(sliced_w1(same, field, dirs) <= 0.02);
  CHECK_THROWS_AS(sliced_w1(a, field, std::vector<Vec3>{}), InputError);
}

TEST_CASE("pair covariance") {
  const auto phi = weakform::TestFunction::gaussian_bump({0.5, 0, 0}, 0.8);
  std::vector<Positions> iid;
  for (std::uint64_t s = 0; s < 200; ++s) iid.push_back(gaussian_cloud(64, s));
  const auto c = pair_covariance(iid, phi);
  CHECK(c.seeds == 200);
  CAPTURE(c.estimate);
  CAPTURE(c.se);
  CHECK(std::abs(c.estimate) <= 3.0 * c.se);
  CHECK(c.se > 0.0);

  // Every particle of a cloud in the same place: the covariance is Var(phi(X)).
  std::vector<Positions> stuck;
  std::vector<double> vals;
  for (std::uint64_t s = 0; s < 200; ++s) {
    const Vec3 p = gaussian_cloud(1, s + 1000)[0];
    stuck.push_back(Positions(16, p));
    vals.push_back(phi.value(p));
  }
  double m = 0.0, q = 0.0;
  for (double v : vals) m += v / 200.0;
  for (double v : vals) q += (v - m) * (v - m) / 199.0;
  CHECK(pair_covariance(stuck, phi).estimate == doctest::Approx(q).epsilon(1e-10));

  CHECK_THROWS_AS(pair_covariance({iid.begin(), iid.begin() + 7}, phi), InputError);
  auto ragged = std::vector<Positions>(iid.begin(), iid.begin() + 8);
  ragged[3].pop_back();
  CHECK_THROWS_AS(pair_covariance(ragged, phi), InputError);
}

TEST_CASE("chaos report json") {
  ChaosReport r;
  r.n = 256;
  r.t = 0.25;
  r.pair_cov = {1e-3, 2e-3};
  r.pair_cov_se = {1e-4, 1e-4};
  r.seeds = 16;
  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("pair_cov").size() == 2);
}
