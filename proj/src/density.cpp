#include "mfcoulomb/density.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mfcoulomb/common.hpp"

namespace mfc {

namespace {

// int_{a}^{b} 4 pi r^p rho(r) dr for rho linear on [r0, r1], evaluated on a sub-interval.
double linear_moment(double r0, double r1, double rho0, double rho1, double a, double b, int p) {
  const double slope = (rho1 - rho0) / (r1 - r0);
  const double c0 = rho0 - slope * r0;
  const auto prim = [&](double r) {
    return c0 * std::pow(r, p + 1) / (p + 1) + slope * std::pow(r, p + 2) / (p + 2);
  };
  return kFourPi * (prim(b) - prim(a));
}

}  // namespace

InitialDensity::InitialDensity(Kind kind) : kind_(std::move(kind)) {
  if (const auto* g = std::get_if<GaussianDensity>(&kind_)) {
    if (!(g->sigma > 0.0) || !std::isfinite(g->sigma)) throw InputError("gaussian density: sigma must be > 0");
  } else if (const auto* u = std::get_if<UniformBallDensity>(&kind_)) {
    if (!(u->radius > 0.0) || !std::isfinite(u->radius)) throw InputError("uniform_ball density: radius must be > 0");
  } else {
    auto& t = std::get<RadialTableDensity>(kind_);
    if (t.r.size() < 2 || t.r.size() != t.rho.size()) {
      throw InputError("radial_table density: need >= 2 nodes with matching r and rho");
    }
    if (t.r.front() != 0.0) throw InputError("radial_table density: first node must be r = 0");
    for (std::size_t k = 0; k < t.r.size(); ++k) {
      if (!std::isfinite(t.r[k]) || !std::isfinite(t.rho[k]) || t.rho[k] < 0.0) {
        throw InputError("radial_table density: values must be finite and rho >= 0");
      }
      if (k > 0 && !(t.r[k] > t.r[k - 1])) throw InputError("radial_table density: r must be strictly increasing");
    }
    double mass = 0.0;
    for (std::size_t k = 0; k + 1 < t.r.size(); ++k) {
      mass += linear_moment(t.r[k], t.r[k + 1], t.rho[k], t.rho[k + 1], t.r[k], t.r[k + 1], 2);
    }
    if (!(std::abs(mass - 1.0) <= 1e-3)) {
      std::ostringstream os;
      os << "radial_table density: mass under 4 pi r^2 dr is " << mass << ", expected 1";
      throw InputError(os.str());
    }
    for (double& v : t.rho) v /= mass;
    table_mass_.assign(t.r.size(), 0.0);
    for (std::size_t k = 0; k + 1 < t.r.size(); ++k) {
      table_mass_[k + 1] =
          table_mass_[k] + linear_moment(t.r[k], t.r[k + 1], t.rho[k], t.rho[k + 1], t.r[k], t.r[k + 1], 2);
    }
  }
}

double InitialDensity::density(double r) const {
  r = std::abs(r);
  if (const auto* g = std::get_if<GaussianDensity>(&kind_)) {
    const double s2 = g->sigma * g->sigma;
    return std::exp(-0.5 * r * r / s2) / std::pow(2.0 * kPi * s2, 1.5);
  }
  if (const auto* u = std::get_if<UniformBallDensity>(&kind_)) {
    return r <= u->radius ? 3.0 / (kFourPi * u->radius * u->radius * u->radius) : 0.0;
  }
  const auto& t = std::get<RadialTableDensity>(kind_);
  if (r >= t.r.back()) return 0.0;
  const auto it = std::upper_bound(t.r.begin(), t.r.end(), r);
  const std::size_t k = static_cast<std::size_t>(it - t.r.begin()) - 1;
  const double w = (r - t.r[k]) / (t.r[k + 1] - t.r[k]);
  return (1.0 - w) * t.rho[k] + w * t.rho[k + 1];
}

double InitialDensity::enclosed_mass(double r) const {
  if (r <= 0.0) return 0.0;
  if (const auto* g = std::get_if<GaussianDensity>(&kind_)) {
    const double z = r / g->sigma;
    return std::erf(z / std::sqrt(2.0)) - std::sqrt(2.0 / kPi) * z * std::exp(-0.5 * z * z);
  }
  if (const auto* u = std::get_if<UniformBallDensity>(&kind_)) {
    const double s = std::min(1.0, r / u->radius);
    return s * s * s;
  }
  const auto& t = std::get<RadialTableDensity>(kind_);
  if (r >= t.r.back()) return 1.0;
  const auto it = std::upper_bound(t.r.begin(), t.r.end(), r);
  const std::size_t k = static_cast<std::size_t>(it - t.r.begin()) - 1;
  return table_mass_[k] + linear_moment(t.r[k], t.r[k + 1], t.rho[k], t.rho[k + 1], t.r[k], r, 2);
}

double InitialDensity::support_radius(double tail) const {
  if (const auto* u = std::get_if<UniformBallDensity>(&kind_)) return u->radius;
  if (const auto* t = std::get_if<RadialTableDensity>(&kind_)) return t->r.back();
  const double sigma = std::get<GaussianDensity>(kind_).sigma;
  double r = sigma;
  while (1.0 - enclosed_mass(r) > tail && r < 60.0 * sigma) r += 0.25 * sigma;
  return r;
}

double InitialDensity::radius_quantile(double u) const {
  if (!(u > 0.0 && u < 1.0)) throw InputError("radius_quantile: u must lie in (0, 1)");
  if (const auto* b = std::get_if<UniformBallDensity>(&kind_)) return b->radius * std::cbrt(u);
  double lo = 0.0, hi = support_radius(1e-15);
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (enclosed_mass(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double InitialDensity::second_moment() const {
  if (const auto* g = std::get_if<GaussianDensity>(&kind_)) return 3.0 * g->sigma * g->sigma;
  if (const auto* u = std::get_if<UniformBallDensity>(&kind_)) return 0.6 * u->radius * u->radius;
  const auto& t = std::get<RadialTableDensity>(kind_);
  double m = 0.0;
  for (std::size_t k = 0; k + 1 < t.r.size(); ++k) {
    m += linear_moment(t.r[k], t.r[k + 1], t.rho[k], t.rho[k + 1], t.r[k], t.r[k + 1], 4);
  }
  return m;
}

std::string InitialDensity::describe() const {
  std::ostringstream os;
  if (const auto* g = std::get_if<GaussianDensity>(&kind_)) {
    os << "gaussian(" << g->sigma << ")";
  } else if (const auto* u = std::get_if<UniformBallDensity>(&kind_)) {
    os << "uniform_ball(" << u->radius << ")";
  } else {
    os << "radial_table(" << std::get<RadialTableDensity>(kind_).r.size() << " nodes)";
  }
  return os.str();
}

}  // namespace mfc
