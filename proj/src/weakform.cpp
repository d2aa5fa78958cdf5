#include "mfcoulomb/weakform.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "cell_list.hpp"
#include "mfcoulomb/io.hpp"

namespace mfc::weakform {

TestFunction TestFunction::gaussian_bump(const Vec3& center, double width) {
  if (!(width > 0.0)) throw InputError("gaussian_bump: width must be > 0");
  return TestFunction(Kind::gaussian_bump, center, width, 0.0);
}

TestFunction TestFunction::polynomial_taper(const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw InputError("polynomial_taper: radius must be > 0");
  return TestFunction(Kind::polynomial_taper, center, radius, 0.0);
}

TestFunction TestFunction::constant(double value) { return TestFunction(Kind::constant, {}, 1.0, value); }

TestFunction TestFunction::linear(const Vec3& a, double b) { return TestFunction(Kind::linear, a, 1.0, b); }

double TestFunction::value(const Vec3& x) const {
  switch (kind_) {
    case Kind::gaussian_bump:
      return std::exp(-0.5 * norm2(x - c_) / (s_ * s_));
    case Kind::polynomial_taper: {
      const double u = norm2(x - c_) / (s_ * s_);
      if (u >= 1.0) return 0.0;
      const double w = 1.0 - u;
      return w * w * w;
    }
    case Kind::constant:
      return b_;
    case Kind::linear:
      return dot(c_, x) + b_;
  }
  return 0.0;
}

Vec3 TestFunction::gradient(const Vec3& x) const {
  switch (kind_) {
    case Kind::gaussian_bump: {
      const Vec3 d = x - c_;
      const double w2 = s_ * s_;
      return (-std::exp(-0.5 * norm2(d) / w2) / w2) * d;
    }
    case Kind::polynomial_taper: {
      const Vec3 d = x - c_;
      const double r2 = s_ * s_;
      const double u = norm2(d) / r2;
      if (u >= 1.0) return {};
      const double w = 1.0 - u;
      return (-6.0 * w * w / r2) * d;
    }
    case Kind::constant:
      return {};
    case Kind::linear:
      return c_;
  }
  return {};
}

double TestFunction::laplacian(const Vec3& x) const {
  switch (kind_) {
    case Kind::gaussian_bump: {
      const double w2 = s_ * s_;
      const double q = norm2(x - c_) / w2;
      return (q - 3.0) / w2 * std::exp(-0.5 * q);
    }
    case Kind::polynomial_taper: {
      const double r2 = s_ * s_;
      const double u = norm2(x - c_) / r2;
      if (u >= 1.0) return 0.0;
      const double w = 1.0 - u;
      return (-18.0 * w * w + 24.0 * u * w) / r2;
    }
    case Kind::constant:
    case Kind::linear:
      return 0.0;
  }
  return 0.0;
}

double TestFunction::hessian_bound() const {
  switch (kind_) {
    case Kind::gaussian_bump:
      return 1.0 / (s_ * s_);
    case Kind::polynomial_taper:
      return 6.0 / (s_ * s_);
    default:
      return 0.0;
  }
}

std::string TestFunction::describe() const {
  auto v = [](const Vec3& p) {
    return "(" + io::format_double(p.x) + "," + io::format_double(p.y) + "," + io::format_double(p.z) + ")";
  };
  switch (kind_) {
    case Kind::gaussian_bump:
      return "gaussian_bump" + v(c_) + "w=" + io::format_double(s_);
    case Kind::polynomial_taper:
      return "polynomial_taper" + v(c_) + "R=" + io::format_double(s_);
    case Kind::constant:
      return "constant(" + io::format_double(b_) + ")";
    case Kind::linear:
      return "linear" + v(c_) + "+" + io::format_double(b_);
  }
  return "";
}

std::vector<TestFunction> test_battery(double scale) {
  if (!(scale > 0.0)) throw InputError("test_battery: scale must be > 0");
  const double p = 0.5 * (1.0 + std::sqrt(5.0));
  const double inv = 1.0 / std::sqrt(1.0 + p * p);
  const Vec3 verts[5] = {{0, 1, p}, {1, p, 0}, {p, 0, 1}, {0, -1, p}, {-1, p, 0}};
  std::vector<TestFunction> out;
  for (int k = 0; k < 5; ++k) {
    out.push_back(TestFunction::gaussian_bump((scale * inv) * verts[k], scale * (k % 2 == 0 ? 0.5 : 1.0)));
  }
  return out;
}

namespace {

Vec3 force(const Vec3& d, const KernelChoice& k) {
  return k ? kernel::mollified_force(d, *k) : kernel::coulomb_force(d);
}

double core_radius(const KernelChoice& k) { return k ? k->epsilon() : 0.0; }

bool same_kernel(const KernelChoice& a, const KernelChoice& b) {
  if (!a && !b) return true;
  if (a && b) return a->epsilon() == b->epsilon();
  return false;
}

std::size_t frame_index(const sde::Trajectory& traj, double t) {
  if (traj.frames.empty()) throw InputError("weak form: trajectory has no frames");
  for (std::size_t k = 0; k < traj.frames.size(); ++k) {
    if (std::abs(traj.frames[k].t - t) <= 1e-12 * std::max(1.0, std::abs(t))) return k;
  }
  throw InputError("weak form: t = " + io::format_double(t) + " is not a stored frame time");
}

// Trapezoid over frames 0..last of a per-frame integrand.
template <typename Fn>
double trapezoid(const sde::Trajectory& traj, std::size_t last, Fn&& integrand) {
  double acc = 0.0;
  double prev = integrand(traj.frames[0]);
  for (std::size_t k = 1; k <= last; ++k) {
    const double cur = integrand(traj.frames[k]);
    acc += 0.5 * (prev + cur) * (traj.frames[k].t - traj.frames[k - 1].t);
    prev = cur;
  }
  return acc;
}

double boundary_term(const sde::Trajectory& traj, const TestFunction& phi, std::size_t last) {
  const auto& x0 = traj.frames[0].positions;
  const auto& xt = traj.frames[last].positions;
  double s = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) s += phi.value(xt[i]) - phi.value(x0[i]);
  return s / static_cast<double>(x0.size());
}

}  // namespace

double symmetrized_pair_integrand(const Vec3& x, const Vec3& y, const TestFunction& phi, const KernelChoice& kernel) {
  const Vec3 d = x - y;
  if (kernel && norm2(d) == 0.0) return 0.0;
  return dot(phi.gradient(x) - phi.gradient(y), force(d, kernel));
}

double residual_gap(const sde::Trajectory& traj, const TestFunction& phi, const KernelChoice& a, const KernelChoice& b,
                    double t) {
  const std::size_t last = frame_index(traj, t);
  if (last == 0 || same_kernel(a, b)) return 0.0;
  const double radius = std::max(core_radius(a), core_radius(b));
  const double n = static_cast<double>(traj.n);
  auto integrand = [&](const sde::Frame& f) {
    const auto& x = f.positions;
    std::vector<Vec3> grads(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) grads[i] = phi.gradient(x[i]);
    const detail::CellList cells(x, radius);
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double row = 0.0;
      cells.for_each_within(x[i], radius, [&](std::size_t j, double) {
        if (j <= i) return;
        const Vec3 d = x[i] - x[j];
        row += dot(grads[i] - grads[j], force(d, b) - force(d, a));
      });
      s += row;
    }
    return s / (n * n);
  };
  return trapezoid(traj, last, integrand);
}

WeakResidualReport weak_residual(const sde::Trajectory& traj, const TestFunction& phi, const KernelChoice& kernel,
                                 double t) {
  const std::size_t last = frame_index(traj, t);
  WeakResidualReport rep;
  rep.n = traj.n;
  rep.epsilon = core_radius(kernel);
  rep.t = t;
  rep.seed = traj.seed;
  rep.phi = phi.describe();
  if (last == 0) return rep;
  if (traj.frames.size() < 2) throw InputError("weak form: need at least two frames");

  const double n = static_cast<double>(traj.n);
  auto integrand = [&](const sde::Frame& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      s += dot(phi.gradient(f.positions[i]), f.drift[i]) + phi.laplacian(f.positions[i]);
    }
    return s / n;
  };
  const double k_sim = boundary_term(traj, phi, last) - trapezoid(traj, last, integrand);
  const KernelChoice sim = kernel::KernelSpec(traj.epsilon);
  const double gap = residual_gap(traj, phi, kernel, sim, t);
  rep.decomposition.ito_martingale_part = k_sim;
  rep.decomposition.mollification_gap_part = gap;
  rep.value = k_sim + gap;
  return rep;
}

double weak_residual_direct(const sde::Trajectory& traj, const TestFunction& phi, const KernelChoice& kernel, double t) {
  const std::size_t last = frame_index(traj, t);
  if (last == 0) return 0.0;
  const double n = static_cast<double>(traj.n);
  auto integrand = [&](const sde::Frame& f) {
    const auto& x = f.positions;
    double pair = 0.0, lap = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      lap += phi.laplacian(x[i]);
      for (std::size_t j = 0; j < x.size(); ++j) {
        if (j == i) continue;
        pair += symmetrized_pair_integrand(x[i], x[j], phi, kernel);
      }
    }
    return 0.5 * pair / (n * n) + lap / n;
  };
  return boundary_term(traj, phi, last) - trapezoid(traj, last, integrand);
}

std::vector<MartingalePoint> martingale_track(const sde::Trajectory& traj) {
  if (traj.martingale.empty() || traj.martingale.size() != traj.frames.size()) {
    throw UnavailableError("martingale_track: Brownian increments were not retained for this trajectory");
  }
  std::vector<MartingalePoint> out;
  for (std::size_t k = 0; k < traj.frames.size(); ++k) out.push_back({traj.frames[k].t, traj.martingale[k]});
  return out;
}

double work_integral(const sde::Trajectory& traj, const kernel::KernelSpec& spec, double t) {
  const std::size_t last = frame_index(traj, t);
  if (last == 0 || traj.n < 2) return 0.0;
  const bool stored = spec.epsilon() == traj.epsilon;
  auto integrand = [&](const sde::Frame& f) {
    const Positions drift = stored ? Positions{} : kernel::pairwise_forces(f.positions, spec);
    const Positions& d = stored ? f.drift : drift;
    double s = 0.0;
    for (const Vec3& v : d) s += norm2(v);
    return s / static_cast<double>(d.size());
  };
  return trapezoid(traj, last, integrand);
}

double work_integral(const sde::Trajectory& traj, double t) {
  return work_integral(traj, kernel::KernelSpec(traj.epsilon), t);
}

std::string WeakResidualReport::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "weak_residual";
  j["N"] = n;
  j["epsilon"] = epsilon;
  j["t"] = t;
  j["seed"] = seed;
  j["phi"] = phi;
  j["value"] = value;
  j["ito_martingale_part"] = decomposition.ito_martingale_part;
  j["mollification_gap_part"] = decomposition.mollification_gap_part;
  return j.dump();
}

}  // namespace mfc::weakform
