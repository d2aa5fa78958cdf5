#include "mfcoulomb/pde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "mfcoulomb/common.hpp"

namespace mfc::pde {

double RadialField::volume(std::size_t k) const {
  const double a = r_edges[k], b = r_edges[k + 1];
  return kFourPi / 3.0 * (b * b * b - a * a * a);
}

double RadialField::mass() const {
  double m = 0.0;
  for (std::size_t k = 0; k < cells(); ++k) m += cell_mass(k);
  return m;
}

RadialField RadialField::uniform_grid(std::size_t cells, double outer_radius) {
  if (cells < 2) throw InputError("radial grid: need at least 2 cells");
  if (!(outer_radius > 0.0) || !std::isfinite(outer_radius)) throw InputError("radial grid: R must be > 0");
  RadialField f;
  f.r_edges.resize(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) {
    f.r_edges[k] = outer_radius * static_cast<double>(k) / static_cast<double>(cells);
  }
  f.rho.assign(cells, 0.0);
  return f;
}

RadialField RadialField::from_density(const InitialDensity& rho0, std::size_t cells, double outer_radius) {
  RadialField f = uniform_grid(cells, outer_radius);
  double prev = 0.0;
  for (std::size_t k = 0; k < cells; ++k) {
    const double next = rho0.enclosed_mass(f.r_edges[k + 1]);
    f.rho[k] = std::max(0.0, next - prev) / f.volume(k);
    prev = next;
  }
  return f;
}

void validate(const RadialField& field) {
  if (field.r_edges.size() != field.rho.size() + 1 || field.rho.empty()) {
    throw InputError("radial field: edges and values do not match");
  }
  if (field.r_edges.front() != 0.0) throw InputError("radial field: first edge must be 0");
  for (std::size_t k = 1; k < field.r_edges.size(); ++k) {
    if (!(field.r_edges[k] > field.r_edges[k - 1])) throw InputError("radial field: edges must increase");
  }
  for (double v : field.rho) {
    if (!std::isfinite(v) || v < 0.0) throw InputError("radial field: density must be finite and >= 0");
  }
}

GaussField gauss_solve(const RadialField& field) {
  const std::size_t m = field.cells();
  GaussField g;
  g.enclosed_mass.assign(m + 1, 0.0);
  g.h_prime.assign(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) g.enclosed_mass[k + 1] = g.enclosed_mass[k] + field.cell_mass(k);
  for (std::size_t e = 1; e <= m; ++e) {
    const double r = field.r_edges[e];
    g.h_prime[e] = -g.enclosed_mass[e] / (kFourPi * r * r);
  }
  return g;
}

std::vector<double> potential_at_centers(const RadialField& field) {
  const std::size_t m = field.cells();
  const GaussField g = gauss_solve(field);
  std::vector<double> h(m);
  h[m - 1] = g.enclosed_mass[m] / (kFourPi * field.center(m - 1));
  for (std::size_t k = m - 1; k-- > 0;) {
    h[k] = h[k + 1] - (field.center(k + 1) - field.center(k)) * g.h_prime[k + 1];
  }
  return h;
}

double coulomb_energy(const RadialField& field) {
  const std::vector<double> h = potential_at_centers(field);
  double e = 0.0;
  for (std::size_t k = 0; k < field.cells(); ++k) e += field.cell_mass(k) * h[k];
  return 0.5 * e;
}

double field_energy_integral(const RadialField& field) {
  const std::size_t m = field.cells();
  const GaussField g = gauss_solve(field);
  double s = 0.0;
  for (std::size_t e = 1; e < m; ++e) {
    const double r = field.r_edges[e];
    const double hp = g.h_prime[e];
    s += (field.center(e) - field.center(e - 1)) * hp * hp * kFourPi * r * r;
  }
  // Exterior of the last centre, where all mass is enclosed.
  const double total = g.enclosed_mass[m];
  return s + total * total / (kFourPi * field.center(m - 1));
}

double entropy(const RadialField& field) {
  double h = 0.0;
  for (std::size_t k = 0; k < field.cells(); ++k) {
    const double v = field.rho[k];
    if (v > 0.0) h += field.volume(k) * v * std::log(v);
  }
  return h;
}

double fisher(const RadialField& field) {
  // 4 int |grad sqrt(rho)|^2, differenced between neighbouring centres.
  double s = 0.0;
  for (std::size_t e = 1; e < field.cells(); ++e) {
    const double r = field.r_edges[e];
    const double dc = field.center(e) - field.center(e - 1);
    const double d = std::sqrt(field.rho[e]) - std::sqrt(field.rho[e - 1]);
    s += kFourPi * r * r * d * d / dc;
  }
  return 4.0 * s;
}

double l2_squared(const RadialField& field) {
  double s = 0.0;
  for (std::size_t k = 0; k < field.cells(); ++k) s += field.volume(k) * field.rho[k] * field.rho[k];
  return s;
}

namespace {

double min_spacing(const RadialField& field) {
  double dr = field.r_edges[1] - field.r_edges[0];
  for (std::size_t k = 1; k + 1 < field.r_edges.size(); ++k) dr = std::min(dr, field.r_edges[k + 1] - field.r_edges[k]);
  return dr;
}

}  // namespace

double max_stable_dt(const RadialField& field, const StepOptions& options) {
  const double dr = min_spacing(field);
  double limit = dr * dr / 6.0;
  if (options.interaction) {
    const GaussField g = gauss_solve(field);
    double vmax = 0.0;
    for (double hp : g.h_prime) vmax = std::max(vmax, -hp);
    if (vmax > 0.0) limit = std::min(limit, dr / vmax);
  }
  return options.cfl * limit;
}

RadialField fp_step(const RadialField& field, double dt, const StepOptions& options) {
  if (!(dt > 0.0)) throw StepSizeError("fp_step: dt must be > 0");
  const double limit = max_stable_dt(field, options);
  if (dt > limit * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "fp_step: dt = " << dt << " violates the CFL bound " << limit;
    throw StepSizeError(os.str());
  }
  const std::size_t m = field.cells();
  std::vector<double> flux(m + 1, 0.0);  // A_e * J_e, outward positive
  std::vector<double> hp;
  if (options.interaction) hp = gauss_solve(field).h_prime;
  for (std::size_t e = 1; e < m; ++e) {
    const double r = field.r_edges[e];
    const double area = kFourPi * r * r;
    const double dc = field.center(e) - field.center(e - 1);
    double j = -(field.rho[e] - field.rho[e - 1]) / dc;
    if (options.interaction) j += -hp[e] * field.rho[e - 1];  // velocity -h' >= 0, upwind from the inside
    flux[e] = area * j;
  }
  RadialField next = field;
  for (std::size_t k = 0; k < m; ++k) {
    next.rho[k] = field.rho[k] + dt * (flux[k] - flux[k + 1]) / field.volume(k);
  }
  next.t = field.t + dt;
  return next;
}

double default_outer_radius(const InitialDensity& rho0, double T) {
  return rho0.support_radius(1e-10) + 8.0 * std::sqrt(2.0 * std::max(T, 0.0));
}

Series solve(const InitialDensity& rho0, double T, const GridParams& grid) {
  const double R = grid.outer_radius > 0.0 ? grid.outer_radius : default_outer_radius(rho0, T);
  return solve(RadialField::from_density(rho0, grid.cells, R), T, grid);
}

Series solve(const RadialField& initial, double T, const GridParams& grid) {
  validate(initial);
  if (!(T >= 0.0)) throw InputError("pde solve: T must be >= 0");
  if (grid.outputs == 0) throw InputError("pde solve: need at least one output interval");

  Series s;
  s.interaction = grid.step.interaction;
  auto record = [&](const RadialField& f) {
    s.frames.push_back(f);
    s.energy.push_back(coulomb_energy(f));
    s.entropy.push_back(entropy(f));
    s.fisher.push_back(fisher(f));
    s.l2.push_back(l2_squared(f));
    s.leakage.push_back(f.cell_mass(f.cells() - 1));
  };

  RadialField cur = initial;
  const double sup0 = *std::max_element(cur.rho.begin(), cur.rho.end());
  record(cur);
  const double t0 = cur.t;
  for (std::size_t out = 1; out <= grid.outputs; ++out) {
    const double target = t0 + T * static_cast<double>(out) / static_cast<double>(grid.outputs);
    while (cur.t < target) {
      const double remaining = target - cur.t;
      double dt = max_stable_dt(cur, grid.step);
      // Avoid a sliver step just before the output time.
      if (remaining <= dt * 1.000001) {
        dt = remaining;
      } else if (remaining < 2.0 * dt) {
        dt = 0.5 * remaining;
      }
      cur = fp_step(cur, dt, grid.step);
      ++s.steps;
      if (remaining == dt) cur.t = target;
    }
    const double sup = *std::max_element(cur.rho.begin(), cur.rho.end());
    if (!std::isfinite(sup) || sup > grid.blowup_factor * sup0) {
      std::ostringstream os;
      os << "pde solve: sup norm grew from " << sup0 << " to " << sup << " by t = " << cur.t;
      throw SolverError(os.str());
    }
    record(cur);
  }
  return s;
}

RadialHeatSemigroup::RadialHeatSemigroup(std::vector<double> r_edges) : edges_(std::move(r_edges)) {
  if (edges_.size() < 2) throw InputError("heat semigroup: need at least one cell");
}

std::vector<double> RadialHeatSemigroup::apply(const std::vector<double>& values, double tau) const {
  const std::size_t m = edges_.size() - 1;
  if (values.size() != m) throw InputError("heat semigroup: value count does not match the grid");
  if (tau <= 0.0) return values;
  const double sigma = std::sqrt(2.0 * tau);
  const double window = 10.0 * sigma;
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * kPi);
  auto Phi = [&](double z) { return 0.5 * std::erfc(-z * inv_sqrt2); };
  auto phi = [&](double z) { return inv_sqrt2pi * std::exp(-0.5 * z * z); };

  // r u(r) solves the 1D heat equation with odd reflection at r = 0:
  //   u(t, r) = (1/r) int_0^inf s u0(s) [G(r - s) - G(r + s)] ds.
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double r = 0.5 * (edges_[i] + edges_[i + 1]);
    const auto lo_it = std::lower_bound(edges_.begin(), edges_.end(), r - window);
    std::size_t k0 = lo_it == edges_.begin() ? 0 : static_cast<std::size_t>(lo_it - edges_.begin()) - 1;
    double acc = 0.0;
    for (std::size_t k = k0; k < m && edges_[k] <= r + window; ++k) {
      const double v = values[k];
      if (v == 0.0) continue;
      const double a = edges_[k], b = edges_[k + 1];
      const double za = (a - r) / sigma, zb = (b - r) / sigma;
      double part = r * (Phi(zb) - Phi(za)) - sigma * (phi(zb) - phi(za));
      const double ya = (a + r) / sigma, yb = (b + r) / sigma;
      if (ya < 12.0) part += sigma * (phi(yb) - phi(ya)) + r * (Phi(yb) - Phi(ya));
      acc += v * part;
    }
    out[i] = acc / r;
  }
  return out;
}

std::vector<double> interaction_divergence(const RadialField& field) {
  const std::size_t m = field.cells();
  const std::vector<double> hp = gauss_solve(field).h_prime;
  std::vector<double> flux(m + 1, 0.0);  // A rho h' at edges, centred rho
  for (std::size_t e = 1; e < m; ++e) {
    const double r = field.r_edges[e];
    flux[e] = kFourPi * r * r * 0.5 * (field.rho[e] + field.rho[e - 1]) * hp[e];
  }
  std::vector<double> d(m);
  for (std::size_t k = 0; k < m; ++k) d[k] = (flux[k + 1] - flux[k]) / field.volume(k);
  return d;
}

double mild_residual(const Series& series, const RadialHeatSemigroup& heat) {
  if (series.frames.empty()) throw InputError("mild_residual: empty series");
  const RadialField& first = series.frames.front();
  const RadialField& last = series.frames.back();
  const double t = last.t;
  std::vector<double> pred = heat.apply(first.rho, t - first.t);
  if (series.interaction) {
    const std::size_t n = series.frames.size();
    for (std::size_t q = 0; q < n; ++q) {
      double w = 0.0;
      if (q > 0) w += 0.5 * (series.frames[q].t - series.frames[q - 1].t);
      if (q + 1 < n) w += 0.5 * (series.frames[q + 1].t - series.frames[q].t);
      if (w == 0.0) continue;
      const std::vector<double> src = interaction_divergence(series.frames[q]);
      const std::vector<double> evolved = heat.apply(src, t - series.frames[q].t);
      for (std::size_t k = 0; k < pred.size(); ++k) pred[k] += w * evolved[k];
    }
  }
  double l1 = 0.0;
  for (std::size_t k = 0; k < last.cells(); ++k) l1 += last.volume(k) * std::abs(last.rho[k] - pred[k]);
  return l1;
}

double mild_residual(const Series& series) {
  if (series.frames.empty()) throw InputError("mild_residual: empty series");
  return mild_residual(series, RadialHeatSemigroup(series.frames.front().r_edges));
}

double l1_distance(const RadialField& a, const RadialField& b) {
  if (a.r_edges.size() != b.r_edges.size()) throw InputError("l1_distance: fields live on different grids");
  for (std::size_t k = 0; k < a.r_edges.size(); ++k) {
    if (std::abs(a.r_edges[k] - b.r_edges[k]) > 1e-12 * a.r_edges.back()) {
      throw InputError("l1_distance: fields live on different grids");
    }
  }
  double s = 0.0;
  for (std::size_t k = 0; k < a.cells(); ++k) s += a.volume(k) * std::abs(a.rho[k] - b.rho[k]);
  return s;
}

RadialField coarsen(const RadialField& fine) {
  if (fine.cells() % 2 != 0) throw InputError("coarsen: cell count must be even");
  RadialField c;
  c.t = fine.t;
  const std::size_t m = fine.cells() / 2;
  c.r_edges.resize(m + 1);
  c.rho.resize(m);
  for (std::size_t k = 0; k <= m; ++k) c.r_edges[k] = fine.r_edges[2 * k];
  for (std::size_t k = 0; k < m; ++k) {
    c.rho[k] = (fine.cell_mass(2 * k) + fine.cell_mass(2 * k + 1)) / c.volume(k);
  }
  return c;
}

}  // namespace mfc::pde
