#pragma once

// Radially symmetric reference solver for
//
//   d_t rho = Laplace rho + div(rho grad h),   -Laplace h = rho,
//
// where the nonlocal field collapses to the Gauss law d_r h = -M(r) / (4 pi r^2).
// Cells are spherical shells on [0, R]; rho holds cell averages.

#include <cstddef>
#include <vector>

#include "mfcoulomb/density.hpp"

namespace mfc::pde {

struct RadialField {
  std::vector<double> r_edges;  // 0 = r_0 < ... < r_M = R
  std::vector<double> rho;      // M cell averages
  double t = 0.0;

  std::size_t cells() const { return rho.size(); }
  double center(std::size_t k) const { return 0.5 * (r_edges[k] + r_edges[k + 1]); }
  double volume(std::size_t k) const;
  double mass() const;
  double cell_mass(std::size_t k) const { return volume(k) * rho[k]; }
  double outer_radius() const { return r_edges.back(); }

  // Uniform grid with exact cell averages of rho0.
  static RadialField from_density(const InitialDensity& rho0, std::size_t cells, double outer_radius);
  static RadialField uniform_grid(std::size_t cells, double outer_radius);
};

// Throws InputError unless edges increase from 0 and rho is finite and >= 0.
void validate(const RadialField& field);

struct GaussField {
  std::vector<double> enclosed_mass;  // M(r) at every edge
  std::vector<double> h_prime;        // d_r h at every edge, 0 at r = 0
};

GaussField gauss_solve(const RadialField& field);

// Potential h at cell centres, consistent with gauss_solve by summation by parts.
std::vector<double> potential_at_centers(const RadialField& field);

// (1/2) int h rho. Equals (1/2) int |grad h|^2 over R^3 on the same grid.
double coulomb_energy(const RadialField& field);
// int |grad h|^2 over R^3, exterior tail M^2 / (4 pi R) included.
double field_energy_integral(const RadialField& field);

double entropy(const RadialField& field);      // int rho log rho
double fisher(const RadialField& field);       // int |grad rho|^2 / rho
double l2_squared(const RadialField& field);   // int rho^2

struct StepOptions {
  bool interaction = true;
  double cfl = 0.4;
};

// Largest dt allowed by dt <= cfl * min(dr^2 / 6, dr / max|h'|).
double max_stable_dt(const RadialField& field, const StepOptions& options = {});

// One explicit finite-volume step: centred diffusion, upwind advection with the
// outward velocity -h' >= 0, zero flux at both ends. Throws StepSizeError when
// dt exceeds max_stable_dt.
RadialField fp_step(const RadialField& field, double dt, const StepOptions& options = {});

struct GridParams {
  std::size_t cells = 1024;
  double outer_radius = 0.0;  // 0 selects r_cloud + 8 sqrt(2 T)
  std::size_t outputs = 64;   // output intervals on [0, T]
  StepOptions step;
  double blowup_factor = 1e3;  // sup-norm growth that trips the monitor
};

struct Series {
  std::vector<RadialField> frames;  // outputs + 1 frames, frames[0] at t = 0
  std::vector<double> energy;
  std::vector<double> entropy;
  std::vector<double> fisher;
  std::vector<double> l2;
  std::vector<double> leakage;  // mass in the outermost cell
  bool interaction = true;
  std::size_t steps = 0;
};

double default_outer_radius(const InitialDensity& rho0, double T);

// Throws SolverError if the blow-up monitor trips.
Series solve(const InitialDensity& rho0, double T, const GridParams& grid = {});
Series solve(const RadialField& initial, double T, const GridParams& grid);

// Exact heat semigroup e^{tau Laplace} applied to piecewise-constant radial data,
// evaluated at the cell centres of the same grid.
class RadialHeatSemigroup {
 public:
  explicit RadialHeatSemigroup(std::vector<double> r_edges);
  std::vector<double> apply(const std::vector<double>& values, double tau) const;

 private:
  std::vector<double> edges_;
};

// Divergence of rho grad h per cell (the Duhamel source term).
std::vector<double> interaction_divergence(const RadialField& field);

// L1 norm of rho(t) - [e^{t Laplace} rho_0 + int_0^t e^{(t-s) Laplace} div(rho grad h)(s) ds]
// at the final frame of the series, time integral by the trapezoid rule over frames.
double mild_residual(const Series& series, const RadialHeatSemigroup& heat);
double mild_residual(const Series& series);

double l1_distance(const RadialField& a, const RadialField& b);
// Average pairs of cells of a field with twice the resolution onto the coarse grid.
RadialField coarsen(const RadialField& fine);

}  // namespace mfc::pde
