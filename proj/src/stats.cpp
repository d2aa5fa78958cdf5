#include "mfcoulomb/stats.hpp"

#include <algorithm>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "cell_list.hpp"
#include "mfcoulomb/io.hpp"

namespace mfc::stats {

const std::vector<std::string>& diagnostics_columns() {
  static const std::vector<std::string> cols{"t",      "energy", "energy_mollified", "entropy_est", "fisher_est",
                                             "m2",     "min_dist", "martingale",     "work"};
  return cols;
}

std::string diagnostics_header() {
  std::string s;
  for (const auto& c : diagnostics_columns()) {
    if (!s.empty()) s += ',';
    s += c;
  }
  return s;
}

std::string to_csv(const DiagnosticsRow& r) {
  std::string s;
  for (double v : {r.t, r.energy, r.energy_mollified, r.entropy_est, r.fisher_est, r.m2, r.min_dist, r.martingale, r.work}) {
    if (!s.empty()) s += ',';
    s += io::format_double(v);
  }
  return s;
}

DiagnosticsRow diagnostics_from_csv(const std::string& line) {
  std::vector<double> v;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) v.push_back(io::parse_double(cell));
  if (v.size() != diagnostics_columns().size()) throw InputError("diagnostics row: wrong column count");
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8]};
}

double empirical_energy(std::span<const Vec3> positions, const std::optional<kernel::KernelSpec>& mollified) {
  const std::size_t n = positions.size();
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec3 d = positions[i] - positions[j];
      row += mollified ? kernel::mollified_potential(d, *mollified) : kernel::coulomb_potential(d);
    }
    s += row;
  }
  // sum over i != j counts every unordered pair twice.
  return s / (static_cast<double>(n) * static_cast<double>(n));
}

PairSummary pair_summary(std::span<const Vec3> positions, const kernel::KernelSpec& spec) {
  const std::size_t n = positions.size();
  PairSummary out;
  double min_r2 = std::numeric_limits<double>::infinity();
  double exact = 0.0, moll = 0.0;
  const double eps2 = spec.epsilon() * spec.epsilon();
  for (std::size_t i = 0; i < n; ++i) {
    double rex = 0.0, rmo = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const Vec3 d = positions[i] - positions[j];
      const double r2 = norm2(d);
      min_r2 = std::min(min_r2, r2);
      if (r2 == 0.0) throw SingularityError("pair_summary: coincident particles");
      const double g = 1.0 / (kFourPi * std::sqrt(r2));
      rex += g;
      rmo += r2 >= eps2 ? g : kernel::mollified_potential(d, spec);
    }
    exact += rex;
    moll += rmo;
  }
  const double nn = static_cast<double>(n) * static_cast<double>(n);
  out.energy = n < 2 ? 0.0 : exact / nn;
  out.energy_mollified = n < 2 ? 0.0 : moll / nn;
  out.min_dist = std::sqrt(min_r2);
  return out;
}

double continuum_energy(const pde::RadialField& rho) {
  pde::validate(rho);
  return pde::coulomb_energy(rho);
}

namespace {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;
using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;
using BValue = std::pair<BPoint, std::size_t>;

double scale_of(std::span<const Vec3> s) {
  double m = 0.0;
  for (const Vec3& p : s) m = std::max({m, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
  return m > 0.0 ? m : 1.0;
}

// k-th neighbour distance of every point; `duplicate` is set when some point
// has a coincident neighbour.
std::vector<double> knn_distances(std::span<const Vec3> pts, int k, bool& duplicate) {
  duplicate = false;
  std::vector<BValue> values;
  values.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) values.emplace_back(BPoint(pts[i].x, pts[i].y, pts[i].z), i);
  const bgi::rtree<BValue, bgi::rstar<16>> tree(values.begin(), values.end());
  std::vector<double> dist(pts.size());
  std::vector<BValue> hits;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    hits.clear();
    tree.query(bgi::nearest(values[i].first, static_cast<unsigned>(k + 1)), std::back_inserter(hits));
    // Self is among the hits; the k-th other point is the largest distance.
    double dmax = 0.0;
    int others = 0;
    bool self_seen = false;
    std::vector<double> d;
    d.reserve(hits.size());
    for (const auto& h : hits) {
      if (!self_seen && h.second == i) {
        self_seen = true;
        continue;
      }
      d.push_back(bg::distance(h.first, values[i].first));
      ++others;
    }
    std::sort(d.begin(), d.end());
    if (!d.empty() && d[0] == 0.0) duplicate = true;
    dmax = others >= k ? d[static_cast<std::size_t>(k - 1)] : (d.empty() ? 0.0 : d.back());
    dist[i] = dmax;
  }
  return dist;
}

}  // namespace

double entropy_knn(std::span<const Vec3> samples, const KnnOptions& options) {
  const std::size_t n = samples.size();
  if (options.k < 1 || n <= static_cast<std::size_t>(options.k)) {
    throw InputError("entropy_knn: need N > k >= 1");
  }
  bool duplicate = false;
  std::vector<double> dist = knn_distances(samples, options.k, duplicate);
  if (duplicate) {
    if (options.strict) throw InputError("entropy_knn: duplicate sample points");
    std::cerr << "warning: entropy_knn: duplicate points jittered\n";
    Positions jittered(samples.begin(), samples.end());
    const double amp = 1e-9 * scale_of(samples);
    for (std::size_t i = 0; i < n; ++i) {
      // Deterministic low-discrepancy offsets.
      const double a = static_cast<double>(i) * 0.6180339887498949;
      const double b = static_cast<double>(i) * 0.7548776662466927;
      const double c = static_cast<double>(i) * 0.5698402909980532;
      jittered[i] += amp * Vec3{a - std::floor(a) - 0.5, b - std::floor(b) - 0.5, c - std::floor(c) - 0.5};
    }
    dist = knn_distances(jittered, options.k, duplicate);
  }
  double sum_log = 0.0;
  for (double d : dist) sum_log += std::log(d);
  const double nd = static_cast<double>(n);
  const double log_ball = std::log(4.0 * kPi / 3.0);
  const double differential = boost::math::digamma(nd) - boost::math::digamma(static_cast<double>(options.k)) +
                              log_ball + 3.0 * sum_log / nd;
  return -differential;
}

double fisher_kde(std::span<const Vec3> samples, const BandwidthRule& rule) {
  const std::size_t n = samples.size();
  if (n < 1000) throw InputError("fisher_kde: need at least 1000 samples");
  const double nd = static_cast<double>(n);

  Vec3 mean{};
  for (const Vec3& p : samples) mean += p;
  mean *= 1.0 / nd;
  double cov[3][3]{};
  for (const Vec3& p : samples) {
    const Vec3 d = p - mean;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov[a][b] += d[a] * d[b];
  }
  for (auto& row : cov)
    for (double& v : row) v /= nd - 1.0;
  double sd[3];
  for (int a = 0; a < 3; ++a) sd[a] = std::sqrt(cov[a][a]);
  if (!(sd[0] > 0.0 && sd[1] > 0.0 && sd[2] > 0.0)) throw InputError("fisher_kde: degenerate sample cloud");
  double c[3][3];
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) c[a][b] = cov[a][b] / (sd[a] * sd[b]);
  const double det = c[0][0] * (c[1][1] * c[2][2] - c[1][2] * c[2][1]) - c[0][1] * (c[1][0] * c[2][2] - c[1][2] * c[2][0]) +
                     c[0][2] * (c[1][0] * c[2][1] - c[1][1] * c[2][0]);
  if (!(det > 1e-9)) throw InputError("fisher_kde: degenerate (rank-deficient) sample cloud");

  double h[3];
  for (int a = 0; a < 3; ++a) h[a] = rule.factor * sd[a] * std::pow(nd, rule.exponent);
  Positions u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 d = samples[i] - mean;
    u[i] = {d.x / h[0], d.y / h[1], d.z / h[2]};
  }
  const detail::CellList cells(u, 0.5 * rule.cutoff);
  const std::size_t stride = std::max<std::size_t>(1, (n + rule.max_eval - 1) / std::max<std::size_t>(1, rule.max_eval));
  double acc = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < n; i += stride) {
    double w = 0.0;
    Vec3 g{};
    cells.for_each_within(u[i], rule.cutoff, [&](std::size_t j, double r2) {
      if (j == i) return;
      const double k = std::exp(-0.5 * r2);
      w += k;
      g += k * (u[j] - u[i]);
    });
    if (w <= 0.0) continue;
    const Vec3 grad{g.x / (w * h[0]), g.y / (w * h[1]), g.z / (w * h[2])};
    acc += norm2(grad);
    ++used;
  }
  if (used == 0) throw InputError("fisher_kde: no evaluation point has neighbours");
  return acc / static_cast<double>(used);
}

double second_moment(std::span<const Vec3> samples) {
  if (samples.empty()) throw InputError("second_moment: no samples");
  double s = 0.0;
  for (const Vec3& p : samples) s += norm2(p);
  return s / static_cast<double>(samples.size());
}

MeanSe mean_se(std::span<const double> values) {
  MeanSe r;
  r.n = values.size();
  if (values.empty()) return r;
  double s = 0.0;
  for (double v : values) s += v;
  r.mean = s / static_cast<double>(r.n);
  if (r.n < 2) return r;
  double q = 0.0;
  for (double v : values) q += (v - r.mean) * (v - r.mean);
  r.se = std::sqrt(q / static_cast<double>(r.n - 1) / static_cast<double>(r.n));
  return r;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InputError("median: no values");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile: no values");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
  const std::size_t k = static_cast<std::size_t>(std::floor(pos));
  if (k + 1 >= values.size()) return values.back();
  const double f = pos - static_cast<double>(k);
  return values[k] + f * (values[k + 1] - values[k]);
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("loglog_slope: need two or more matching points");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw InputError("loglog_slope: values must be positive");
    mx += std::log(x[k]);
    my += std::log(y[k]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double dx = std::log(x[k]) - mx;
    sxy += dx * (std::log(y[k]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
  if (n == 0) throw InputError("wilson_interval: no trials");
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(k) / nd;
  const double z2 = z * z;
  const double centre = (p + z2 / (2.0 * nd)) / (1.0 + z2 / nd);
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / (1.0 + z2 / nd);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace mfc::stats
