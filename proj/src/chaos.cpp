#include "mfcoulomb/chaos.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "mfcoulomb/io.hpp"
#include "mfcoulomb/rng.hpp"

namespace mfc::chaos {

RadialCdf::RadialCdf(const pde::RadialField& field) : edges_(field.r_edges), rho_(field.rho) {
  pde::validate(field);
  const double mass = field.mass();
  if (std::abs(mass - 1.0) > 1e-6) {
    throw InputError("radial reference is not normalised: mass = " + io::format_double(mass));
  }
  for (double& v : rho_) v /= mass;
  const std::size_t m = rho_.size();
  cum_.assign(m + 1, 0.0);
  s2_.assign(m + 1, 0.0);
  s3_.assign(m + 1, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const double a = edges_[k], b = edges_[k + 1];
    cum_[k + 1] = cum_[k] + (4.0 * kPi / 3.0) * rho_[k] * (b * b * b - a * a * a);
  }
  for (std::size_t k = m; k-- > 0;) {
    const double a = edges_[k], b = edges_[k + 1];
    s3_[k] = s3_[k + 1] + rho_[k] * (b * b * b - a * a * a) / 3.0;
    s2_[k] = s2_[k + 1] + rho_[k] * (b * b - a * a) / 2.0;
  }
}

double RadialCdf::operator()(double r) const {
  if (r <= 0.0) return 0.0;
  if (r >= edges_.back()) return 1.0;
  const std::size_t k = static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), r) - edges_.begin()) - 1;
  const double a = edges_[k];
  return std::min(1.0, cum_[k] + (4.0 * kPi / 3.0) * rho_[k] * (r * r * r - a * a * a));
}

double RadialCdf::projected_tail(double z) const {
  if (z < 0.0) return 1.0 - projected_tail(-z);
  if (z >= edges_.back()) return 0.0;
  // P(Z > z) = 2 pi int_z^inf r rho(r) (r - z) dr.
  const std::size_t k = static_cast<std::size_t>(std::upper_bound(edges_.begin(), edges_.end(), z) - edges_.begin()) - 1;
  const double b = edges_[k + 1];
  const double part = rho_[k] * ((b * b * b - z * z * z) / 3.0 - z * (b * b - z * z) / 2.0);
  return 2.0 * kPi * (part + s3_[k + 1] - z * s2_[k + 1]);
}

double RadialCdf::projected_cdf(double z) const { return 1.0 - projected_tail(z); }

double radial_ks(std::span<const Vec3> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw InputError("radial_ks: no samples");
  std::vector<double> r(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) r[i] = norm(samples[i]);
  std::sort(r.begin(), r.end());
  const double n = static_cast<double>(r.size());
  double d = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double f = cdf(r[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return std::clamp(d, 0.0, 1.0);
}

double radial_ks(std::span<const Vec3> samples, const pde::RadialField& rho) {
  const RadialCdf cdf(rho);
  return radial_ks(samples, [&](double r) { return cdf(r); });
}

std::vector<Vec3> directions(std::size_t count, std::uint64_t seed) {
  std::vector<Vec3> out;
  out.reserve(count);
  for (std::uint64_t d = 0; out.size() < count; ++d) {
    const auto g = rng::normal3(seed, d, 0, rng::Purpose::direction);
    const Vec3 v{g[0], g[1], g[2]};
    const double len = norm(v);
    if (len > 1e-12) out.push_back((1.0 / len) * v);
  }
  return out;
}

double w1_samples(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("w1_samples: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a[0], b[0]);
  double acc = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = j >= b.size() || (i < a.size() && a[i] <= b[j]) ? a[i] : b[j];
    acc += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    prev = next;
    while (i < a.size() && a[i] == next) ++i;
    while (j < b.size() && b[j] == next) ++j;
  }
  return acc;
}

double sliced_w1(std::span<const Vec3> a, std::span<const Vec3> b, std::span<const Vec3> dirs) {
  if (dirs.empty()) throw InputError("sliced_w1: no directions");
  double acc = 0.0;
  std::vector<double> pa(a.size()), pb(b.size());
  for (const Vec3& u : dirs) {
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = dot(u, a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = dot(u, b[i]);
    acc += w1_samples(pa, pb);
  }
  return acc / static_cast<double>(dirs.size());
}

namespace {

// int_p^q |c - G| with G the projected CDF; G is a cubic on each piece, so
// two-point Gauss-Legendre is exact once intervals stay inside one cell and the
// sign change is split off.
double abs_gap(const RadialCdf& cdf, double c, double p, double q) {
  if (q <= p) return 0.0;
  auto gl = [&](double lo, double hi) {
    const double h = 0.5 * (hi - lo), m = 0.5 * (hi + lo), o = h / std::sqrt(3.0);
    return h * ((c - cdf.projected_cdf(m - o)) + (c - cdf.projected_cdf(m + o)));
  };
  const double gp = cdf.projected_cdf(p) - c, gq = cdf.projected_cdf(q) - c;
  if (gp < 0.0 && gq > 0.0) {
    double lo = p, hi = q;
    for (int it = 0; it < 80 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
      const double mid = 0.5 * (lo + hi);
      (cdf.projected_cdf(mid) - c < 0.0 ? lo : hi) = mid;
    }
    const double x = 0.5 * (lo + hi);
    return std::abs(gl(p, x)) + std::abs(gl(x, q));
  }
  return std::abs(gl(p, q));
}

}  // namespace

double sliced_w1(std::span<const Vec3> samples, const pde::RadialField& rho, std::span<const Vec3> dirs) {
  if (samples.empty()) throw InputError("sliced_w1: no samples");
  if (dirs.empty()) throw InputError("sliced_w1: no directions");
  const RadialCdf cdf(rho);
  const double big_r = cdf.outer_radius();
  std::vector<double> breaks;
  for (double e : rho.r_edges) {
    breaks.push_back(e);
    if (e > 0.0) breaks.push_back(-e);
  }
  std::sort(breaks.begin(), breaks.end());
  const double n = static_cast<double>(samples.size());
  double acc = 0.0;
  std::vector<double> z(samples.size());
  for (const Vec3& u : dirs) {
    for (std::size_t i = 0; i < samples.size(); ++i) z[i] = dot(u, samples[i]);
    std::sort(z.begin(), z.end());
    double lo = std::min(-big_r, z.front());
    const double hi = std::max(big_r, z.back());
    std::size_t iz = 0, ib = 0;
    double w = 0.0;
    while (iz < z.size() && z[iz] <= lo) ++iz;
    while (ib < breaks.size() && breaks[ib] <= lo) ++ib;
    while (lo < hi) {
      const double nz = iz < z.size() ? z[iz] : hi;
      const double nb = ib < breaks.size() ? breaks[ib] : hi;
      const double next = std::min({nz, nb, hi});
      w += abs_gap(cdf, static_cast<double>(iz) / n, lo, next);
      lo = next;
      while (iz < z.size() && z[iz] <= lo) ++iz;
      while (ib < breaks.size() && breaks[ib] <= lo) ++ib;
    }
    acc += w;
  }
  return acc / static_cast<double>(dirs.size());
}

namespace {

double cov_estimate(const std::vector<double>& y, const std::vector<double>& s2, double n, std::size_t skip) {
  double m = 0.0, ms = 0.0;
  std::size_t cnt = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (k == skip) continue;
    m += y[k];
    ms += s2[k];
    ++cnt;
  }
  m /= static_cast<double>(cnt);
  ms /= static_cast<double>(cnt);
  double v = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (k == skip) continue;
    v += (y[k] - m) * (y[k] - m);
  }
  v /= static_cast<double>(cnt - 1);
  return v - ms / (n - 1.0);
}

}  // namespace

PairCovariance pair_covariance(const std::vector<Positions>& clouds, const weakform::TestFunction& phi) {
  if (clouds.size() < 8) throw InputError("pair_covariance: need at least 8 seeds, got " + std::to_string(clouds.size()));
  const std::size_t n = clouds[0].size();
  if (n < 2) throw InputError("pair_covariance: need N >= 2");
  std::vector<double> y, s2;
  for (const auto& c : clouds) {
    if (c.size() != n) throw InputError("pair_covariance: clouds differ in size");
    double m = 0.0;
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) m += (v[i] = phi.value(c[i]));
    m /= static_cast<double>(n);
    double q = 0.0;
    for (double x : v) q += (x - m) * (x - m);
    y.push_back(m);
    s2.push_back(q / static_cast<double>(n));
  }
  const double nd = static_cast<double>(n);
  PairCovariance out;
  out.seeds = clouds.size();
  out.estimate = cov_estimate(y, s2, nd, clouds.size());
  std::vector<double> jk(clouds.size());
  double jm = 0.0;
  for (std::size_t k = 0; k < clouds.size(); ++k) jm += (jk[k] = cov_estimate(y, s2, nd, k));
  jm /= static_cast<double>(jk.size());
  double q = 0.0;
  for (double v : jk) q += (v - jm) * (v - jm);
  out.se = std::sqrt(q * static_cast<double>(jk.size() - 1) / static_cast<double>(jk.size()));
  return out;
}

std::string ChaosReport::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = "chaos";
  j["N"] = n;
  j["t"] = t;
  j["radial_ks"] = radial_ks;
  j["sliced_w1"] = sliced_w1;
  j["pair_cov"] = pair_cov;
  j["pair_cov_se"] = pair_cov_se;
  j["seeds"] = seeds;
  return j.dump();
}

}  // namespace mfc::chaos
