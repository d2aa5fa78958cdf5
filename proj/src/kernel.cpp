#include "mfcoulomb/kernel.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <string>
#include <thread>

namespace mfc::kernel {

KernelSpec::KernelSpec(double epsilon) : epsilon_(epsilon) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw InputError("kernel: epsilon must be finite and > 0, got " + std::to_string(epsilon));
  }
}

double bump_density(double s) {
  s = std::abs(s);
  if (s >= 1.0) return 0.0;
  const double w = 1.0 - s * s;
  return kBumpNorm * w * w * w;
}

double mass_profile(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  const double u = s * s;
  const double p = 315.0 / 48.0 + u * (-189.0 / 16.0 + u * (135.0 / 16.0 - u * (35.0 / 16.0)));
  return u * s * p;
}

double mass_profile_derivative(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return kFourPi * s * s * bump_density(s);
}

double mollifier(const Vec3& x, const KernelSpec& spec) {
  const double eps = spec.epsilon();
  return bump_density(norm(x) / eps) / (eps * eps * eps);
}

double coulomb_potential(const Vec3& x) {
  const double r2 = norm2(x);
  if (r2 == 0.0) throw SingularityError("coulomb_potential: evaluated at the origin");
  return 1.0 / (kFourPi * std::sqrt(r2));
}

Vec3 coulomb_force(const Vec3& x) {
  const double r2 = norm2(x);
  if (r2 == 0.0) throw SingularityError("coulomb_force: evaluated at the origin");
  return far_force_factor(r2) * x;
}

Vec3 mollified_force(const Vec3& x, const KernelSpec& spec) {
  const double eps = spec.epsilon();
  const double r2 = norm2(x);
  if (r2 >= eps * eps) return far_force_factor(r2) * x;
  return core_force_factor(r2, 1.0 / (eps * eps), 1.0 / (kFourPi * eps * eps * eps)) * x;
}

double mollified_potential(const Vec3& x, const KernelSpec& spec) {
  const double eps = spec.epsilon();
  const double r2 = norm2(x);
  if (r2 >= eps * eps) return 1.0 / (kFourPi * std::sqrt(r2));
  // g_eps(r) = m(s) / (4 pi r) + (1/eps) int_s^1 t J(t) dt, the second term being
  // c (1 - s^2)^4 / 8.
  const double u = r2 / (eps * eps);
  const double p = 315.0 / 48.0 + u * (-189.0 / 16.0 + u * (135.0 / 16.0 - u * (35.0 / 16.0)));
  const double w = 1.0 - u;
  const double w2 = w * w;
  return (u * p / kFourPi + kBumpNorm * w2 * w2 / 8.0) / eps;
}

namespace {

void check_finite(std::span<const Vec3> positions) {
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!is_finite(positions[i])) {
      throw InputError("pairwise_forces: non-finite position at index " + std::to_string(i));
    }
  }
}

template <typename Fn>
void for_rows(std::size_t n, unsigned workers, Fn&& fn) {
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n == 0 ? 1 : n)));
  if (workers == 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

Positions direct_sum(std::span<const Vec3> pos, const KernelSpec& spec, unsigned workers) {
  const std::size_t n = pos.size();
  std::vector<double> xs(n), ys(n), zs(n);
  for (std::size_t j = 0; j < n; ++j) {
    xs[j] = pos[j].x;
    ys[j] = pos[j].y;
    zs[j] = pos[j].z;
  }
  const double eps = spec.epsilon();
  const double eps2 = eps * eps;
  const double inv_eps2 = 1.0 / eps2;
  const double inv_4pe3 = 1.0 / (kFourPi * eps2 * eps);
  const double inv_n = 1.0 / static_cast<double>(n);

  Positions out(n);
  for_rows(n, workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const double xi = xs[i], yi = ys[i], zi = zs[i];
      double ax = 0.0, ay = 0.0, az = 0.0;
      // The j == i term has r2 = 0 and falls into the core branch, where the
      // factor is finite and multiplies a zero separation.
      for (std::size_t j = 0; j < n; ++j) {
        const double dx = xi - xs[j];
        const double dy = yi - ys[j];
        const double dz = zi - zs[j];
        const double r2 = dx * dx + dy * dy + dz * dz;
        const double q = r2 >= eps2 ? far_force_factor(r2) : core_force_factor(r2, inv_eps2, inv_4pe3);
        ax += q * dx;
        ay += q * dy;
        az += q * dz;
      }
      out[i] = {ax * inv_n, ay * inv_n, az * inv_n};
    }
  });
  return out;
}

// Monopole Barnes-Hut octree. A cell is summarised by its centre of mass only
// when every particle in it is at least eps from the target, so the exact
// Coulomb kernel applies to each member.
class Octree {
 public:
  struct Node {
    Vec3 lo, hi;  // tight bounding box
    Vec3 com;
    std::size_t first = 0, count = 0;
    std::array<int, 8> child{-1, -1, -1, -1, -1, -1, -1, -1};
    bool leaf = true;
  };

  Octree(std::span<const Vec3> pos, std::size_t leaf_size) : pos_(pos), leaf_size_(leaf_size) {
    order_.resize(pos.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * pos.size() / std::max<std::size_t>(1, leaf_size) + 16);
    if (!pos.empty()) build(0, pos.size(), 0);
  }

  Vec3 field_at(std::size_t target, const KernelSpec& spec, double theta) const {
    const Vec3 xt = pos_[target];
    const double eps = spec.epsilon();
    Vec3 acc{};
    std::vector<int> stack{0};
    while (!stack.empty()) {
      const Node& nd = nodes_[static_cast<std::size_t>(stack.back())];
      stack.pop_back();
      if (nd.leaf) {
        for (std::size_t k = nd.first; k < nd.first + nd.count; ++k) {
          const std::size_t j = order_[k];
          if (j == target) continue;
          acc += mollified_force(xt - pos_[j], spec);
        }
        continue;
      }
      const double size = std::max({nd.hi.x - nd.lo.x, nd.hi.y - nd.lo.y, nd.hi.z - nd.lo.z});
      const Vec3 d = xt - nd.com;
      const double dist = norm(d);
      if (box_distance(xt, nd) >= eps && size < theta * dist) {
        acc += static_cast<double>(nd.count) * (far_force_factor(norm2(d)) * d);
        continue;
      }
      for (int c : nd.child) {
        if (c >= 0) stack.push_back(c);
      }
    }
    return acc;
  }

 private:
  static double box_distance(const Vec3& p, const Node& nd) {
    double s = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double v = std::max({nd.lo[k] - p[k], 0.0, p[k] - nd.hi[k]});
      s += v * v;
    }
    return std::sqrt(s);
  }

  int build(std::size_t first, std::size_t count, int depth) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Node nd;
    nd.first = first;
    nd.count = count;
    nd.lo = nd.hi = pos_[order_[first]];
    Vec3 sum{};
    for (std::size_t k = first; k < first + count; ++k) {
      const Vec3& p = pos_[order_[k]];
      for (int a = 0; a < 3; ++a) {
        nd.lo[a] = std::min(nd.lo[a], p[a]);
        nd.hi[a] = std::max(nd.hi[a], p[a]);
      }
      sum += p;
    }
    nd.com = (1.0 / static_cast<double>(count)) * sum;
    const bool degenerate = nd.lo == nd.hi;
    if (count > leaf_size_ && depth < 48 && !degenerate) {
      nd.leaf = false;
      const Vec3 mid = 0.5 * (nd.lo + nd.hi);
      auto octant = [&](std::size_t j) {
        const Vec3& p = pos_[j];
        return (p.x > mid.x ? 1 : 0) | (p.y > mid.y ? 2 : 0) | (p.z > mid.z ? 4 : 0);
      };
      auto begin = order_.begin() + static_cast<std::ptrdiff_t>(first);
      auto end = begin + static_cast<std::ptrdiff_t>(count);
      std::stable_sort(begin, end, [&](std::size_t a, std::size_t b) { return octant(a) < octant(b); });
      std::size_t k = first;
      for (int o = 0; o < 8; ++o) {
        std::size_t m = k;
        while (m < first + count && octant(order_[m]) == o) ++m;
        if (m > k) nd.child[static_cast<std::size_t>(o)] = build(k, m - k, depth + 1);
        k = m;
      }
    }
    nodes_[static_cast<std::size_t>(id)] = nd;
    return id;
  }

  std::span<const Vec3> pos_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace

Positions pairwise_forces(std::span<const Vec3> positions, const KernelSpec& spec,
                          const PairwiseOptions& options) {
  if (positions.empty()) throw InputError("pairwise_forces: need at least one particle");
  check_finite(positions);
  if (options.method == SumMethod::direct) return direct_sum(positions, spec, options.workers);

  const Octree tree(positions, std::max<std::size_t>(1, options.leaf_size));
  const std::size_t n = positions.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  Positions out(n);
  for_rows(n, options.workers, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = inv_n * tree.field_at(i, spec, options.theta);
  });
  return out;
}

}  // namespace mfc::kernel
