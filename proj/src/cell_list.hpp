#pragma once

// Uniform-grid neighbour search used for fixed-radius queries.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mfcoulomb/common.hpp"

namespace mfc::detail {

class CellList {
 public:
  CellList(std::span<const Vec3> points, double cell_size) : points_(points), h_(cell_size) {
    if (points.empty()) return;
    lo_ = hi_ = points[0];
    for (const Vec3& p : points) {
      for (int a = 0; a < 3; ++a) {
        lo_[a] = std::min(lo_[a], p[a]);
        hi_[a] = std::max(hi_[a], p[a]);
      }
    }
    // Cap the grid so sparse clouds do not allocate huge arrays.
    const double cap = std::cbrt(8.0 * static_cast<double>(points.size()) + 64.0);
    for (int a = 0; a < 3; ++a) {
      const double extent = hi_[a] - lo_[a];
      dims_[a] = std::max<std::int64_t>(1, std::min<std::int64_t>(static_cast<std::int64_t>(extent / h_) + 1,
                                                                   static_cast<std::int64_t>(cap) + 1));
      inv_[a] = static_cast<double>(dims_[a]) / std::max(extent, 1e-300);
      if (extent == 0.0) inv_[a] = 0.0;
    }
    const std::size_t ncell = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
    start_.assign(ncell + 1, 0);
    cell_of_.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
      cell_of_[i] = flat(coord(points[i]));
      ++start_[cell_of_[i] + 1];
    }
    for (std::size_t c = 0; c < ncell; ++c) start_[c + 1] += start_[c];
    items_.resize(points.size());
    std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
    for (std::size_t i = 0; i < points.size(); ++i) items_[fill[cell_of_[i]]++] = i;
  }

  // Calls fn(j, |p - x_j|^2) for every stored point with |p - x_j| < radius.
  template <typename Fn>
  void for_each_within(const Vec3& p, double radius, Fn&& fn) const {
    if (points_.empty()) return;
    const double r2max = radius * radius;
    std::int64_t lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = clamp_axis(a, static_cast<std::int64_t>(std::floor((p[a] - radius - lo_[a]) * inv_[a])));
      hi[a] = clamp_axis(a, static_cast<std::int64_t>(std::floor((p[a] + radius - lo_[a]) * inv_[a])));
    }
    for (std::int64_t ix = lo[0]; ix <= hi[0]; ++ix) {
      for (std::int64_t iy = lo[1]; iy <= hi[1]; ++iy) {
        for (std::int64_t iz = lo[2]; iz <= hi[2]; ++iz) {
          const std::size_t c = static_cast<std::size_t>((ix * dims_[1] + iy) * dims_[2] + iz);
          for (std::size_t s = start_[c]; s < start_[c + 1]; ++s) {
            const std::size_t j = items_[s];
            const double r2 = norm2(p - points_[j]);
            if (r2 < r2max) fn(j, r2);
          }
        }
      }
    }
  }

 private:
  std::int64_t clamp_axis(int a, std::int64_t v) const { return std::clamp<std::int64_t>(v, 0, dims_[a] - 1); }

  std::array<std::int64_t, 3> coord(const Vec3& p) const {
    std::array<std::int64_t, 3> c{};
    for (int a = 0; a < 3; ++a) c[a] = clamp_axis(a, static_cast<std::int64_t>(std::floor((p[a] - lo_[a]) * inv_[a])));
    return c;
  }
  std::size_t flat(const std::array<std::int64_t, 3>& c) const {
    return static_cast<std::size_t>((c[0] * dims_[1] + c[1]) * dims_[2] + c[2]);
  }

  std::span<const Vec3> points_;
  double h_;
  Vec3 lo_{}, hi_{};
  std::int64_t dims_[3]{1, 1, 1};
  double inv_[3]{0, 0, 0};
  std::vector<std::size_t> start_, items_, cell_of_;
};

}  // namespace mfc::detail
