#pragma once

#include "reifenberg/core.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

namespace reifenberg {

// Uniform grid hash over points in R^n.  Queries return indices in ascending
// order so results do not depend on insertion or thread schedule.
class UniformGrid {
 public:
  UniformGrid() = default;
  UniformGrid(const std::vector<Vec>& points, double cell_size) : cell_(cell_size) {
    if (!(cell_ > 0.0)) throw GeometryError("UniformGrid: cell size must be positive");
    points_ = &points;
    for (std::size_t i = 0; i < points.size(); ++i) {
      cells_[key_of(points[i])].push_back(static_cast<int>(i));
    }
  }

  // Indices of points within `radius` of x (closed ball).
  std::vector<int> query_ball(const Vec& x, double radius) const {
    std::vector<int> out;
    if (!points_ || points_->empty()) return out;
    const int n = static_cast<int>(x.size());
    std::array<std::int64_t, kMaxDim> lo{}, hi{};
    std::int64_t span = 1;
    for (int a = 0; a < n; ++a) {
      lo[a] = cell_index(x(a) - radius);
      hi[a] = cell_index(x(a) + radius);
      span *= (hi[a] - lo[a] + 1);
    }
    if (span > static_cast<std::int64_t>(cells_.size()) * 4 + 64) {
      // query radius much larger than the populated region: scan all points
      for (std::size_t i = 0; i < points_->size(); ++i) {
        if (((*points_)[i] - x).norm() <= radius) out.push_back(static_cast<int>(i));
      }
      std::sort(out.begin(), out.end());
      return out;
    }
    std::array<std::int64_t, kMaxDim> idx = lo;
    for (;;) {
      auto it = cells_.find(hash_cell(idx, n));
      if (it != cells_.end()) {
        for (int i : it->second) {
          if (((*points_)[i] - x).norm() <= radius) out.push_back(i);
        }
      }
      int a = 0;
      for (; a < n; ++a) {
        if (++idx[a] <= hi[a]) break;
        idx[a] = lo[a];
      }
      if (a == n) break;
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  bool empty() const { return !points_ || points_->empty(); }

 private:
  std::int64_t cell_index(double v) const {
    return static_cast<std::int64_t>(std::floor(v / cell_));
  }
  std::uint64_t key_of(const Vec& p) const {
    std::array<std::int64_t, kMaxDim> idx{};
    for (int a = 0; a < p.size(); ++a) idx[a] = cell_index(p(a));
    return hash_cell(idx, static_cast<int>(p.size()));
  }
  static std::uint64_t hash_cell(const std::array<std::int64_t, kMaxDim>& idx, int n) {
    std::uint64_t h = 1469598103934665603ull;
    for (int a = 0; a < n; ++a) {
      std::uint64_t v = static_cast<std::uint64_t>(idx[a]);
      for (int byte = 0; byte < 8; ++byte) {
        h ^= (v >> (8 * byte)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
    return h;
  }

  double cell_ = 1.0;
  const std::vector<Vec>* points_ = nullptr;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace reifenberg
