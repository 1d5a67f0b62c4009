#pragma once

#include "reifenberg/beta.hpp"
#include "reifenberg/cloud.hpp"
#include "reifenberg/grid.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace reifenberg {

// Multiscale net {x_{j,k}}: per level k = 0..K a maximal separated subset of
// the kept points, scale rule r_k = 10^-k.  sep_scale is the separation in
// units of r_k (1 for plain nets; larger when centers will be re-selected).
struct MultiscaleNet {
  std::vector<std::vector<Vec>> levels;
  double sep_scale = 1.0;

  int depth() const { return static_cast<int>(levels.size()) - 1; }
  Eigen::Index ambient_dim() const {
    for (const auto& lv : levels)
      if (!lv.empty()) return lv.front().size();
    return 0;
  }
  std::size_t center_count() const {
    std::size_t c = 0;
    for (const auto& lv : levels) c += lv.size();
    return c;
  }
};

// Per-level grid indices over net centers; rebuildable from the net.
class LevelIndex {
 public:
  LevelIndex() = default;
  explicit LevelIndex(const MultiscaleNet& net) {
    grids_.reserve(net.levels.size());
    for (std::size_t k = 0; k < net.levels.size(); ++k) {
      grids_.emplace_back(net.levels[k], scale_radius(static_cast<int>(k)));
    }
  }
  const UniformGrid& level(int k) const { return grids_.at(k); }
  // Centers of level k within `radius` of y.
  std::vector<int> near(int k, const Vec& y, double radius) const {
    return grids_.at(k).query_ball(y, radius);
  }

 private:
  std::vector<UniformGrid> grids_;
};

// Greedy maximal separated subset, scanned in lexicographic coordinate order
// (ties by input index) so the result is reproducible everywhere.
inline std::vector<int> max_separated_subset(const std::vector<Vec>& pts,
                                             const std::vector<int>& candidates, double sep) {
  std::vector<int> order = candidates;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Vec &pa = pts[a], &pb = pts[b];
    for (Eigen::Index c = 0; c < pa.size(); ++c) {
      if (pa(c) != pb(c)) return pa(c) < pb(c);
    }
    return a < b;
  });
  std::vector<int> accepted;
  std::vector<Vec> acc_pts;
  // incremental cell hash with cell size = sep
  std::map<std::vector<std::int64_t>, std::vector<int>> cells;
  auto cell_of = [&](const Vec& p) {
    std::vector<std::int64_t> c(p.size());
    for (Eigen::Index a = 0; a < p.size(); ++a)
      c[a] = static_cast<std::int64_t>(std::floor(p(a) / sep));
    return c;
  };
  for (int i : order) {
    const Vec& p = pts[i];
    auto cell = cell_of(p);
    bool ok = true;
    std::vector<std::int64_t> nb(cell.size());
    std::function<void(std::size_t)> visit = [&](std::size_t axis) {
      if (!ok) return;
      if (axis == cell.size()) {
        auto it = cells.find(nb);
        if (it == cells.end()) return;
        for (int j : it->second) {
          if ((acc_pts[j] - p).norm() < sep) {
            ok = false;
            return;
          }
        }
        return;
      }
      for (std::int64_t d = -1; d <= 1 && ok; ++d) {
        nb[axis] = cell[axis] + d;
        visit(axis + 1);
      }
    };
    visit(0);
    if (ok) {
      cells[cell].push_back(static_cast<int>(acc_pts.size()));
      acc_pts.push_back(p);
      accepted.push_back(i);
    }
  }
  return accepted;
}

// Build the net: per level, a greedy maximal (sep_scale * r_k)-separated
// subset of {p : keep(p, k)}.  With nested keep sets, the stopping-time
// nesting x_{j,k} in V_{k-1}^2 holds by maximality.
inline MultiscaleNet build_net(const PointCloud& cloud, int depth,
                               const std::function<bool(int, int)>& keep = nullptr,
                               double sep_scale = 1.0) {
  MultiscaleNet net;
  net.sep_scale = sep_scale;
  net.levels.resize(depth + 1);
  if (cloud.empty()) return net;
  for (int k = 0; k <= depth; ++k) {
    std::vector<int> candidates;
    candidates.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      if (!keep || keep(static_cast<int>(i), k)) candidates.push_back(static_cast<int>(i));
    }
    auto chosen = max_separated_subset(cloud.points, candidates, sep_scale * scale_radius(k));
    net.levels[k].reserve(chosen.size());
    for (int i : chosen) net.levels[k].push_back(cloud.points[i]);
  }
  return net;
}

enum class FitMode { L2, L1, MINIMAX };

// Coherent collection of balls and planes: the net, one d-plane through each
// center, the model plane, and the flatness budget.
struct Ccbp {
  MultiscaleNet net;
  std::vector<std::vector<AffinePlane>> planes;  // same shape as net.levels
  AffinePlane sigma0;
  double eps = 0.1;

  int depth() const { return net.depth(); }
  const Vec& center(int k, int j) const { return net.levels[k][j]; }
  const AffinePlane& plane(int k, int j) const { return planes[k][j]; }
};

// Fit one plane per net center from the cloud in B(x_{j,k}, 110 r_k).
// In L1 mode the center is re-selected among nearby cloud points by the
// Chebyshev rule and the plane translated through it; the re-selection
// radius is capped so the separation and nesting conditions survive.
inline Ccbp fit_ccbp(const PointCloud& cloud, const MultiscaleNet& net, const AffinePlane& sigma0,
                     FitMode mode, double eps = 0.1, int threads = 1) {
  Ccbp ccbp;
  ccbp.net = net;
  ccbp.sigma0 = sigma0;
  ccbp.eps = eps;
  ccbp.planes.resize(net.levels.size());
  const int d = cloud.intrinsic_dim;

  double resel = 0.0;
  if (mode == FitMode::L1) {
    resel = std::min({0.32, 0.5 * (net.sep_scale - 1.0), (2.0 - net.sep_scale) / 1.1});
    resel = std::max(resel, 0.0);
  }

  UniformGrid cloud_grid(cloud.points, std::max(110.0 * scale_radius(net.depth()), 1e-12));

  for (int k = 0; k <= net.depth(); ++k) {
    const double rk = scale_radius(k);
    auto& lv = ccbp.net.levels[k];
    ccbp.planes[k].resize(lv.size());
    std::string error;
    std::mutex error_mutex;
    parallel_for(lv.size(), threads, [&](std::size_t j) {
      try {
        Vec x = lv[j];
        auto idx = cloud_grid.query_ball(x, 110.0 * rk);
        if (static_cast<int>(idx.size()) < d + 1) {
          throw NumericError("fit_ccbp: degenerate ball at (j=" + std::to_string(j) +
                             ", k=" + std::to_string(k) + "): fewer than d+1 points");
        }
        AffinePlane fitted;
        switch (mode) {
          case FitMode::L2: {
            auto pca = detail::weighted_pca(cloud, idx, d);
            fitted = AffinePlane(pca.centroid, pca.directions, true);
            break;
          }
          case FitMode::L1: {
            fitted = fit_plane_l1(cloud, Ball(x, 110.0 * rk)).plane;
            break;
          }
          case FitMode::MINIMAX: {
            fitted = fit_plane_minimax(cloud, x, 110.0 * rk).plane;
            break;
          }
        }
        if (mode == FitMode::L1 && resel > 0.0) {
          auto near = cloud_grid.query_ball(x, resel * rk);
          double best = std::numeric_limits<double>::infinity();
          for (int i : near) {
            double dist = fitted.distance(cloud.points[i]);
            if (dist < best) {
              best = dist;
              x = cloud.points[i];
            }
          }
          lv[j] = x;
        }
        ccbp.planes[k][j] = fitted.translated_through(lv[j]);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (error.empty()) error = e.what();
      }
    });
    if (!error.empty()) throw NumericError(error);
  }
  return ccbp;
}

// ---------------------------------------------------------------------------
// Audits

struct ConditionReport {
  std::string name;
  double worst = 0.0;
  double threshold = 0.0;
  bool pass = true;
  int k = -1, i = -1, j = -1;  // location of the worst violation
  double worst_angle = 0.0;    // largest principal angle at the worst pair

  void consider(double value, double thr, int kk, int ii, int jj, double angle = 0.0) {
    if (value > worst) {
      worst = value;
      k = kk;
      i = ii;
      j = jj;
      worst_angle = angle;
    }
    threshold = thr;
    pass = worst <= thr;
  }
};

struct AuditReport {
  std::vector<ConditionReport> conditions;
  double eps = 0.0;
  double eps_audit = 0.0;
  bool pass = true;

  const ConditionReport* find(const std::string& name) const {
    for (const auto& c : conditions)
      if (c.name == name) return &c;
    return nullptr;
  }
  void finish() {
    pass = true;
    for (const auto& c : conditions) pass = pass && c.pass;
  }
};

inline double plane_angle(const AffinePlane& a, const AffinePlane& b) {
  return std::asin(std::min(1.0, grassmann_distance(a.frame(), b.frame())));
}

// Audit of the CCBP conditions: per-level separation, cross-level nesting,
// base proximity of the coarsest centers, same-level and cross-level plane
// coherence, the model-plane link, and planes-through-centers.  Coherence
// distances are
// compared against eps_audit = c_audit * eps.
inline AuditReport audit_ccbp(const Ccbp& ccbp, double c_audit = 25.0) {
  AuditReport report;
  report.eps = ccbp.eps;
  report.eps_audit = c_audit * ccbp.eps;
  const double ea = report.eps_audit;
  const int depth = ccbp.depth();
  LevelIndex index(ccbp.net);

  ConditionReport sep{"separation"};
  ConditionReport nest{"nesting"};
  ConditionReport base{"base_distance"};
  ConditionReport same{"same_level"};
  ConditionReport link{"model_link"};
  ConditionReport cross{"cross_level"};
  ConditionReport through{"planes_through_centers"};

  for (int k = 0; k <= depth; ++k) {
    const double rk = scale_radius(k);
    const auto& centers = ccbp.net.levels[k];
    for (std::size_t j = 0; j < centers.size(); ++j) {
      const Vec& x = centers[j];
      // worst separation deficit in units of r_k
      for (int i : index.near(k, x, rk)) {
        if (i == static_cast<int>(j)) continue;
        double deficit = 1.0 - (centers[i] - x).norm() / rk;
        sep.consider(deficit, 1e-12, k, i, static_cast<int>(j));
      }
      // nesting: a parent center within 2 r_{k-1}
      if (k >= 1) {
        double rk1 = scale_radius(k - 1);
        auto up = index.near(k - 1, x, 2.0 * rk1);
        if (up.empty()) {
          double best = std::numeric_limits<double>::infinity();
          for (const Vec& c : ccbp.net.levels[k - 1]) best = std::min(best, (c - x).norm());
          nest.consider(best / rk1, 2.0 + 1e-12, k, -1, static_cast<int>(j));
        } else {
          double best = std::numeric_limits<double>::infinity();
          for (int i : up) best = std::min(best, (ccbp.net.levels[k - 1][i] - x).norm());
          nest.consider(best / rk1, 2.0 + 1e-12, k, -1, static_cast<int>(j));
        }
      }
      // planes through their centers
      through.consider(ccbp.planes[k][j].distance(x), 1e-12, k, -1, static_cast<int>(j));
      // base proximity and the model-plane link
      if (k == 0) {
        double dist0 = ccbp.sigma0.distance(x);
        base.consider(dist0, ea, 0, -1, static_cast<int>(j));
        if (dist0 <= 2.0) {
          double dd = plane_local_distance(ccbp.planes[0][j], ccbp.sigma0, x, 100.0);
          link.consider(dd, ea, 0, -1, static_cast<int>(j),
                        plane_angle(ccbp.planes[0][j], ccbp.sigma0));
        }
      }
      // same-level coherence
      for (int i : index.near(k, x, 100.0 * rk)) {
        if (i == static_cast<int>(j)) continue;
        double dd = plane_local_distance(ccbp.planes[k][i], ccbp.planes[k][j], x, 100.0 * rk);
        same.consider(dd, ea, k, i, static_cast<int>(j),
                      plane_angle(ccbp.planes[k][i], ccbp.planes[k][j]));
      }
      // cross-level coherence; partners are level k+1 centers
      if (k < depth) {
        for (int jj : index.near(k + 1, x, 2.0 * rk)) {
          double dd =
              plane_local_distance(ccbp.planes[k][j], ccbp.planes[k + 1][jj], x, 20.0 * rk);
          cross.consider(dd, ea, k, static_cast<int>(j), jj,
                         plane_angle(ccbp.planes[k][j], ccbp.planes[k + 1][jj]));
        }
      }
    }
  }

  report.conditions = {sep, nest, base, same, link, cross, through};
  report.finish();
  return report;
}

// Audit of a per-point plane family P_k(x): worst
// same-scale distance, cross-scale increment, and link to the model plane.
inline AuditReport audit_family(const PointCloud& cloud,
                                const std::vector<std::vector<AffinePlane>>& family,
                                const AffinePlane& sigma0, double eps, int point_stride = 1) {
  if (family.size() != cloud.size()) throw DimensionError("audit_family: family size mismatch");
  AuditReport report;
  report.eps = eps;
  report.eps_audit = eps;

  ConditionReport same{"same_scale"};
  ConditionReport crossk{"cross_scale"};
  ConditionReport link{"base_link"};

  std::vector<int> sel;
  for (std::size_t i = 0; i < cloud.size(); i += point_stride) sel.push_back(static_cast<int>(i));
  const int depth = family.empty() ? -1 : static_cast<int>(family.front().size()) - 1;

  UniformGrid grid(cloud.points, 1.0);
  for (int a : sel) {
    const Vec& x = cloud.points[a];
    for (int k = 0; k <= depth; ++k) {
      double rk = scale_radius(k);
      if (k < depth) {
        double dd = plane_local_distance(family[a][k], family[a][k + 1], x, rk);
        crossk.consider(dd, eps, k, a, -1, plane_angle(family[a][k], family[a][k + 1]));
      }
      for (int b : grid.query_ball(x, 100.0 * rk)) {
        if (b <= a || (b % point_stride) != 0) continue;
        double dd = plane_local_distance(family[a][k], family[b][k], x, 100.0 * rk);
        same.consider(dd, eps, k, a, b, plane_angle(family[a][k], family[b][k]));
      }
    }
    if (sigma0.distance(x) <= 2.0) {
      double dd = plane_local_distance(family[a][0], sigma0, x, 100.0);
      link.consider(dd, eps, 0, a, -1, plane_angle(family[a][0], sigma0));
    }
  }

  report.conditions = {same, crossk, link};
  report.finish();
  return report;
}

// ---------------------------------------------------------------------------
// eps_k / eps'_k coherence profiles

struct EpsProfile {
  double eps_k = 0.0;
  double eps_prime_k = 0.0;
};

inline EpsProfile eps_profiles(const Ccbp& ccbp, const LevelIndex& index, const Vec& y, int k) {
  EpsProfile out;
  const double rk = scale_radius(k);
  auto in10 = index.near(k, y, 10.0 * rk);
  if (in10.empty()) return out;  // zero outside V_k^10

  for (int i : in10) {
    const Vec& xi = ccbp.net.levels[k][i];
    for (int j : in10) {
      if (i == j) continue;
      out.eps_k = std::max(
          out.eps_k, plane_local_distance(ccbp.planes[k][j], ccbp.planes[k][i], xi, 100.0 * rk));
    }
  }

  for (int j : in10) {
    for (int l = std::max(0, k - 1); l <= k; ++l) {
      double rl = scale_radius(l);
      for (int i : index.near(l, y, 11.0 * rl)) {
        if (l == k && i == j) continue;
        const Vec& xi = ccbp.net.levels[l][i];
        out.eps_prime_k = std::max(out.eps_prime_k, plane_local_distance(ccbp.planes[k][j],
                                                                         ccbp.planes[l][i], xi,
                                                                         100.0 * rl));
      }
    }
  }
  out.eps_prime_k = std::max(out.eps_prime_k, out.eps_k);
  return out;
}

inline EpsProfile eps_profiles(const Ccbp& ccbp, const Vec& y, int k) {
  LevelIndex index(ccbp.net);
  return eps_profiles(ccbp, index, y, k);
}

}  // namespace reifenberg
