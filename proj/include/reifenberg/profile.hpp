#pragma once

#include "reifenberg/beta.hpp"
#include "reifenberg/nets.hpp"

#include <optional>
#include <vector>

namespace reifenberg {

struct BetaProfileRow {
  int point_id = 0;
  int k = 0;
  double beta_inf = 0.0;
  double beta_q = 0.0;
  double eps_k = 0.0;
  double eps_prime_k = 0.0;
  double alpha_k = 0.0;
};

struct BetaAggregate {
  int point_id = 0;
  double j_inf = 0.0;
  double j_1 = 0.0;
  double j = 0.0;
};

struct BetaProfile {
  std::vector<BetaProfileRow> rows;
  std::vector<BetaAggregate> aggregates;
  double q = 1.0;
  int depth = 0;
};

// Per base point and scale: beta_inf, beta_q, the plane-increment alpha_k
// from the fitted through-x family, and (with a CCBP) eps_k / eps'_k.
// J sums are exactly the sums of squares of the reported rows.
inline BetaProfile compute_beta_profile(const PointCloud& cloud, const std::vector<int>& base_ids,
                                        int depth, double q, const Ccbp* ccbp = nullptr,
                                        int threads = 1) {
  BetaProfile profile;
  profile.q = q;
  profile.depth = depth;
  const std::size_t npts = base_ids.size();
  const int cols = depth + 1;

  std::vector<std::vector<AffinePlane>> family(npts);
  std::vector<std::vector<double>> binf(npts), bq(npts);
  std::optional<LevelIndex> index;
  if (ccbp) index.emplace(ccbp->net);

  parallel_for(npts, threads, [&](std::size_t a) {
    const Vec& x = cloud.points[base_ids[a]];
    family[a].resize(cols);
    binf[a].assign(cols, 0.0);
    bq[a].assign(cols, 0.0);
    for (int k = 0; k <= depth; ++k) {
      double rk = scale_radius(k);
      try {
        MinimaxFit fit = fit_plane_minimax(cloud, x, rk);
        family[a][k] = fit.plane;
        binf[a][k] = fit.sup / rk;
      } catch (const NumericError&) {
        family[a][k] = AffinePlane();  // empty ball; leave zero
      }
      if (cloud.has_weights()) {
        try {
          bq[a][k] = beta_q(cloud, x, rk, q);
        } catch (const NumericError&) {
        }
      }
    }
  });

  std::vector<Vec> base_points(npts);
  for (std::size_t a = 0; a < npts; ++a) base_points[a] = cloud.points[base_ids[a]];

  std::vector<BetaProfileRow> rows(npts * cols);
  parallel_for(npts, threads, [&](std::size_t a) {
    const Vec& x = base_points[a];
    for (int k = 0; k <= depth; ++k) {
      BetaProfileRow row;
      row.point_id = base_ids[a];
      row.k = k;
      row.beta_inf = binf[a][k];
      row.beta_q = bq[a][k];
      if (family[a][k].ambient_dim() > 0) {
        try {
          row.alpha_k = alpha_k(base_points, family, static_cast<int>(a), k, x);
        } catch (const GeometryError&) {
        }
      }
      if (ccbp) {
        EpsProfile ep = eps_profiles(*ccbp, *index, x, k);
        row.eps_k = ep.eps_k;
        row.eps_prime_k = ep.eps_prime_k;
      }
      rows[a * cols + k] = row;
    }
  });
  profile.rows = std::move(rows);

  profile.aggregates.resize(npts);
  for (std::size_t a = 0; a < npts; ++a) {
    std::vector<double> bi(cols), b1(cols), al(cols);
    for (int k = 0; k <= depth; ++k) {
      const auto& row = profile.rows[a * cols + k];
      bi[k] = row.beta_inf;
      b1[k] = row.beta_q;
      al[k] = row.alpha_k;
    }
    JonesSums sums = jones_J(bi, b1, al);
    profile.aggregates[a] = {base_ids[a], sums.j_inf, sums.j_1, sums.j};
  }
  return profile;
}

}  // namespace reifenberg
