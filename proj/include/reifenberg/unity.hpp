#pragma once

#include "reifenberg/nets.hpp"

#include <cmath>
#include <vector>

namespace reifenberg {

// C^2 radial and normalization profiles.
//
// theta: 1 on [0, 9], quintic transition on [9, 10], 0 on [10, inf).
// eta:   t on [0, 1/2], quintic Hermite transition on [1/2, 1], 1 on [1, inf);
//        the transition matches value/slope/curvature at both ends.
struct BumpProfile {
  // quintic smoothstep q(s) = s^3 (10 - 15 s + 6 s^2), q(0)=0, q(1)=1,
  // q' = q'' = 0 at both ends
  static double q(double s) { return s * s * s * (10.0 - 15.0 * s + 6.0 * s * s); }
  static double dq(double s) { return 30.0 * s * s * (1.0 - 2.0 * s + s * s); }

  static double theta(double t) {
    if (t <= 9.0) return 1.0;
    if (t >= 10.0) return 0.0;
    return 1.0 - q(t - 9.0);
  }
  static double dtheta(double t) {
    if (t <= 9.0 || t >= 10.0) return 0.0;
    return -dq(t - 9.0);
  }

  // transition polynomial on s in [0,1]: 1/2 + s/2 + 2 s^3 - 7/2 s^4 + 3/2 s^5
  static double eta(double t) {
    if (t <= 0.5) return t;
    if (t >= 1.0) return 1.0;
    double s = 2.0 * (t - 0.5);
    return 0.5 + 0.5 * s + 2.0 * s * s * s - 3.5 * s * s * s * s + 1.5 * s * s * s * s * s;
  }
  static double deta(double t) {
    if (t <= 0.5) return 1.0;
    if (t >= 1.0) return 0.0;
    double s = 2.0 * (t - 0.5);
    return 2.0 * (0.5 + 6.0 * s * s - 14.0 * s * s * s + 7.5 * s * s * s * s);
  }
};

// Partition weights at y for level k: theta_{j,k} = eta(w) ttheta_{j,k} / w
// with w = sum_j ttheta_{j,k}, and psi_k = 1 - eta(w).  Exactly
// psi + sum theta = 1; sum theta = 1 and psi = 0 on V_k^9; each theta_{j,k}
// is supported in 10 B_{j,k}.
struct Partition {
  std::vector<int> centers;       // level-k center indices with theta != 0 or grad != 0
  std::vector<double> theta;      // theta_{j,k}(y)
  std::vector<Vec> grad_theta;    // gradients of theta_{j,k}
  double psi = 1.0;               // psi_k(y)
  Vec grad_psi;
  double w = 0.0;                 // sum of raw bumps
};

inline double theta_tilde(const Vec& center, double rk, const Vec& y) {
  return BumpProfile::theta((y - center).norm() / rk);
}

inline Partition partition(const MultiscaleNet& net, const LevelIndex& index, int k, const Vec& y) {
  Partition part;
  part.grad_psi = Vec::Zero(y.size());
  const double rk = scale_radius(k);
  auto near = index.near(k, y, 10.0 * rk);
  if (near.empty()) return part;

  const auto& centers = net.levels[k];
  std::vector<double> tt(near.size());
  std::vector<Vec> gtt(near.size());
  double w = 0.0;
  Vec gw = Vec::Zero(y.size());
  for (std::size_t a = 0; a < near.size(); ++a) {
    Vec diff = y - centers[near[a]];
    double dist = diff.norm();
    double t = dist / rk;
    tt[a] = BumpProfile::theta(t);
    if (dist > 0.0) {
      gtt[a] = (BumpProfile::dtheta(t) / (rk * dist)) * diff;
    } else {
      gtt[a] = Vec::Zero(y.size());
    }
    w += tt[a];
    gw += gtt[a];
  }
  part.w = w;
  if (w == 0.0) return part;  // boundary of the support: all bumps vanish

  const double e = BumpProfile::eta(w);
  const double de = BumpProfile::deta(w);
  part.psi = 1.0 - e;
  part.grad_psi = -de * gw;
  part.centers.assign(near.begin(), near.end());
  part.theta.resize(near.size());
  part.grad_theta.resize(near.size());
  if (w <= 0.5) {
    // eta(w) = w: theta_{j,k} = ttheta_{j,k} exactly
    for (std::size_t a = 0; a < near.size(); ++a) {
      part.theta[a] = tt[a];
      part.grad_theta[a] = gtt[a];
    }
  } else {
    const double inv = 1.0 / w;
    for (std::size_t a = 0; a < near.size(); ++a) {
      part.theta[a] = e * tt[a] * inv;
      part.grad_theta[a] =
          (de * inv * tt[a]) * gw + (e * inv) * gtt[a] - (e * tt[a] * inv * inv) * gw;
    }
  }
  return part;
}

}  // namespace reifenberg
