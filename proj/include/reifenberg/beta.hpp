#pragma once

#include "reifenberg/cloud.hpp"
#include "reifenberg/grid.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace reifenberg {

namespace detail {

inline std::vector<int> indices_in_ball(const PointCloud& cloud, const Vec& x, double r) {
  std::vector<int> out;
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if ((cloud.points[i] - x).norm() <= r) out.push_back(static_cast<int>(i));
  }
  return out;
}

inline double weight_of(const PointCloud& cloud, int i) {
  return cloud.has_weights() ? cloud.weights[i] : 1.0;
}

struct PcaResult {
  Vec centroid;
  Mat directions;  // n x d, canonical signs
  Vec eigenvalues; // descending, length n
};

// Weighted PCA of the selected samples.  Signs are canonicalized by the
// third moment along each direction so the result is equivariant under
// rigid motions whenever the data is not mirror-symmetric.
inline PcaResult weighted_pca(const PointCloud& cloud, const std::vector<int>& idx, int d) {
  const Eigen::Index n = cloud.ambient_dim();
  if (static_cast<int>(idx.size()) < d + 1)
    throw NumericError("plane fit: fewer than d+1 samples in ball");
  Vec c = Vec::Zero(n);
  double wsum = 0.0;
  for (int i : idx) {
    double w = weight_of(cloud, i);
    c += w * cloud.points[i];
    wsum += w;
  }
  c /= wsum;
  Mat m = Mat::Zero(n, n);
  for (int i : idx) {
    Vec dv = cloud.points[i] - c;
    m += weight_of(cloud, i) * dv * dv.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(m);
  PcaResult res;
  res.centroid = c;
  res.directions = Mat(n, d);
  res.eigenvalues = Vec(n);
  for (Eigen::Index j = 0; j < n; ++j) res.eigenvalues(j) = es.eigenvalues()(n - 1 - j);
  double lmax = std::max(res.eigenvalues(0), 0.0);
  if (!(res.eigenvalues(d - 1) > lmax * 1e-24) || lmax <= 0.0)
    throw NumericError("plane fit: rank-deficient sample set");
  for (int j = 0; j < d; ++j) {
    Vec v = es.eigenvectors().col(n - 1 - j);
    double m3 = 0.0;
    for (int i : idx) {
      double t = v.dot(cloud.points[i] - c);
      m3 += weight_of(cloud, i) * t * t * t;
    }
    if (m3 < 0.0) v = -v;
    res.directions.col(j) = v;
  }
  return res;
}

// Deterministic orthonormal completion of an n x d frame to n columns.
inline Mat complete_frame(const Mat& u) {
  const Eigen::Index n = u.rows(), d = u.cols();
  Mat full(n, n);
  full.leftCols(d) = u;
  Eigen::Index have = d;
  for (Eigen::Index e = 0; e < n && have < n; ++e) {
    Vec cand = Vec::Zero(n);
    cand(e) = 1.0;
    for (Eigen::Index j = 0; j < have; ++j) cand -= full.col(j).dot(cand) * full.col(j);
    double nn = cand.norm();
    if (nn > 1e-8) {
      full.col(have++) = cand / nn;
    }
  }
  if (have != n) throw NumericError("complete_frame: failed to complete basis");
  Mat w = full.rightCols(n - d);
  orthonormalize(w);
  return w;
}

// Nelder-Mead over a small parameter count; deterministic, with restarts
// around the best point.  Returns the best parameter vector found.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd x0, double step, int max_iter = 0) {
  const int m = static_cast<int>(x0.size());
  if (max_iter <= 0) max_iter = 800 * m;
  Eigen::VectorXd best_x = x0;
  double best_f = f(x0);

  for (int restart = 0; restart < 3; ++restart) {
    double h = step / std::pow(10.0, restart);
    std::vector<Eigen::VectorXd> xs(m + 1, best_x);
    std::vector<double> fs(m + 1);
    for (int j = 0; j < m; ++j) xs[j + 1](j) += h;
    for (int j = 0; j <= m; ++j) fs[j] = f(xs[j]);

    for (int it = 0; it < max_iter; ++it) {
      std::vector<int> order(m + 1);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fs[a] < fs[b]; });
      std::vector<Eigen::VectorXd> xs2(m + 1);
      std::vector<double> fs2(m + 1);
      for (int j = 0; j <= m; ++j) {
        xs2[j] = xs[order[j]];
        fs2[j] = fs[order[j]];
      }
      xs.swap(xs2);
      fs.swap(fs2);

      double diam = 0.0;
      for (int j = 1; j <= m; ++j) diam = std::max(diam, (xs[j] - xs[0]).norm());
      if (fs[m] - fs[0] <= 1e-14 * (1.0 + std::abs(fs[0])) && diam <= 1e-12) break;

      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(m);
      for (int j = 0; j < m; ++j) centroid += xs[j];
      centroid /= m;

      Eigen::VectorXd xr = centroid + (centroid - xs[m]);
      double fr = f(xr);
      if (fr < fs[0]) {
        Eigen::VectorXd xe = centroid + 2.0 * (centroid - xs[m]);
        double fe = f(xe);
        if (fe < fr) {
          xs[m] = xe;
          fs[m] = fe;
        } else {
          xs[m] = xr;
          fs[m] = fr;
        }
      } else if (fr < fs[m - 1]) {
        xs[m] = xr;
        fs[m] = fr;
      } else {
        Eigen::VectorXd xc = centroid + 0.5 * ((fr < fs[m] ? xr : xs[m]) - centroid);
        double fc = f(xc);
        if (fc < std::min(fr, fs[m])) {
          xs[m] = xc;
          fs[m] = fc;
        } else {
          for (int j = 1; j <= m; ++j) {
            xs[j] = xs[0] + 0.5 * (xs[j] - xs[0]);
            fs[j] = f(xs[j]);
          }
        }
      }
    }
    for (int j = 0; j <= m; ++j) {
      if (fs[j] < best_f) {
        best_f = fs[j];
        best_x = xs[j];
      }
    }
  }
  return best_x;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plane fits

inline AffinePlane fit_plane_l2(const PointCloud& cloud, const Ball& ball) {
  auto idx = detail::indices_in_ball(cloud, ball.center, ball.radius);
  auto pca = detail::weighted_pca(cloud, idx, cloud.intrinsic_dim);
  return AffinePlane(pca.centroid, pca.directions, true);
}

struct L1Fit {
  AffinePlane plane;
  double objective = 0.0;  // sum of w_i dist(p_i, plane)
  bool converged = true;
};

inline double l1_objective(const PointCloud& cloud, const std::vector<int>& idx,
                           const AffinePlane& plane) {
  double s = 0.0;
  for (int i : idx) s += detail::weight_of(cloud, i) * plane.distance(cloud.points[i]);
  return s;
}

// IRLS refinement of the L2 plane for the weighted L1 objective.  Keeps the
// best iterate, so the result never exceeds the L2 plane's L1 objective.
inline L1Fit fit_plane_l1(const PointCloud& cloud, const Ball& ball, int max_iter = 60) {
  auto idx = detail::indices_in_ball(cloud, ball.center, ball.radius);
  auto pca = detail::weighted_pca(cloud, idx, cloud.intrinsic_dim);
  AffinePlane plane(pca.centroid, pca.directions, true);

  L1Fit fit;
  fit.plane = plane;
  fit.objective = l1_objective(cloud, idx, plane);
  fit.converged = false;

  const Eigen::Index n = cloud.ambient_dim();
  const int d = cloud.intrinsic_dim;
  const double floor = 1e-10 * ball.radius;
  AffinePlane cur = plane;
  for (int it = 0; it < max_iter; ++it) {
    Vec c = Vec::Zero(n);
    double wsum = 0.0;
    std::vector<double> wi(idx.size());
    for (std::size_t t = 0; t < idx.size(); ++t) {
      int i = idx[t];
      double di = std::max(cur.distance(cloud.points[i]), floor);
      wi[t] = detail::weight_of(cloud, i) / di;
      c += wi[t] * cloud.points[i];
      wsum += wi[t];
    }
    c /= wsum;
    Mat m = Mat::Zero(n, n);
    for (std::size_t t = 0; t < idx.size(); ++t) {
      Vec dv = cloud.points[idx[t]] - c;
      m += wi[t] * dv * dv.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Mat dirs(n, d);
    for (int j = 0; j < d; ++j) dirs.col(j) = es.eigenvectors().col(n - 1 - j);
    AffinePlane next(c, dirs, true);
    double obj = l1_objective(cloud, idx, next);
    if (obj < fit.objective) {
      fit.objective = obj;
      fit.plane = next;
    }
    double rel = std::abs(obj - l1_objective(cloud, idx, cur));
    cur = next;
    if (rel <= 1e-13 * (1.0 + fit.objective)) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

struct MinimaxFit {
  AffinePlane plane;
  double sup = 0.0;  // achieved sup of dist(p_i, plane) over the ball
};

// Approximate minimax plane through x for the samples in B(x, r): PCA init
// translated through x, then Nelder-Mead over the tilt of the direction
// frame.  The achieved sup upper-bounds the true infimum.
inline MinimaxFit fit_plane_minimax(const PointCloud& cloud, const Vec& x, double r) {
  auto idx = detail::indices_in_ball(cloud, x, r);
  if (idx.empty()) throw NumericError("fit_plane_minimax: empty ball");
  const Eigen::Index n = cloud.ambient_dim();
  const int d = cloud.intrinsic_dim;

  // Up to d samples always lie on some plane through x.
  if (static_cast<int>(idx.size()) <= d) {
    Mat frame(n, d);
    Eigen::Index have = 0;
    for (int i : idx) {
      Vec v = cloud.points[i] - x;
      for (Eigen::Index j = 0; j < have; ++j) v -= frame.col(j).dot(v) * frame.col(j);
      if (v.norm() > 1e-14) frame.col(have++) = v / v.norm();
    }
    Mat seed = Mat::Identity(n, n);
    for (Eigen::Index e = 0; e < n && have < d; ++e) {
      Vec v = seed.col(e);
      for (Eigen::Index j = 0; j < have; ++j) v -= frame.col(j).dot(v) * frame.col(j);
      if (v.norm() > 1e-8) frame.col(have++) = v / v.norm();
    }
    return {AffinePlane(x, frame, true), 0.0};
  }

  Mat u0;
  try {
    auto pca = detail::weighted_pca(cloud, idx, d);
    u0 = pca.directions;
  } catch (const NumericError&) {
    // Degenerate spread: fall back to directions toward the samples.
    Mat frame(n, d);
    Eigen::Index have = 0;
    for (int i : idx) {
      Vec v = cloud.points[i] - x;
      for (Eigen::Index j = 0; j < have; ++j) v -= frame.col(j).dot(v) * frame.col(j);
      if (v.norm() > 1e-14 && have < d) frame.col(have++) = v / v.norm();
      if (have == d) break;
    }
    Mat seed = Mat::Identity(n, n);
    for (Eigen::Index e = 0; e < n && have < d; ++e) {
      Vec v = seed.col(e);
      for (Eigen::Index j = 0; j < have; ++j) v -= frame.col(j).dot(v) * frame.col(j);
      if (v.norm() > 1e-8) frame.col(have++) = v / v.norm();
    }
    u0 = frame;
  }
  Mat w0 = detail::complete_frame(u0);
  const int m = static_cast<int>((n - d) * d);

  auto plane_at = [&](const Eigen::VectorXd& b) {
    Mat tilted = u0;
    for (int j = 0; j < d; ++j) {
      for (Eigen::Index a = 0; a < n - d; ++a) {
        tilted.col(j) += b(a * d + j) * w0.col(a);
      }
    }
    orthonormalize(tilted);
    return AffinePlane(x, tilted, true);
  };
  auto objective = [&](const Eigen::VectorXd& b) {
    AffinePlane p = plane_at(b);
    double sup = 0.0;
    for (int i : idx) sup = std::max(sup, p.distance(cloud.points[i]));
    return sup;
  };

  Eigen::VectorXd b0 = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd best = detail::nelder_mead(objective, b0, 0.1);
  MinimaxFit fit;
  fit.plane = plane_at(best);
  fit.sup = objective(best);
  double sup0 = objective(b0);
  if (sup0 < fit.sup) {
    fit.plane = plane_at(b0);
    fit.sup = sup0;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Beta numbers

// beta_inf(x, r): scale-normalized sup distance to the best plane through x.
inline double beta_inf(const PointCloud& cloud, const Vec& x, double r) {
  return fit_plane_minimax(cloud, x, r).sup / r;
}

// beta_q(x, r): (r^-d sum_i w_i (dist_i / r)^q)^(1/q) for the best plane
// through B(x, r); q = 2 is plain weighted PCA, other q >= 1 use IRLS.
inline double beta_q(const PointCloud& cloud, const Vec& x, double r, double q,
                     AffinePlane* plane_out = nullptr) {
  if (!cloud.has_weights()) throw NumericError("beta_q: weights required");
  if (!(q >= 1.0)) throw NumericError("beta_q: q must be >= 1");
  auto idx = detail::indices_in_ball(cloud, x, r);
  if (idx.empty()) throw NumericError("beta_q: empty ball");
  const int d = cloud.intrinsic_dim;
  const Eigen::Index n = cloud.ambient_dim();

  AffinePlane best;
  if (static_cast<int>(idx.size()) <= d) {
    MinimaxFit degenerate = fit_plane_minimax(cloud, x, r);
    best = degenerate.plane;
  } else {
    auto pca = detail::weighted_pca(cloud, idx, d);
    best = AffinePlane(pca.centroid, pca.directions, true);
    if (q != 2.0) {
      const double floor = 1e-10 * r;
      auto q_obj = [&](const AffinePlane& p) {
        double s = 0.0;
        for (int i : idx) s += detail::weight_of(cloud, i) * std::pow(p.distance(cloud.points[i]), q);
        return s;
      };
      double best_obj = q_obj(best);
      AffinePlane cur = best;
      for (int it = 0; it < 60; ++it) {
        Vec c = Vec::Zero(n);
        double wsum = 0.0;
        std::vector<double> wi(idx.size());
        for (std::size_t t = 0; t < idx.size(); ++t) {
          int i = idx[t];
          double di = std::max(cur.distance(cloud.points[i]), floor);
          wi[t] = detail::weight_of(cloud, i) * std::pow(di, q - 2.0);
          c += wi[t] * cloud.points[i];
          wsum += wi[t];
        }
        c /= wsum;
        Mat mcov = Mat::Zero(n, n);
        for (std::size_t t = 0; t < idx.size(); ++t) {
          Vec dv = cloud.points[idx[t]] - c;
          mcov += wi[t] * dv * dv.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Mat> es(mcov);
        Mat dirs(n, d);
        for (int j = 0; j < d; ++j) dirs.col(j) = es.eigenvectors().col(n - 1 - j);
        AffinePlane next(c, dirs, true);
        double obj = q_obj(next);
        bool improved = obj < best_obj;
        if (improved) {
          best_obj = obj;
          best = next;
        }
        cur = next;
        if (!improved && it > 2) break;
      }
    }
  }

  // The definition restricts to planes through B(x, r); translate if the
  // fitted plane happens to miss the ball.
  if (best.distance(x) > r) {
    Vec foot = best.project(x);
    Vec shift = (x - foot) * (1.0 - 0.999 * r / best.distance(x));
    best = AffinePlane(best.base() + shift, best.frame(), true);
  }
  if (plane_out) *plane_out = best;

  double s = 0.0;
  for (int i : idx)
    s += detail::weight_of(cloud, i) * std::pow(best.distance(cloud.points[i]) / r, q);
  return std::pow(s / std::pow(r, d), 1.0 / q);
}

// ---------------------------------------------------------------------------
// Jones functions and profiles

struct JonesSums {
  double j_inf = 0.0;  // sum_k beta_inf(x, r_k)^2
  double j_1 = 0.0;    // sum_{k >= 3} beta_1(x, r_k)^2
  double j = 0.0;      // sum_k alpha_k(x)^2
  int depth = 0;
};

inline JonesSums jones_J(const std::vector<double>& beta_inf_by_k,
                         const std::vector<double>& beta_1_by_k,
                         const std::vector<double>& alpha_by_k) {
  JonesSums s;
  s.depth = static_cast<int>(std::max({beta_inf_by_k.size(), beta_1_by_k.size(), alpha_by_k.size()}));
  for (std::size_t k = 0; k < beta_inf_by_k.size(); ++k) s.j_inf += beta_inf_by_k[k] * beta_inf_by_k[k];
  for (std::size_t k = 3; k < beta_1_by_k.size(); ++k) s.j_1 += beta_1_by_k[k] * beta_1_by_k[k];
  for (std::size_t k = 0; k < alpha_by_k.size(); ++k) s.j += alpha_by_k[k] * alpha_by_k[k];
  return s;
}

// alpha_k(x) for a per-scale plane family: the scale-k plane increment at x
// plus the worst same-scale increment against neighbors within 35 r_k.
inline double alpha_k(const std::vector<Vec>& base_points,
                      const std::vector<std::vector<AffinePlane>>& family_by_point, int point,
                      int k, const Vec& x) {
  const auto& mine = family_by_point[point];
  if (k + 1 >= static_cast<int>(mine.size())) return 0.0;
  if (mine[k].ambient_dim() == 0 || mine[k + 1].ambient_dim() == 0) return 0.0;
  double rk = scale_radius(k);
  double a = plane_local_distance(mine[k + 1], mine[k], x, rk);
  for (std::size_t j = 0; j < base_points.size(); ++j) {
    if (static_cast<int>(j) == point) continue;
    if ((base_points[j] - x).norm() > 35.0 * rk) continue;
    const auto& other = family_by_point[j];
    if (k >= static_cast<int>(other.size()) || other[k].ambient_dim() == 0) continue;
    a = std::max(a, plane_local_distance(mine[k], other[k], x, rk));
  }
  return a;
}

// ---------------------------------------------------------------------------
// Carleson statistic, Ahlfors check, unit-normal functional

// (1 / r^d) sum over samples y in B(x, r) and scales r_k <= r of
// w(y) beta_q(y, r_k)^2.
inline double carleson_sum(const PointCloud& cloud, const Vec& x, double r, double q,
                           int deepest_scale = 6) {
  if (!cloud.has_weights()) throw NumericError("carleson_sum: weights required");
  auto idx = detail::indices_in_ball(cloud, x, r);
  if (idx.empty()) throw NumericError("carleson_sum: empty ball");
  double total = 0.0;
  for (int i : idx) {
    const Vec& y = cloud.points[i];
    double contrib = 0.0;
    for (int k = 0; k <= deepest_scale; ++k) {
      double rk = scale_radius(k);
      if (rk > r) continue;
      double b = 0.0;
      try {
        b = beta_q(cloud, y, rk, q);
      } catch (const NumericError&) {
        continue;  // too few samples at this depth
      }
      contrib += b * b;
    }
    total += detail::weight_of(cloud, i) * contrib;
  }
  return total / std::pow(r, cloud.intrinsic_dim);
}

struct AhlforsResult {
  double lower_ratio = 0.0;
  double upper_ratio = 0.0;
  bool boundary = false;  // some tested ball leaves the sampled region
};

// Flags x as boundary-affected when B(x, r) exits the cloud's bounding box
// along an axis whose extent exceeds 2r (thin axes carry no information).
inline bool near_sample_boundary(const PointCloud::Bounds& bounds, const Vec& x, double r) {
  for (Eigen::Index a = 0; a < x.size(); ++a) {
    if (bounds.hi(a) - bounds.lo(a) <= 2.0 * r) continue;
    if (x(a) - r < bounds.lo(a) || x(a) + r > bounds.hi(a)) return true;
  }
  return false;
}

inline AhlforsResult ahlfors_check(const PointCloud& cloud, const Vec& x, double r) {
  if (!cloud.has_weights()) throw NumericError("ahlfors_check: weights required");
  auto idx = detail::indices_in_ball(cloud, x, r);
  if (idx.empty()) throw NumericError("ahlfors_check: empty ball");
  double mass = 0.0;
  for (int i : idx) mass += detail::weight_of(cloud, i);
  double ratio = mass / (unit_ball_volume(cloud.intrinsic_dim) * std::pow(r, cloud.intrinsic_dim));
  AhlforsResult res{ratio, ratio, near_sample_boundary(cloud.bounding_box(), x, r)};
  return res;
}

// Sweep over log-spaced radii in [r_min, r_max].
inline AhlforsResult ahlfors_check(const PointCloud& cloud, const Vec& x, double r_min,
                                   double r_max, int scales) {
  AhlforsResult res;
  res.lower_ratio = std::numeric_limits<double>::infinity();
  res.upper_ratio = 0.0;
  for (int s = 0; s < scales; ++s) {
    double t = (scales == 1) ? 0.0 : static_cast<double>(s) / (scales - 1);
    double r = r_min * std::pow(r_max / r_min, t);
    AhlforsResult one = ahlfors_check(cloud, x, r);
    res.lower_ratio = std::min(res.lower_ratio, one.lower_ratio);
    res.upper_ratio = std::max(res.upper_ratio, one.upper_ratio);
    res.boundary = res.boundary || one.boundary;
  }
  return res;
}

struct NormalFunctional {
  double value = 0.0;            // discretized H(x)
  double min_mean_normal = 1.0;  // min over scales of |n_{x,r}|
};

// Discretized unit-normal square function: the log-weighted sum over the
// scale ladder of the squared averaged normal pairing.  Requires d = n - 1
// and per-sample unit normals.
inline NormalFunctional normal_functional(const PointCloud& cloud, const Vec& x, int depth = 6,
                                          int scales_per_decade = 1) {
  if (!cloud.has_normals()) throw NumericError("normal_functional: normals required");
  if (cloud.intrinsic_dim != cloud.ambient_dim() - 1)
    throw NumericError("normal_functional: requires d = n - 1");
  if (!cloud.has_weights()) throw NumericError("normal_functional: weights required");
  NormalFunctional out;
  const int d = cloud.intrinsic_dim;
  const double dlog = std::log(10.0) / scales_per_decade;
  const int steps = depth * scales_per_decade;
  for (int s = 0; s <= steps; ++s) {
    double r = std::pow(10.0, -static_cast<double>(s) / scales_per_decade);
    auto idx = detail::indices_in_ball(cloud, x, r);
    if (idx.empty()) continue;
    Vec mean_n = Vec::Zero(cloud.ambient_dim());
    double mass = 0.0;
    for (int i : idx) {
      double w = detail::weight_of(cloud, i);
      mean_n += w * cloud.normals[i];
      mass += w;
    }
    mean_n /= mass;
    out.min_mean_normal = std::min(out.min_mean_normal, mean_n.norm());
    double integral = 0.0;
    for (int i : idx) {
      integral += detail::weight_of(cloud, i) * std::abs((cloud.points[i] - x).dot(mean_n));
    }
    double term = integral / (std::pow(r, d) * r);
    out.value += term * term * dlog;
  }
  return out;
}

}  // namespace reifenberg
