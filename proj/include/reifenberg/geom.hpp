#pragma once

#include "reifenberg/core.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

namespace reifenberg {

inline constexpr double kFrameTol = 1e-10;

// Modified Gram-Schmidt with one re-orthogonalization pass.
// Columns of `frame` are replaced by an orthonormal basis of their span.
// Throws NumericError if a column collapses below `tol` of its norm.
inline void orthonormalize(Mat& frame, double tol = kFrameTol) {
  const Eigen::Index d = frame.cols();
  for (Eigen::Index pass = 0; pass < 2; ++pass) {
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < j; ++i) {
        frame.col(j) -= frame.col(i).dot(frame.col(j)) * frame.col(i);
      }
      double nj = frame.col(j).norm();
      if (nj < tol) throw NumericError("orthonormalize: rank-deficient frame");
      frame.col(j) /= nj;
    }
  }
}

inline bool frame_is_orthonormal(const Mat& frame, double tol = 1e-12) {
  Mat g = frame.transpose() * frame;
  g -= Mat::Identity(frame.cols(), frame.cols());
  return g.cwiseAbs().maxCoeff() <= tol;
}

// Affine d-plane through `base` with orthonormal direction columns in `frame`
// (n x d, 1 <= d < n).  Carries every projection used by the construction.
class AffinePlane {
 public:
  AffinePlane() = default;
  AffinePlane(Vec base, Mat frame, bool assume_orthonormal = false)
      : base_(std::move(base)), frame_(std::move(frame)) {
    if (frame_.rows() != base_.size() || frame_.cols() < 1 || frame_.cols() >= base_.size())
      throw DimensionError("AffinePlane: frame shape");
    if (!assume_orthonormal && !frame_is_orthonormal(frame_)) {
      orthonormalize(frame_);
    }
  }

  const Vec& base() const { return base_; }
  const Mat& frame() const { return frame_; }
  Eigen::Index ambient_dim() const { return base_.size(); }
  Eigen::Index dim() const { return frame_.cols(); }

  // Projector onto the direction space (the differential of project()).
  Mat tangent_projector() const { return frame_ * frame_.transpose(); }

  // Orthogonal projection onto the plane.
  Vec project(const Vec& z) const {
    require_dim(z, base_.size(), "AffinePlane::project");
    return base_ + frame_ * (frame_.transpose() * (z - base_));
  }

  // Normal component of z - base; project(z) + perp_project(z) == z.
  Vec perp_project(const Vec& z) const {
    require_dim(z, base_.size(), "AffinePlane::perp_project");
    Vec w = z - base_;
    return w - frame_ * (frame_.transpose() * w);
  }

  double distance(const Vec& z) const { return perp_project(z).norm(); }

  // Tangential coordinates of z relative to base.
  Vec coords(const Vec& z) const { return frame_.transpose() * (z - base_); }

  AffinePlane translated_through(const Vec& p) const { return AffinePlane(p, frame_, true); }

 private:
  Vec base_;
  Mat frame_;
};

inline Vec project(const AffinePlane& plane, const Vec& z) { return plane.project(z); }
inline Vec perp_project(const AffinePlane& plane, const Vec& z) { return plane.perp_project(z); }

struct Ball {
  Vec center;
  double radius = 0.0;
  Ball() = default;
  Ball(Vec c, double r) : center(std::move(c)), radius(r) {
    if (!(radius > 0.0)) throw GeometryError("Ball: radius must be positive");
  }
  bool contains(const Vec& z) const { return (z - center).norm() <= radius; }
  Ball dilated(double lambda) const { return Ball(center, lambda * radius); }
};

// Box D(x, P, R): points z + w with z in P within R of the plane's base and
// w normal with |w| <= R.
struct Box {
  AffinePlane plane;
  double half_width = 0.0;
  Box() = default;
  Box(AffinePlane p, double r) : plane(std::move(p)), half_width(r) {
    if (!(half_width > 0.0)) throw GeometryError("Box: half_width must be positive");
  }
  bool contains(const Vec& z) const {
    return plane.coords(z).norm() <= half_width && plane.distance(z) <= half_width;
  }
};

namespace detail {

// max of sum(lam_i u_i^2) + 2 sum(g_i u_i) over |u| = rho, for a PSD
// diagonalized quadratic.  Secular equation in the multiplier, with the
// usual hard case when g vanishes on the top eigenspace.
inline double sphere_max_quadratic(const Vec& lam, const Vec& g, double rho, double tol = 1e-12) {
  const Eigen::Index d = lam.size();
  if (rho == 0.0) return 0.0;
  double lmax = lam.maxCoeff();
  double gnorm = g.norm();

  auto constraint = [&](double mu) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      double diff = mu - lam(i);
      s += (g(i) * g(i)) / (diff * diff);
    }
    return s;
  };
  auto value_at = [&](double mu) {
    double v = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      double u = g(i) / (mu - lam(i));
      v += lam(i) * u * u + 2.0 * g(i) * u;
    }
    return v;
  };

  // Hard case: no component of g along the top eigenspace and the remaining
  // components cannot reach the sphere.
  double gap = std::max(1e-300, tol * std::max(1.0, std::abs(lmax)));
  bool top_clear = true;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (lam(i) > lmax - gap && std::abs(g(i)) > tol * (1.0 + gnorm)) top_clear = false;
  }
  if (top_clear) {
    double s2 = 0.0, val = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
      if (lam(i) > lmax - gap) continue;
      double u = g(i) / (lmax - lam(i));
      s2 += u * u;
      val += lam(i) * u * u + 2.0 * g(i) * u;
    }
    if (s2 <= rho * rho) {
      double extra = rho * rho - s2;
      return val + lmax * extra;
    }
  }

  // Unique root of constraint(mu) = rho^2 on (lmax, inf); bisection seeded by
  // the bounds mu - lmax in [|g_top|/rho .. |g|/rho + lmax spread].
  if (gnorm == 0.0) return lmax * rho * rho;
  double lo = lmax + gnorm / (1e18);
  double hi = lmax + gnorm / rho + gap;
  while (constraint(hi) > rho * rho) hi = lmax + 2.0 * (hi - lmax);
  // make sure lo is on the +infinity side
  for (int i = 0; i < 2000 && constraint(lo) < rho * rho; ++i) {
    lo = lmax + 0.5 * (lo - lmax);
    if (lo - lmax < 1e-300) break;
  }
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (constraint(mid) > rho * rho)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * std::max(1.0, std::abs(hi))) break;
  }
  return value_at(0.5 * (lo + hi));
}

// sup over y in P1 within B(x, r) of dist(y, P2)^2, exact up to the secular
// root tolerance.  Returns nullopt if P1 misses the ball.
inline std::optional<double> one_sided_sup_sq(const AffinePlane& p1, const AffinePlane& p2,
                                              const Vec& x, double r) {
  Vec cx = x - p1.base();
  Vec t_center = p1.frame().transpose() * cx;
  double normal_off_sq = (cx - p1.frame() * t_center).squaredNorm();
  double rho_sq = r * r - normal_off_sq;
  if (rho_sq < 0.0) return std::nullopt;
  double rho = std::sqrt(rho_sq);

  // dist(y(t), P2)^2 = t'At + 2b't + c with A = U1' N2 U1.
  Mat n2u1 = p1.frame() - p2.frame() * (p2.frame().transpose() * p1.frame());
  Mat a = p1.frame().transpose() * n2u1;  // == U1' N2 U1, symmetric PSD
  Vec c12 = p1.base() - p2.base();
  Vec n2c = c12 - p2.frame() * (p2.frame().transpose() * c12);
  Vec b = p1.frame().transpose() * n2c;
  double c0 = c12.dot(n2c);

  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
  Vec lam = es.eigenvalues();
  Vec g = es.eigenvectors().transpose() * (a * t_center + b);
  double phi0 = t_center.dot(a * t_center) + 2.0 * b.dot(t_center) + c0;
  double best = sphere_max_quadratic(lam, g, rho);
  return std::max(0.0, phi0 + best);
}

// sup over sample points of A inside B(x, r) of the distance to the full
// sample set B.  Plain double loop; callers pre-filter with a grid when the
// sets are large.
inline std::optional<double> one_sided_set_sup(const std::vector<Vec>& a, const std::vector<Vec>& b,
                                               const Vec& x, double r) {
  double sup = -1.0;
  for (const Vec& p : a) {
    if ((p - x).norm() > r) continue;
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& q : b) best = std::min(best, (p - q).norm());
    sup = std::max(sup, best);
  }
  if (sup < 0.0) return std::nullopt;
  return sup;
}

}  // namespace detail

// Normalized local Hausdorff distance d_{x,r}(P1, P2) between affine
// d-planes: (1/r) max of the two one-sided sups inside B(x, r).
// Throws GeometryError if either plane misses the ball.
inline double plane_local_distance(const AffinePlane& p1, const AffinePlane& p2, const Vec& x,
                                   double r) {
  if (p1.ambient_dim() != p2.ambient_dim()) throw DimensionError("plane_local_distance");
  if (!(r > 0.0)) throw GeometryError("plane_local_distance: r must be positive");
  auto s12 = detail::one_sided_sup_sq(p1, p2, x, r);
  auto s21 = detail::one_sided_sup_sq(p2, p1, x, r);
  if (!s12 || !s21) throw GeometryError("plane_local_distance: a plane misses the ball");
  return std::sqrt(std::max(*s12, *s21)) / r;
}

// Normalized local Hausdorff distance between two sampled sets.
inline double set_local_distance(const std::vector<Vec>& a, const std::vector<Vec>& b, const Vec& x,
                                 double r) {
  if (!(r > 0.0)) throw GeometryError("set_local_distance: r must be positive");
  auto sab = detail::one_sided_set_sup(a, b, x, r);
  auto sba = detail::one_sided_set_sup(b, a, x, r);
  if (!sab || !sba) throw GeometryError("set_local_distance: a sample set misses the ball");
  return std::max(*sab, *sba) / r;
}

// Distance between d-dimensional vector subspaces given by orthonormal
// frames: two-sided sup over unit vectors, equal to the sine of the largest
// principal angle.  Lies in [0, 1].
inline double grassmann_distance(const Mat& v1, const Mat& v2) {
  if (v1.rows() != v2.rows() || v1.cols() != v2.cols())
    throw DimensionError("grassmann_distance: frame shapes differ");
  if (!frame_is_orthonormal(v1, 1e-9) || !frame_is_orthonormal(v2, 1e-9))
    throw NumericError("grassmann_distance: frames must be orthonormal");
  Mat rest = v1 - v2 * (v2.transpose() * v1);
  Mat a = rest.transpose() * rest;
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (a + a.transpose()));
  double lmax = es.eigenvalues().maxCoeff();
  return std::sqrt(std::min(1.0, std::max(0.0, lmax)));
}

}  // namespace reifenberg
