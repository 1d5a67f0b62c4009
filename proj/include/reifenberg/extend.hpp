#pragma once

#include "reifenberg/flow.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace reifenberg {

// Nearest-point split relative to the model plane: p on Sigma_0, q normal.
struct Split {
  Vec p, q;
};

inline Split split(const AffinePlane& sigma0, const Vec& z) {
  Vec p = sigma0.project(z);
  return {p, z - p};
}

// H(S) = (S S^T)^(-1/2) S, the projection onto the orthogonal group,
// computed by symmetric eigendecomposition.  Requires |S S^T - I| <= 0.5.
inline Mat project_isometry(const Mat& s, double domain_radius = 0.5) {
  if (s.rows() != s.cols()) throw DimensionError("project_isometry: square matrix required");
  Mat gram = s * s.transpose();
  Eigen::SelfAdjointEigenSolver<Mat> es(gram);
  double worst = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    worst = std::max(worst, std::abs(es.eigenvalues()(i) - 1.0));
  if (worst > domain_radius)
    throw NumericError("project_isometry: |S S^T - I| exceeds the domain radius");
  Vec inv_sqrt(s.rows());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    double lam = es.eigenvalues()(i);
    if (!(lam > 0.0)) throw NumericError("project_isometry: S S^T is singular");
    inv_sqrt(i) = 1.0 / std::sqrt(lam);
  }
  return es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * s;
}

// ---------------------------------------------------------------------------
// Isometry field R_k on a lattice over Sigma_0

// Orthogonal maps R_k(x) with R_0 = I and R_k(T_0) = T_k, built by the
// recursion S_k = pi_{y,k+1} R_k pi_{x,0} + pi_{y,k+1}^perp R_k pi_{x,0}^perp,
// R_{k+1} = H(S_k), level by level over a lattice of Sigma_0.
//
// Near the edge of the sampled data S_k can drift outside the strict H
// domain even on honest inputs; the polar projection stays valid there, so
// the build tolerates it, records the worst deviation, and only fails on a
// genuinely singular S_k.
class IsometryField {
 public:
  IsometryField() = default;

  // lo/hi bound the tangential coordinates of the covered patch.
  IsometryField(const ParamMap& pm, const Vec& lo, const Vec& hi, double pitch, int threads = 1)
      : lo_(lo), pitch_(pitch), dim_(static_cast<int>(pm.sigma0().dim())) {
    total_ = 1;
    for (int a = 0; a < dim_; ++a) {
      counts_[a] = std::max(1, static_cast<int>(std::floor((hi(a) - lo(a)) / pitch)) + 1);
      total_ *= counts_[a];
    }
    const int levels = pm.depth() + 1;
    rotations_.resize(total_ * levels);
    const AffinePlane& s0 = pm.sigma0();
    const Eigen::Index n = s0.ambient_dim();
    const Mat pi_x0 = s0.tangent_projector();

    std::vector<double> deviation(total_, 0.0);
    std::vector<char> failed(total_, 0);
    parallel_for(total_, threads, [&](std::size_t node) {
      try {
      Vec t = coords_of(node);
      Vec x = s0.base() + s0.frame() * t;
      Vec z = x;
      Mat jac = Mat::Identity(n, n);
      Mat rk = Mat::Identity(n, n);
      rotations_[node * levels] = rk;
      for (int k = 0; k < levels - 1; ++k) {
        Mat d = pm.dsigma(k, z);
        z = pm.sigma(k, z);
        jac = d * jac;
        Mat frame = jac * s0.frame();
        orthonormalize(frame);
        Mat pi_y = frame * frame.transpose();
        Mat sk = pi_y * rk * pi_x0 +
                 (Mat::Identity(n, n) - pi_y) * rk * (Mat::Identity(n, n) - pi_x0);
        Eigen::SelfAdjointEigenSolver<Mat> es(sk * sk.transpose());
        double lam_min = es.eigenvalues().minCoeff();
        if (lam_min <= 1e-10)
          throw NumericError("isometry field: singular S_k, CCBP too rough");
        for (Eigen::Index i = 0; i < n; ++i)
          deviation[node] = std::max(deviation[node], std::abs(es.eigenvalues()(i) - 1.0));
        Vec inv_sqrt(n);
        for (Eigen::Index i = 0; i < n; ++i) inv_sqrt(i) = 1.0 / std::sqrt(es.eigenvalues()(i));
        rk = es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose() * sk;
        rotations_[node * levels + k + 1] = rk;
      }
      } catch (const std::exception&) {
        failed[node] = 1;
      }
    });
    for (char f : failed)
      if (f) throw NumericError("isometry field: singular S_k, CCBP too rough");
    for (double d : deviation) worst_gram_deviation_ = std::max(worst_gram_deviation_, d);
    levels_ = levels;
  }

  int levels() const { return levels_; }
  std::size_t nodes() const { return total_; }
  double pitch() const { return pitch_; }
  // worst |S_k S_k^T - I| met during the build; > 0.5 flags edge effects or
  // a rough CCBP
  double worst_gram_deviation() const { return worst_gram_deviation_; }

  // Nearest-node lookup; no interpolation of orthogonal matrices.
  const Mat& rotation(const Vec& tangential_coords, int k) const {
    std::size_t node = node_of(tangential_coords);
    return rotations_[node * levels_ + k];
  }

  std::size_t node_of(const Vec& t) const {
    std::size_t idx = 0, stridev = 1;
    for (int a = 0; a < dim_; ++a) {
      long ia = std::lround((t(a) - lo_(a)) / pitch_);
      ia = std::max(0l, std::min(static_cast<long>(counts_[a]) - 1, ia));
      idx += static_cast<std::size_t>(ia) * stridev;
      stridev *= counts_[a];
    }
    return idx;
  }

  Vec coords_of(std::size_t node) const {
    Vec t = Vec::Zero(dim_);
    std::size_t rem = node;
    for (int a = 0; a < dim_; ++a) {
      t(a) = lo_(a) + static_cast<double>(rem % counts_[a]) * pitch_;
      rem /= counts_[a];
    }
    return t;
  }

 private:
  Vec lo_;
  double pitch_ = 1.0;
  int dim_ = 1;
  int levels_ = 0;
  std::size_t total_ = 0;
  double worst_gram_deviation_ = 0.0;
  std::array<int, kMaxDim> counts_{};
  std::vector<Mat> rotations_;
};

// ---------------------------------------------------------------------------
// Cutoff ladder rho_k

// h: smooth monotone, 0 on [0,1], 1 on [2,inf); rho_0 = h(|y|),
// rho_k = h(|y|/r_k) - h(|y|/r_{k-1}), with the deepest term truncated so
// the ladder sums to 1 for y != 0.
struct CutoffLadder {
  int depth = 0;  // deepest level K

  static double h(double t) {
    if (t <= 1.0) return 0.0;
    if (t >= 2.0) return 1.0;
    return BumpProfile::q(t - 1.0);
  }

  double rho(int k, double dist) const {
    if (dist <= 0.0) return k == depth ? 1.0 : 0.0;
    if (depth == 0) return k == 0 ? 1.0 : 0.0;
    if (k == 0) return h(dist);
    if (k < depth) return h(dist / scale_radius(k)) - h(dist / scale_radius(k - 1));
    return 1.0 - h(dist / scale_radius(depth - 1));
  }
};

// ---------------------------------------------------------------------------
// The global map g

// g(z) = sum_k rho_k(q(z)) { f_k(p(z)) + R_k(p(z)) q(z) }; identity when
// dist(z, Sigma_0) >= 2 and equal to f on Sigma_0.  The R_k come from the
// field's nearest lattice node; the f_k are evaluated exactly.
inline Vec g_map(const ParamMap& pm, const IsometryField& field, const Vec& z) {
  const AffinePlane& s0 = pm.sigma0();
  Split s = split(s0, z);
  double dist = s.q.norm();
  if (dist >= 2.0) return z;
  Trajectory tr = pm.evaluate(s.p, pm.depth());
  if (dist == 0.0) return tr.final_state();
  CutoffLadder ladder{pm.depth()};
  Vec t = s0.coords(s.p);
  Vec out = Vec::Zero(z.size());
  for (int k = 0; k <= pm.depth(); ++k) {
    double w = ladder.rho(k, dist);
    if (w == 0.0) continue;
    out += w * (tr.states[k] + field.rotation(t, k) * s.q);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Saw-tooth domain

// Omega_A = (R^n \ V) union { z in V : |q(z)| > A dist(p(z), F_inf) }, with
// F_inf sampled on Sigma_0 as preimages of the retained deepest centers.
struct SawTooth {
  double amplitude = 1.0;  // A
  std::vector<Vec> f_inf;  // sample of F_inf on Sigma_0
  double v_radius = 40.0;

  bool member(const AffinePlane& sigma0, const Vec& z) const {
    if (f_inf.empty()) throw NumericError("SawTooth: empty F_inf sample");
    Split s = split(sigma0, z);
    double dist = s.q.norm();
    if (dist >= v_radius) return true;
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& u : f_inf) best = std::min(best, (s.p - u).norm());
    return dist > amplitude * best;
  }
};

// Tangential Newton inversion of f_K: find u on Sigma_0 whose image has the
// same tangential coordinates as target; tolerance 1e-8 r_K.
inline Vec invert_on_sigma0(const ParamMap& pm, const Vec& target, int max_iter = 60) {
  const AffinePlane& s0 = pm.sigma0();
  Vec t = s0.coords(s0.project(target));
  const double tol = 1e-8 * scale_radius(pm.depth());
  for (int it = 0; it < max_iter; ++it) {
    Vec u = s0.base() + s0.frame() * t;
    Trajectory tr = pm.evaluate(u, pm.depth(), true);
    Vec resid = s0.frame().transpose() * (target - tr.final_state());
    if (resid.norm() <= tol) break;
    Mat m = s0.frame().transpose() * tr.jacobians.back() * s0.frame();
    t += m.partialPivLu().solve(resid);
  }
  return s0.base() + s0.frame() * t;
}

// F_inf from the retained deepest-level net centers.
inline SawTooth build_sawtooth(const ParamMap& pm, double amplitude, int threads = 1) {
  SawTooth st;
  st.amplitude = amplitude;
  const auto& centers = pm.ccbp().net.levels.back();
  st.f_inf.resize(centers.size());
  parallel_for(centers.size(), threads,
               [&](std::size_t j) { st.f_inf[j] = invert_on_sigma0(pm, centers[j]); });
  return st;
}

struct SawToothAudit {
  double min_margin = std::numeric_limits<double>::infinity();  // dist(g(z), E') / |q(z)|
  int tested = 0;
  bool any_zero = false;
};

inline SawToothAudit sawtooth_audit(const ParamMap& pm, const IsometryField& field,
                                    const SawTooth& st, const PointCloud& retained,
                                    const std::vector<Vec>& samples, int threads = 1) {
  SawToothAudit audit;
  UniformGrid grid(retained.points, 0.05);
  std::vector<double> margins(samples.size(), std::numeric_limits<double>::infinity());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const Vec& z = samples[i];
    if (!st.member(pm.sigma0(), z)) return;
    Split s = split(pm.sigma0(), z);
    double q = s.q.norm();
    if (q <= 0.0) return;
    Vec img = g_map(pm, field, z);
    double best = std::numeric_limits<double>::infinity();
    double radius = 0.1;
    for (; radius < 1e3; radius *= 4.0) {
      auto idx = grid.query_ball(img, radius);
      for (int a : idx) best = std::min(best, (retained.points[a] - img).norm());
      if (!idx.empty()) break;
    }
    if (!std::isfinite(best)) {
      for (const Vec& p : retained.points) best = std::min(best, (p - img).norm());
    }
    margins[i] = best / q;
  });
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!std::isfinite(margins[i])) continue;
    ++audit.tested;
    audit.min_margin = std::min(audit.min_margin, margins[i]);
    if (margins[i] == 0.0) audit.any_zero = true;
  }
  return audit;
}

}  // namespace reifenberg
