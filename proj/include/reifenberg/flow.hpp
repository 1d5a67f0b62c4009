#pragma once

#include "reifenberg/unity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace reifenberg {

enum class RegionTag { Inside8, Shell, Outside };

struct Trajectory {
  std::vector<Vec> states;        // z_0 .. z_upto
  std::vector<double> step_norms; // |z_{k+1} - z_k|
  std::vector<RegionTag> tags;    // region of z_k relative to V_k^8 / V_k^10
  std::vector<Mat> jacobians;     // cumulative Df_k(z), only when requested
  double tail_bound = 0.0;        // geometric bound on |f - f_upto|

  const Vec& final_state() const { return states.back(); }
};

// Evaluator for the sigma_k maps, the iterated f_k, and their Jacobians.
// Immutable after construction; evaluation is pure.
class ParamMap {
 public:
  ParamMap(Ccbp ccbp, int depth)
      : ccbp_(std::move(ccbp)), depth_(std::min(depth, ccbp_.depth())), index_(ccbp_.net) {}

  const Ccbp& ccbp() const { return ccbp_; }
  const LevelIndex& index() const { return index_; }
  int depth() const { return depth_; }
  const AffinePlane& sigma0() const { return ccbp_.sigma0; }

  // sigma_k(y) = psi_k(y) y + sum_j theta_{j,k}(y) pi_{j,k}(y); identity
  // outside V_k^10.
  Vec sigma(int k, const Vec& y) const {
    Partition part = partition(ccbp_.net, index_, k, y);
    if (part.centers.empty() || part.w == 0.0) return y;
    Vec out = part.psi * y;
    for (std::size_t a = 0; a < part.centers.size(); ++a) {
      out += part.theta[a] * ccbp_.planes[k][part.centers[a]].project(y);
    }
    return out;
  }

  // Analytic Jacobian: D sigma_k = I + sum_j (pi_j(y) - y) grad theta_j^T
  //                                + sum_j theta_j (Pi_j - I).
  Mat dsigma(int k, const Vec& y) const {
    const Eigen::Index n = y.size();
    Partition part = partition(ccbp_.net, index_, k, y);
    Mat out = Mat::Identity(n, n);
    if (part.centers.empty() || part.w == 0.0) return out;
    for (std::size_t a = 0; a < part.centers.size(); ++a) {
      const AffinePlane& plane = ccbp_.planes[k][part.centers[a]];
      Vec displacement = plane.project(y) - y;
      out += displacement * part.grad_theta[a].transpose();
      out += part.theta[a] * (plane.tangent_projector() - Mat::Identity(n, n));
    }
    return out;
  }

  RegionTag region(int k, const Vec& y) const {
    double rk = scale_radius(k);
    if (!index_.near(k, y, 8.0 * rk).empty()) return RegionTag::Inside8;
    if (!index_.near(k, y, 10.0 * rk).empty()) return RegionTag::Shell;
    return RegionTag::Outside;
  }

  // States f_0(z) .. f_upto(z), where f_{k+1} = sigma_k o f_k; the default
  // depth gives f_K.  tags[k] is the region of f_k(z) at level k.
  Trajectory evaluate(const Vec& z, int upto = -1, bool want_jacobian = false) const {
    if (upto < 0) upto = depth_;
    upto = std::min(upto, depth_);
    Trajectory tr;
    tr.states.reserve(upto + 1);
    tr.states.push_back(z);
    if (want_jacobian) tr.jacobians.push_back(Mat::Identity(z.size(), z.size()));
    for (int k = 0; k < upto; ++k) {
      const Vec& cur = tr.states.back();
      tr.tags.push_back(region(k, cur));
      Vec next = sigma(k, cur);
      tr.step_norms.push_back((next - cur).norm());
      if (want_jacobian) tr.jacobians.push_back(dsigma(k, cur) * tr.jacobians.back());
      tr.states.push_back(next);
    }
    tr.tail_bound = (100.0 / 9.0) * scale_radius(upto);
    return tr;
  }

  // f_upto(z); the default is the truncated limit map f_K.
  Vec f(const Vec& z, int upto = -1) const {
    if (upto < 0) upto = depth_;
    Vec cur = z;
    for (int k = 0; k < std::min(upto, depth_); ++k) cur = sigma(k, cur);
    return cur;
  }

  // Tangent frame of Sigma_k at f_k(x): pushforward of the model frame by
  // the Jacobian chain, re-orthonormalized.
  Mat tangent_frame(const Trajectory& tr, int k) const {
    Mat frame = tr.jacobians.at(k) * ccbp_.sigma0.frame();
    orthonormalize(frame);
    return frame;
  }

 private:
  Ccbp ccbp_;
  int depth_;
  LevelIndex index_;
};

// ---------------------------------------------------------------------------
// Surface sampling

// Lattice sample of Sigma_0 pushed through f_k, with the source nodes kept
// for provenance.
struct SurfaceSample {
  std::vector<Vec> source;
  std::vector<Vec> image;
  double pitch = 0.0;
  int level = 0;
};

inline SurfaceSample push_grid(const ParamMap& pm, int level, double pitch, const Vec& lo,
                               const Vec& hi, int threads = 1) {
  const AffinePlane& s0 = pm.sigma0();
  const int d = static_cast<int>(s0.dim());
  std::array<int, kMaxDim> counts{};
  std::size_t total = 1;
  for (int a = 0; a < d; ++a) {
    counts[a] = std::max(1, static_cast<int>(std::floor((hi(a) - lo(a)) / pitch)) + 1);
    total *= counts[a];
  }
  SurfaceSample out;
  out.pitch = pitch;
  out.level = level;
  out.source.resize(total);
  out.image.resize(total);
  parallel_for(total, threads, [&](std::size_t idx) {
    std::size_t rem = idx;
    Vec t = Vec::Zero(d);
    for (int a = 0; a < d; ++a) {
      int ia = static_cast<int>(rem % counts[a]);
      rem /= counts[a];
      t(a) = lo(a) + ia * pitch;
    }
    Vec p = s0.base() + s0.frame() * t;
    out.source[idx] = p;
    out.image[idx] = pm.f(p, level);  // f_level = sigma_{level-1} o ... o sigma_0
  });
  return out;
}

// ---------------------------------------------------------------------------
// Graph check (small Lipschitz graph property of Sigma_k over P_{j,k})

struct GraphCheck {
  bool single_valued = true;
  double max_slope = 0.0;
  int samples_in_box = 0;
  bool enough_samples = true;
};

// Projects the Sigma_k sample inside D(x_{j,k}, P_{j,k}, 49 r_k) to the
// plane and verifies injectivity at the sample resolution; the Lipschitz
// estimate is the worst secant slope.
inline GraphCheck graph_check(const ParamMap& pm, const SurfaceSample& sample, int k, int j,
                              int max_samples = 3000) {
  const AffinePlane& plane = pm.ccbp().plane(k, j);
  const Vec& x = pm.ccbp().center(k, j);
  const double r = 49.0 * scale_radius(k);
  const AffinePlane through = plane.translated_through(x);

  std::vector<Vec> ts;
  std::vector<Vec> vs;
  for (const Vec& p : sample.image) {
    Vec t = through.coords(p);
    Vec v = through.perp_project(p);
    if (t.norm() <= r && v.norm() <= r) {
      ts.push_back(t);
      vs.push_back(v);
    }
  }
  GraphCheck out;
  out.samples_in_box = static_cast<int>(ts.size());
  if (out.samples_in_box < 2) {
    out.enough_samples = false;
    return out;
  }
  int stride = 1 + (out.samples_in_box - 1) / max_samples;
  const double h = sample.pitch;
  for (std::size_t a = 0; a < ts.size(); a += stride) {
    for (std::size_t b = a + stride; b < ts.size(); b += stride) {
      double dt = (ts[a] - ts[b]).norm();
      double dv = (vs[a] - vs[b]).norm();
      if (dt <= 0.25 * h) {
        if (dv > 0.25 * h) out.single_valued = false;
      } else if (dt >= 0.5 * h) {
        out.max_slope = std::max(out.max_slope, dv / dt);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flatness of the output surface

struct FlatnessReport {
  double sup = 0.0;          // worst d_{z,t}(Sigma_sample, P) over tested (z, t)
  double sup_over_eps = 0.0;
  int tested = 0;
};

// For sampled z on Sigma and scales t: fit the best plane through z and
// measure the two-sided normalized distance between the sample and the
// plane inside B(z, t).
inline FlatnessReport flatness_check(const ParamMap& pm, const SurfaceSample& surf,
                                     const std::vector<int>& base_ids,
                                     const std::vector<double>& scales, double eps_in,
                                     int plane_samples_per_axis = 20) {
  PointCloud sigma_cloud;
  sigma_cloud.points = surf.image;
  sigma_cloud.intrinsic_dim = static_cast<int>(pm.sigma0().dim());
  UniformGrid grid(sigma_cloud.points, std::max(surf.pitch * 4.0, 1e-9));

  FlatnessReport report;
  for (int id : base_ids) {
    const Vec& z = surf.image[id];
    for (double t : scales) {
      auto idx = grid.query_ball(z, t);
      if (static_cast<int>(idx.size()) < sigma_cloud.intrinsic_dim + 1) continue;
      PointCloud local;
      local.intrinsic_dim = sigma_cloud.intrinsic_dim;
      for (int i : idx) local.points.push_back(sigma_cloud.points[i]);
      MinimaxFit fit = fit_plane_minimax(local, z, t);
      double side_set = fit.sup;  // sup over samples in ball of dist to plane

      // plane -> sample side on a lattice of the plane cap
      double side_plane = 0.0;
      const int d = local.intrinsic_dim;
      const int m = plane_samples_per_axis;
      std::array<int, kMaxDim> counts{};
      std::size_t total = 1;
      for (int a = 0; a < d; ++a) {
        counts[a] = m;
        total *= m;
      }
      for (std::size_t cell = 0; cell < total; ++cell) {
        std::size_t rem = cell;
        Vec tt = Vec::Zero(d);
        for (int a = 0; a < d; ++a) {
          int ia = static_cast<int>(rem % counts[a]);
          rem /= counts[a];
          tt(a) = -t + (2.0 * t) * (ia + 0.5) / m;
        }
        if (tt.norm() > t) continue;
        Vec p = fit.plane.base() + fit.plane.frame() * tt;
        if ((p - z).norm() > t) continue;
        auto close = grid.query_ball(p, 2.0 * (side_plane > 0 ? side_plane : t));
        double best = std::numeric_limits<double>::infinity();
        for (int i : close) best = std::min(best, (sigma_cloud.points[i] - p).norm());
        if (close.empty()) {
          for (const Vec& q : sigma_cloud.points) best = std::min(best, (q - p).norm());
        }
        side_plane = std::max(side_plane, best);
      }
      double dd = std::max(side_set, side_plane) / t;
      report.sup = std::max(report.sup, dd);
      ++report.tested;
    }
  }
  report.sup_over_eps = (eps_in > 0.0) ? report.sup / eps_in : 0.0;
  return report;
}

// ---------------------------------------------------------------------------
// Distortion measurement

struct DistortionReport {
  int pairs = 0;
  double ratio_sup = 0.0;
  double ratio_inf = std::numeric_limits<double>::infinity();
  double spread = 0.0;                  // ratio_sup / ratio_inf
  double holder_upper = 1.0;            // exponent fit on per-bin maxima
  double holder_lower = 1.0;            // exponent fit on per-bin minima
  double eps_prime_sq_max = 0.0;        // max over endpoints of sum_k eps'_k(f_k(z))^2
  std::vector<double> bin_log_sep;      // diagnostics for reports
  std::vector<double> bin_max_ratio;
  std::vector<double> bin_min_ratio;
};

inline std::vector<std::pair<Vec, Vec>> sample_pairs(const AffinePlane& sigma0, const Vec& lo,
                                                     const Vec& hi, int count, std::uint64_t seed,
                                                     double sep_min = 1e-4, double sep_max = 1.0) {
  const int d = static_cast<int>(sigma0.dim());
  SplitMix64 rng(seed);
  std::vector<std::pair<Vec, Vec>> pairs;
  pairs.reserve(count);
  int guard = 0;
  while (static_cast<int>(pairs.size()) < count && guard < 100 * count) {
    ++guard;
    Vec a = Vec::Zero(d);
    for (int c = 0; c < d; ++c) a(c) = rng.uniform(lo(c), hi(c));
    double sep = sep_min * std::pow(sep_max / sep_min, rng.uniform());
    Vec dir = Vec::Zero(d);
    double nn = 0.0;
    do {
      for (int c = 0; c < d; ++c) dir(c) = rng.normal();
      nn = dir.norm();
    } while (nn < 1e-12);
    Vec b = a + (sep / nn) * dir;
    bool inside = true;
    for (int c = 0; c < d; ++c) inside = inside && b(c) >= lo(c) && b(c) <= hi(c);
    if (!inside) continue;
    pairs.emplace_back(sigma0.base() + sigma0.frame() * a, sigma0.base() + sigma0.frame() * b);
  }
  return pairs;
}

namespace detail {
inline double fit_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = static_cast<int>(xs.size());
  for (int i = 0; i < n; ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
  }
  double denom = n * sxx - sx * sx;
  if (std::abs(denom) < 1e-30) return 1.0;
  return (n * sxy - sx * sy) / denom;
}
}  // namespace detail

// Log-log envelope regression of |f(a) - f(b)| against |a - b|, sup/inf of
// the ratio, and the squared eps' sums along trajectories.
inline DistortionReport distortion_of_map(const std::function<Vec(const Vec&)>& map,
                                          const std::vector<std::pair<Vec, Vec>>& pairs,
                                          int bins = 16, const ParamMap* pm = nullptr,
                                          int threads = 1) {
  DistortionReport rep;
  if (pairs.empty()) throw NumericError("distortion: degenerate pair set");
  rep.pairs = static_cast<int>(pairs.size());

  std::vector<double> log_sep(pairs.size()), log_ratio(pairs.size()),
      eps_sq(pairs.size(), 0.0);
  parallel_for(pairs.size(), threads, [&](std::size_t i) {
    const auto& [a, b] = pairs[i];
    Vec fa = map(a), fb = map(b);
    double sep = (a - b).norm();
    double dist = (fa - fb).norm();
    log_sep[i] = std::log10(sep);
    log_ratio[i] = std::log10(std::max(dist / sep, 1e-300));
    if (pm) {
      Trajectory tr = pm->evaluate(a, pm->depth());
      double s = 0.0;
      for (int k = 0; k <= pm->depth(); ++k) {
        EpsProfile ep = eps_profiles(pm->ccbp(), pm->index(), tr.states[k], k);
        s += ep.eps_prime_k * ep.eps_prime_k;
      }
      eps_sq[i] = s;
    }
  });

  double lo = *std::min_element(log_sep.begin(), log_sep.end());
  double hi = *std::max_element(log_sep.begin(), log_sep.end());
  double span = std::max(hi - lo, 1e-12);
  std::vector<double> bmax(bins, -std::numeric_limits<double>::infinity());
  std::vector<double> bmin(bins, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    double ratio = std::pow(10.0, log_ratio[i]);
    rep.ratio_sup = std::max(rep.ratio_sup, ratio);
    rep.ratio_inf = std::min(rep.ratio_inf, ratio);
    int b = std::min(bins - 1, static_cast<int>((log_sep[i] - lo) / span * bins));
    bmax[b] = std::max(bmax[b], log_ratio[i]);
    bmin[b] = std::min(bmin[b], log_ratio[i]);
    rep.eps_prime_sq_max = std::max(rep.eps_prime_sq_max, eps_sq[i]);
  }
  rep.spread = rep.ratio_sup / rep.ratio_inf;

  std::vector<double> xs, ysu, ysl;
  for (int b = 0; b < bins; ++b) {
    if (!std::isfinite(bmax[b]) || !std::isfinite(bmin[b])) continue;
    double xc = lo + (b + 0.5) * span / bins;
    xs.push_back(xc);
    ysu.push_back(xc + bmax[b]);  // log |f(a)-f(b)| on the upper envelope
    ysl.push_back(xc + bmin[b]);
    rep.bin_log_sep.push_back(xc);
    rep.bin_max_ratio.push_back(std::pow(10.0, bmax[b]));
    rep.bin_min_ratio.push_back(std::pow(10.0, bmin[b]));
  }
  if (xs.size() >= 2) {
    rep.holder_upper = detail::fit_slope(xs, ysu);
    rep.holder_lower = detail::fit_slope(xs, ysl);
  }
  return rep;
}

inline DistortionReport distortion(const ParamMap& pm,
                                   const std::vector<std::pair<Vec, Vec>>& pairs, int bins = 16,
                                   bool with_eps_profile = false, int threads = 1) {
  return distortion_of_map([&](const Vec& z) { return pm.f(z); }, pairs, bins,
                           with_eps_profile ? &pm : nullptr, threads);
}

}  // namespace reifenberg
