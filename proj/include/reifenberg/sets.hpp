#pragma once

#include "reifenberg/cloud.hpp"

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

namespace reifenberg {

// Snowflake curve in R^2 built by edge replacement: each edge (a, b) becomes
// four edges through v1 = a + e/4, v2 = a + e/2 + (|e| tan(alpha) / 4) nu,
// v3 = a + 3e/4, with nu the left normal of the edge.  Endpoints and the
// projection onto the original segment stay fixed.
struct SnowflakeSpec {
  int generations = 4;
  std::vector<double> angles;  // per generation, radians, in [0, 0.3]
  Vec start, end;
  int samples_per_edge = 1;
  // Optional per-edge modulation: edges whose midpoint has horizontal
  // coordinate in [region_lo, region_hi] use angle * region_factor.
  double region_lo = 0.0, region_hi = -1.0, region_factor = 1.0;

  SnowflakeSpec() {
    start = Vec::Zero(2);
    end = Vec::Zero(2);
    end(0) = 1.0;
  }

  double angle_for(int gen, const Vec& midpoint) const {
    double a = angles.empty() ? 0.0 : angles[std::min<std::size_t>(gen, angles.size() - 1)];
    if (region_hi >= region_lo && midpoint(0) >= region_lo && midpoint(0) <= region_hi)
      a *= region_factor;
    return a;
  }

  void validate() const {
    if (generations < 0) throw SchemaError("snowflake: generations must be >= 0");
    if (samples_per_edge < 1) throw SchemaError("snowflake: samples_per_edge must be >= 1");
    for (double a : angles)
      if (a < 0.0 || a > 0.3) throw SchemaError("snowflake: angles must lie in [0, 0.3]");
    if (start.size() != 2 || end.size() != 2) throw SchemaError("snowflake: endpoints must be 2-D");
  }
};

struct SnowflakeOutput {
  PointCloud cloud;
  std::vector<Vec> vertices;                    // polyline vertices in order
  std::vector<std::vector<double>> angle_ledger;  // per sample: ancestor angles
  double total_length = 0.0;
};

inline SnowflakeOutput snowflake(const SnowflakeSpec& spec) {
  spec.validate();
  struct Edge {
    Vec a, b;
    std::vector<double> ancestry;
  };
  std::vector<Edge> edges{{spec.start, spec.end, {}}};
  for (int gen = 0; gen < spec.generations; ++gen) {
    std::vector<Edge> next;
    next.reserve(edges.size() * 4);
    for (const Edge& e : edges) {
      Vec d = e.b - e.a;
      double len = d.norm();
      Vec mid = 0.5 * (e.a + e.b);
      double alpha = spec.angle_for(gen, mid);
      Vec nu(2);
      nu << -d(1) / len, d(0) / len;  // left normal
      Vec v1 = e.a + 0.25 * d;
      Vec v2 = e.a + 0.5 * d + (len * std::tan(alpha) / 4.0) * nu;
      Vec v3 = e.a + 0.75 * d;
      auto child = [&](const Vec& p, const Vec& q) {
        Edge c{p, q, e.ancestry};
        c.ancestry.push_back(alpha);
        return c;
      };
      next.push_back(child(e.a, v1));
      next.push_back(child(v1, v2));
      next.push_back(child(v2, v3));
      next.push_back(child(v3, e.b));
    }
    edges.swap(next);
  }

  SnowflakeOutput out;
  out.cloud.intrinsic_dim = 1;
  out.vertices.reserve(edges.size() + 1);
  if (!edges.empty()) out.vertices.push_back(edges.front().a);
  const int m = spec.samples_per_edge;
  for (const Edge& e : edges) {
    out.vertices.push_back(e.b);
    double len = (e.b - e.a).norm();
    out.total_length += len;
    for (int i = 0; i < m; ++i) {
      double t = (i + 0.5) / m;
      out.cloud.points.push_back(e.a + t * (e.b - e.a));
      out.cloud.weights.push_back(len / m);
      out.angle_ledger.push_back(e.ancestry);
    }
  }
  return out;
}

// Closed-form total length of a snowflake with constant angle per generation
// and no regional modulation: |e| * prod_k (1/2 + 1/(2 cos alpha_k)).
inline double snowflake_length(const SnowflakeSpec& spec) {
  double len = (spec.end - spec.start).norm();
  for (int gen = 0; gen < spec.generations; ++gen) {
    double a = spec.angles.empty() ? 0.0 : spec.angles[std::min<std::size_t>(gen, spec.angles.size() - 1)];
    len *= 0.5 + 0.5 / std::cos(a);
  }
  return len;
}

// Mobius strip of half-width tau around the unit circle in R^3:
//   p(phi, s) = (1 + s cos(phi/2)) (cos phi, sin phi, 0) + s sin(phi/2) e_z.
struct MobiusSpec {
  double tau = 1e-3;
  int angular_samples = 256;
  int transverse_samples = 5;
  bool twisted = true;  // false gives the flat annulus control fixture

  void validate() const {
    if (!(tau > 0.0) || tau > 1e-2) throw SchemaError("mobius: tau must lie in (0, 1e-2]");
    if (angular_samples < 8 || transverse_samples < 1) throw SchemaError("mobius: sample counts");
  }
};

inline PointCloud mobius(const MobiusSpec& spec) {
  spec.validate();
  PointCloud cloud;
  cloud.intrinsic_dim = 2;
  const int na = spec.angular_samples;
  const int ns = spec.transverse_samples;
  const double dphi = 2.0 * M_PI / na;
  const double ds = (ns > 1) ? 2.0 * spec.tau / (ns - 1) : 2.0 * spec.tau;
  for (int i = 0; i < na; ++i) {
    double phi = i * dphi;
    double c = std::cos(phi), s = std::sin(phi);
    double ch = spec.twisted ? std::cos(0.5 * phi) : 1.0;
    double sh = spec.twisted ? std::sin(0.5 * phi) : 0.0;
    for (int j = 0; j < ns; ++j) {
      double t = (ns > 1) ? -spec.tau + j * ds : 0.0;
      Vec p(3);
      p << (1.0 + t * ch) * c, (1.0 + t * ch) * s, t * sh;
      Vec dp_s(3), dp_phi(3);
      dp_s << ch * c, ch * s, sh;
      double dch = spec.twisted ? -0.5 * sh : 0.0;
      double dsh = spec.twisted ? 0.5 * ch : 0.0;
      dp_phi << t * dch * c - (1.0 + t * ch) * s, t * dch * s + (1.0 + t * ch) * c, t * dsh;
      Mat frame(3, 2);
      frame.col(0) = dp_phi;
      frame.col(1) = dp_s;
      double area = std::sqrt(std::max(
          0.0, dp_phi.squaredNorm() * dp_s.squaredNorm() - std::pow(dp_phi.dot(dp_s), 2)));
      orthonormalize(frame);
      cloud.points.push_back(p);
      cloud.weights.push_back(area * dphi * ((ns > 1 && (j == 0 || j == ns - 1)) ? 0.5 * ds : ds));
      cloud.tangent_frames.push_back(frame);
      Vec nrm(3);
      nrm << frame.col(0)(1) * frame.col(1)(2) - frame.col(0)(2) * frame.col(1)(1),
          frame.col(0)(2) * frame.col(1)(0) - frame.col(0)(0) * frame.col(1)(2),
          frame.col(0)(0) * frame.col(1)(1) - frame.col(0)(1) * frame.col(1)(0);
      cloud.normals.push_back(nrm / nrm.norm());
    }
  }
  return cloud;
}

inline PointCloud annulus_strip(double tau, int angular_samples = 256, int transverse_samples = 5) {
  MobiusSpec spec;
  spec.tau = tau;
  spec.angular_samples = angular_samples;
  spec.transverse_samples = transverse_samples;
  spec.twisted = false;
  return mobius(spec);
}

// Graph of z = F(x) over the segment [0, 1] x {0} in R^2, with exact arc
// length weights from the derivative.  Used as a controllable flat-ish
// fixture; F is any smooth profile with derivative.
inline PointCloud graph_set(const std::function<double(double)>& f,
                            const std::function<double(double)>& df, int samples) {
  if (samples < 2) throw SchemaError("graph_set: need at least 2 samples");
  PointCloud cloud;
  cloud.intrinsic_dim = 1;
  const double h = 1.0 / samples;
  for (int i = 0; i < samples; ++i) {
    double x = (i + 0.5) * h;
    Vec p(2);
    p << x, f(x);
    double slope = df(x);
    cloud.points.push_back(p);
    cloud.weights.push_back(h * std::sqrt(1.0 + slope * slope));
    Vec nrm(2);
    nrm << -slope, 1.0;
    cloud.normals.push_back(nrm / nrm.norm());
    Mat frame(2, 1);
    frame << 1.0, slope;
    frame /= std::sqrt(1.0 + slope * slope);
    cloud.tangent_frames.push_back(frame);
  }
  return cloud;
}

// Single sine mode a sin(2 pi x / lambda); the standard Lipschitz-graph
// fixture for beta and Carleson checks.
inline PointCloud sine_graph(double amplitude, double wavelength, int samples) {
  double w = 2.0 * M_PI / wavelength;
  return graph_set([=](double x) { return amplitude * std::sin(w * x); },
                   [=](double x) { return amplitude * w * std::cos(w * x); }, samples);
}

}  // namespace reifenberg
