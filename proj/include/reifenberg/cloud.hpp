#pragma once

#include "reifenberg/geom.hpp"

#include <vector>

namespace reifenberg {

// Weighted sample of a d-dimensional set in R^n.  Weights approximate the
// d-dimensional Hausdorff mass carried by each sample.  Normals are only
// meaningful when d = n - 1; tangent frames (n x d) are optional and carried
// by the generators that know them exactly.
struct PointCloud {
  std::vector<Vec> points;
  std::vector<double> weights;
  std::vector<Vec> normals;        // empty or one unit vector per point
  std::vector<Mat> tangent_frames; // empty or one n x d frame per point
  int intrinsic_dim = 1;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  Eigen::Index ambient_dim() const { return points.empty() ? 0 : points.front().size(); }
  bool has_weights() const { return weights.size() == points.size(); }
  bool has_normals() const { return normals.size() == points.size(); }
  bool has_frames() const { return tangent_frames.size() == points.size(); }

  void validate() const {
    if (!weights.empty() && weights.size() != points.size())
      throw SchemaError("PointCloud: weight count mismatch");
    if (!normals.empty() && normals.size() != points.size())
      throw SchemaError("PointCloud: normal count mismatch");
    if (!tangent_frames.empty() && tangent_frames.size() != points.size())
      throw SchemaError("PointCloud: frame count mismatch");
    for (double w : weights)
      if (!(w > 0.0)) throw SchemaError("PointCloud: weights must be positive");
    for (const Vec& nrm : normals)
      if (std::abs(nrm.norm() - 1.0) > 1e-10) throw SchemaError("PointCloud: normals must be unit");
  }

  double total_mass() const {
    double m = 0.0;
    for (double w : weights) m += w;
    return m;
  }

  struct Bounds {
    Vec lo, hi;
  };
  Bounds bounding_box() const {
    if (points.empty()) throw GeometryError("PointCloud: empty cloud has no bounding box");
    Bounds b{points.front(), points.front()};
    for (const Vec& p : points) {
      b.lo = b.lo.cwiseMin(p);
      b.hi = b.hi.cwiseMax(p);
    }
    return b;
  }
};

}  // namespace reifenberg
