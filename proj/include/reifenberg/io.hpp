#pragma once

#include "reifenberg/cloud.hpp"
#include "reifenberg/flow.hpp"
#include "reifenberg/nets.hpp"
#include "reifenberg/profile.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

namespace reifenberg {

using Json = nlohmann::json;  // std::map keys give canonical (sorted) order

inline constexpr int kSchemaVersion = 1;

// Shortest round-trip decimal for CSV columns.
inline std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// Basic values

inline Json vec_to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

inline Vec vec_from_json(const Json& a) {
  if (!a.is_array() || a.empty() || a.size() > kMaxDim)
    throw SchemaError("expected a coordinate array of length 1..8");
  Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
  return v;
}

// Frames serialize as a list of direction vectors (columns).
inline Json frame_to_json(const Mat& m) {
  Json a = Json::array();
  for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(vec_to_json(m.col(c)));
  return a;
}

inline Mat frame_from_json(const Json& a, Eigen::Index n) {
  if (!a.is_array() || a.empty()) throw SchemaError("expected a frame (list of directions)");
  Mat m(n, a.size());
  for (std::size_t c = 0; c < a.size(); ++c) {
    Vec col = vec_from_json(a[c]);
    if (col.size() != n) throw SchemaError("frame direction has wrong dimension");
    m.col(c) = col;
  }
  return m;
}

inline Json plane_to_json(const AffinePlane& p) {
  return Json{{"base", vec_to_json(p.base())}, {"frame", frame_to_json(p.frame())}};
}

inline AffinePlane plane_from_json(const Json& j) {
  Vec base = vec_from_json(j.at("base"));
  Mat frame = frame_from_json(j.at("frame"), base.size());
  return AffinePlane(base, frame);
}

// ---------------------------------------------------------------------------
// Provenance

inline Json make_provenance(const Json& config) {
  Json p;
  p["config"] = config;
  p["config_hash"] = fnv1a(config.dump());
  p["library_version"] = kLibraryVersion;
  return p;
}

// ---------------------------------------------------------------------------
// PointCloud

inline Json cloud_to_json(const PointCloud& cloud, const Json& provenance = Json::object()) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "point_cloud";
  j["dim"] = cloud.ambient_dim();
  j["intrinsic_dim"] = cloud.intrinsic_dim;
  Json pts = Json::array();
  for (const Vec& p : cloud.points) pts.push_back(vec_to_json(p));
  j["points"] = std::move(pts);
  if (cloud.has_weights()) j["weights"] = cloud.weights;
  if (cloud.has_normals()) {
    Json ns = Json::array();
    for (const Vec& n : cloud.normals) ns.push_back(vec_to_json(n));
    j["normals"] = std::move(ns);
  }
  if (cloud.has_frames()) {
    Json fs = Json::array();
    for (const Mat& f : cloud.tangent_frames) fs.push_back(frame_to_json(f));
    j["tangent_frames"] = std::move(fs);
  }
  if (!provenance.empty()) j["provenance"] = provenance;
  return j;
}

inline PointCloud cloud_from_json(const Json& j) {
  if (j.value("kind", "") != "point_cloud") throw SchemaError("/kind: expected point_cloud");
  PointCloud cloud;
  cloud.intrinsic_dim = j.at("intrinsic_dim").get<int>();
  if (!j.contains("points") || !j["points"].is_array()) throw SchemaError("/points: missing array");
  for (const auto& p : j["points"]) cloud.points.push_back(vec_from_json(p));
  if (j.contains("weights")) cloud.weights = j["weights"].get<std::vector<double>>();
  if (j.contains("normals"))
    for (const auto& p : j["normals"]) cloud.normals.push_back(vec_from_json(p));
  if (j.contains("tangent_frames"))
    for (const auto& f : j["tangent_frames"])
      cloud.tangent_frames.push_back(frame_from_json(f, cloud.ambient_dim()));
  cloud.validate();
  return cloud;
}

// ---------------------------------------------------------------------------
// Nets and CCBPs

inline Json net_to_json(const MultiscaleNet& net) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "multiscale_net";
  j["scale_rule"] = "pow10";
  j["sep_scale"] = net.sep_scale;
  Json levels = Json::array();
  for (const auto& lv : net.levels) {
    Json centers = Json::array();
    for (const Vec& c : lv) centers.push_back(vec_to_json(c));
    levels.push_back(std::move(centers));
  }
  j["levels"] = std::move(levels);
  return j;
}

inline MultiscaleNet net_from_json(const Json& j) {
  if (j.value("kind", "") != "multiscale_net") throw SchemaError("/kind: expected multiscale_net");
  MultiscaleNet net;
  net.sep_scale = j.value("sep_scale", 1.0);
  for (const auto& lv : j.at("levels")) {
    std::vector<Vec> centers;
    for (const auto& c : lv) centers.push_back(vec_from_json(c));
    net.levels.push_back(std::move(centers));
  }
  return net;
}

inline Json ccbp_to_json(const Ccbp& ccbp, const Json& provenance = Json::object()) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["kind"] = "ccbp";
  j["eps"] = ccbp.eps;
  j["net"] = net_to_json(ccbp.net);
  j["sigma0"] = plane_to_json(ccbp.sigma0);
  Json planes = Json::array();
  for (const auto& lv : ccbp.planes) {
    Json row = Json::array();
    for (const AffinePlane& p : lv) row.push_back(plane_to_json(p));
    planes.push_back(std::move(row));
  }
  j["planes"] = std::move(planes);
  if (!provenance.empty()) j["provenance"] = provenance;
  return j;
}

inline Ccbp ccbp_from_json(const Json& j) {
  if (j.value("kind", "") != "ccbp") throw SchemaError("/kind: expected ccbp");
  Ccbp ccbp;
  ccbp.eps = j.at("eps").get<double>();
  ccbp.net = net_from_json(j.at("net"));
  ccbp.sigma0 = plane_from_json(j.at("sigma0"));
  for (const auto& lv : j.at("planes")) {
    std::vector<AffinePlane> row;
    for (const auto& p : lv) row.push_back(plane_from_json(p));
    ccbp.planes.push_back(std::move(row));
  }
  if (ccbp.planes.size() != ccbp.net.levels.size())
    throw SchemaError("/planes: level count differs from net");
  return ccbp;
}

// ---------------------------------------------------------------------------
// Reports

inline Json audit_to_json(const AuditReport& report) {
  Json j;
  j["kind"] = "audit_report";
  j["schema_version"] = kSchemaVersion;
  j["pass"] = report.pass;
  j["eps"] = report.eps;
  j["eps_audit"] = report.eps_audit;
  Json conds = Json::array();
  for (const auto& c : report.conditions) {
    conds.push_back(Json{{"name", c.name},
                         {"worst", c.worst},
                         {"threshold", c.threshold},
                         {"pass", c.pass},
                         {"k", c.k},
                         {"i", c.i},
                         {"j", c.j},
                         {"worst_angle", c.worst_angle}});
  }
  j["conditions"] = std::move(conds);
  return j;
}

inline Json profile_to_json(const BetaProfile& profile, const Json& provenance = Json::object()) {
  Json j;
  j["kind"] = "beta_profile";
  j["schema_version"] = kSchemaVersion;
  j["q"] = profile.q;
  j["depth"] = profile.depth;
  Json rows = Json::array();
  for (const auto& r : profile.rows) {
    rows.push_back(Json{{"point_id", r.point_id},
                        {"k", r.k},
                        {"beta_inf", r.beta_inf},
                        {"beta_q", r.beta_q},
                        {"eps_k", r.eps_k},
                        {"eps_prime_k", r.eps_prime_k},
                        {"alpha_k", r.alpha_k}});
  }
  j["rows"] = std::move(rows);
  Json aggs = Json::array();
  for (const auto& a : profile.aggregates) {
    aggs.push_back(
        Json{{"point_id", a.point_id}, {"j_inf", a.j_inf}, {"j_1", a.j_1}, {"j", a.j}});
  }
  j["aggregates"] = std::move(aggs);
  if (!provenance.empty()) j["provenance"] = provenance;
  return j;
}

inline std::string profile_to_csv(const BetaProfile& profile) {
  std::ostringstream out;
  out << "point_id,k,beta_inf,beta_1,eps_k,eps_prime_k\n";
  for (const auto& r : profile.rows) {
    out << r.point_id << ',' << r.k << ',' << format_double(r.beta_inf) << ','
        << format_double(r.beta_q) << ',' << format_double(r.eps_k) << ','
        << format_double(r.eps_prime_k) << '\n';
  }
  return out.str();
}

inline Json distortion_to_json(const DistortionReport& rep) {
  Json j;
  j["kind"] = "distortion_report";
  j["schema_version"] = kSchemaVersion;
  j["pairs"] = rep.pairs;
  j["ratio_sup"] = rep.ratio_sup;
  j["ratio_inf"] = rep.ratio_inf;
  j["spread"] = rep.spread;
  j["holder_upper"] = rep.holder_upper;
  j["holder_lower"] = rep.holder_lower;
  j["eps_prime_sq_max"] = rep.eps_prime_sq_max;
  j["bin_log_sep"] = rep.bin_log_sep;
  j["bin_max_ratio"] = rep.bin_max_ratio;
  j["bin_min_ratio"] = rep.bin_min_ratio;
  return j;
}

// ---------------------------------------------------------------------------
// Files

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("cannot open for writing: " + path);
  out << text;
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open: " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw SchemaError(std::string("JSON parse error in ") + path + ": " + e.what());
  }
  return j;
}

}  // namespace reifenberg
