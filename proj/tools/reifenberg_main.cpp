// Batch front end: generate fixtures, build CCBPs, run the construction,
// emit audits and reports.  All inputs and outputs are JSON files with
// canonical key order and shortest round-trip floats, so identical inputs
// give byte-identical outputs.
//
// Exit codes: 0 success, 2 schema error, 3 audit failure, 4 numeric failure.

#include "reifenberg/reifenberg.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace rf = reifenberg;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = ".";
  int threads = 0;
  std::uint64_t seed = 0;
  bool force = false;
};

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("REIFENBERG_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 1;
}

rf::Json load_config(const CommonOpts& opts) {
  if (opts.config_path.empty()) throw rf::SchemaError("--config is required");
  return rf::read_json(opts.config_path);
}

void ensure_out(const CommonOpts& opts) { fs::create_directories(opts.out_dir); }

std::string out_path(const CommonOpts& opts, const std::string& name) {
  return (fs::path(opts.out_dir) / name).string();
}

rf::AffinePlane sigma0_from_config(const rf::Json& cfg, const rf::PointCloud& cloud) {
  if (!cfg.contains("sigma0") || cfg["sigma0"] == "auto") {
    rf::Ball everything(cloud.points.at(0), 1e9);
    return rf::fit_plane_l2(cloud, everything);
  }
  return rf::plane_from_json(cfg.at("sigma0"));
}

rf::FitMode fit_mode_from(const std::string& name) {
  if (name == "L2" || name == "l2") return rf::FitMode::L2;
  if (name == "L1" || name == "l1") return rf::FitMode::L1;
  if (name == "MINIMAX" || name == "minimax") return rf::FitMode::MINIMAX;
  throw rf::SchemaError("/fit_mode: expected L2, L1, or MINIMAX");
}

// ---------------------------------------------------------------------------

int cmd_gen(const CommonOpts& opts) {
  rf::Json cfg = load_config(opts);
  ensure_out(opts);
  std::string kind = cfg.value("kind", "");
  rf::PointCloud cloud;

  if (kind == "snowflake") {
    rf::SnowflakeSpec spec;
    spec.generations = cfg.value("generations", 4);
    if (cfg.contains("angles")) spec.angles = cfg["angles"].get<std::vector<double>>();
    spec.samples_per_edge = cfg.value("samples_per_edge", 1);
    if (cfg.contains("region")) {
      spec.region_lo = cfg["region"].value("lo", 0.0);
      spec.region_hi = cfg["region"].value("hi", -1.0);
      spec.region_factor = cfg["region"].value("factor", 1.0);
    }
    cloud = rf::snowflake(spec).cloud;
  } else if (kind == "mobius" || kind == "annulus") {
    rf::MobiusSpec spec;
    spec.tau = cfg.value("tau", 1e-3);
    spec.angular_samples = cfg.value("angular_samples", 256);
    spec.transverse_samples = cfg.value("transverse_samples", 5);
    spec.twisted = (kind == "mobius");
    cloud = rf::mobius(spec);
  } else if (kind == "graph") {
    cloud = rf::sine_graph(cfg.value("amplitude", 0.01), cfg.value("wavelength", 0.25),
                           cfg.value("samples", 1000));
  } else if (kind == "segment") {
    int samples = cfg.value("samples", 1000);
    cloud.intrinsic_dim = 1;
    for (int i = 0; i < samples; ++i) {
      rf::Vec p(2);
      p << static_cast<double>(i) / (samples - 1), 0.0;
      cloud.points.push_back(p);
      cloud.weights.push_back(1.0 / (samples - 1));
    }
  } else {
    throw rf::SchemaError("/kind: expected snowflake, mobius, annulus, graph, or segment");
  }

  rf::Json prov = rf::make_provenance(cfg);
  prov["command"] = "gen";
  rf::write_json(out_path(opts, "cloud.json"), rf::cloud_to_json(cloud, prov));
  std::cout << "wrote " << out_path(opts, "cloud.json") << " (" << cloud.size() << " points)\n";
  return 0;
}

int cmd_betas(const CommonOpts& opts, const std::string& cloud_path,
              const std::string& map_path) {
  rf::Json cfg = load_config(opts);
  ensure_out(opts);
  rf::PointCloud cloud = rf::cloud_from_json(rf::read_json(cloud_path));
  const int depth = cfg.value("depth", 4);
  const double q = cfg.value("q", 1.0);
  const int stride = cfg.value("stride", 1);
  if (!cloud.has_weights()) throw rf::SchemaError("beta_q with finite q requires weights");

  std::optional<rf::Ccbp> ccbp;
  if (!map_path.empty()) ccbp = rf::ccbp_from_json(rf::read_json(map_path));

  std::vector<int> base_ids;
  for (std::size_t i = 0; i < cloud.size(); i += stride) base_ids.push_back(static_cast<int>(i));
  rf::BetaProfile profile = rf::compute_beta_profile(
      cloud, base_ids, depth, q, ccbp ? &*ccbp : nullptr, resolve_threads(opts.threads));

  rf::Json prov = rf::make_provenance(cfg);
  prov["command"] = "betas";
  rf::write_json(out_path(opts, "profile.json"), rf::profile_to_json(profile, prov));
  rf::write_text(out_path(opts, "profile.csv"), rf::profile_to_csv(profile));
  std::cout << "wrote " << out_path(opts, "profile.json") << " and profile.csv ("
            << profile.rows.size() << " rows)\n";
  return 0;
}

int cmd_build(const CommonOpts& opts, const std::string& cloud_path) {
  rf::Json cfg = load_config(opts);
  ensure_out(opts);
  rf::PointCloud cloud = rf::cloud_from_json(rf::read_json(cloud_path));
  const int depth = cfg.value("depth", 4);
  const double eps = cfg.value("eps", 0.1);
  const double c_audit = cfg.value("c_audit", 25.0);
  rf::FitMode mode = fit_mode_from(cfg.value("fit_mode", "L2"));
  double sep_scale = cfg.value("sep_scale", mode == rf::FitMode::L1 ? 1.644 : 1.0);
  const int threads = resolve_threads(opts.threads);

  rf::AffinePlane sigma0 = sigma0_from_config(cfg, cloud);

  std::function<bool(int, int)> keep;
  if (cfg.contains("stop")) {
    // J_1 stopping per point: retain x with sum_{k>=3} beta_1(x, r_k)^2 <= max
    double j1_max = cfg["stop"].value("j1_max", 1.0);
    std::vector<int> all_ids(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) all_ids[i] = static_cast<int>(i);
    rf::BetaProfile profile =
        rf::compute_beta_profile(cloud, all_ids, depth, 1.0, nullptr, threads);
    auto retained = std::make_shared<std::vector<char>>(cloud.size(), 0);
    for (const auto& agg : profile.aggregates)
      (*retained)[agg.point_id] = agg.j_1 <= j1_max ? 1 : 0;
    keep = [retained](int i, int) { return (*retained)[i] == 1; };
  }

  rf::MultiscaleNet net = rf::build_net(cloud, depth, keep, sep_scale);
  rf::Ccbp ccbp = rf::fit_ccbp(cloud, net, sigma0, mode, eps, threads);
  rf::AuditReport audit = rf::audit_ccbp(ccbp, c_audit);

  rf::Json prov = rf::make_provenance(cfg);
  prov["command"] = "build";
  rf::Json ccbp_json = rf::ccbp_to_json(ccbp, prov);
  ccbp_json["audit"] = rf::audit_to_json(audit);
  ccbp_json["depth"] = depth;
  rf::write_json(out_path(opts, "ccbp.json"), ccbp_json);
  rf::write_json(out_path(opts, "audit.json"), rf::audit_to_json(audit));
  std::cout << "wrote " << out_path(opts, "ccbp.json") << " (audit "
            << (audit.pass ? "pass" : "FAIL") << ", " << ccbp.net.center_count() << " centers)\n";
  return 0;
}

int cmd_audit(const CommonOpts& opts, const std::string& map_path) {
  rf::Json cfg = opts.config_path.empty() ? rf::Json::object() : load_config(opts);
  ensure_out(opts);
  rf::Json map_json = rf::read_json(map_path);
  rf::Ccbp ccbp = rf::ccbp_from_json(map_json);
  double c_audit = cfg.value("c_audit", 25.0);
  rf::AuditReport audit = rf::audit_ccbp(ccbp, c_audit);
  rf::write_json(out_path(opts, "audit.json"), rf::audit_to_json(audit));
  for (const auto& c : audit.conditions) {
    std::cout << (c.pass ? "pass " : "FAIL ") << c.name << " worst " << c.worst << " vs "
              << c.threshold << "\n";
  }
  return audit.pass ? 0 : 3;
}

int cmd_eval(const CommonOpts& opts, const std::string& map_path,
             const std::string& queries_path) {
  ensure_out(opts);
  rf::Json map_json = rf::read_json(map_path);
  rf::Ccbp ccbp = rf::ccbp_from_json(map_json);
  if (map_json.contains("audit") && !map_json["audit"].value("pass", true) && !opts.force) {
    std::cerr << "refusing to evaluate a CCBP whose audit failed (use --force)\n";
    return 3;
  }
  const int depth = map_json.value("depth", ccbp.depth());
  rf::ParamMap pm(ccbp, depth);

  rf::Json queries = rf::read_json(queries_path);
  if (queries.value("kind", "") != "queries") throw rf::SchemaError("/kind: expected queries");
  std::string mode = queries.value("mode", "f");
  std::vector<rf::Vec> points;
  for (const auto& p : queries.at("points")) points.push_back(rf::vec_from_json(p));
  const int threads = resolve_threads(opts.threads);

  std::vector<rf::Vec> images(points.size());
  double max_step_ratio = 0.0;
  if (mode == "f") {
    std::vector<double> ratios(points.size(), 0.0);
    rf::parallel_for(points.size(), threads, [&](std::size_t i) {
      rf::Trajectory tr = pm.evaluate(points[i]);
      images[i] = tr.final_state();
      for (std::size_t k = 0; k < tr.step_norms.size(); ++k)
        ratios[i] = std::max(ratios[i],
                             tr.step_norms[k] / (10.0 * rf::scale_radius(static_cast<int>(k))));
    });
    for (double r : ratios) max_step_ratio = std::max(max_step_ratio, r);
  } else if (mode == "g") {
    // cover the tangential footprint of the queries plus the blend margin
    const auto& s0 = pm.sigma0();
    const int d = static_cast<int>(s0.dim());
    rf::Vec lo = rf::Vec::Constant(d, 1e18), hi = rf::Vec::Constant(d, -1e18);
    for (const rf::Vec& p : points) {
      rf::Vec t = s0.coords(p);
      lo = lo.cwiseMin(t);
      hi = hi.cwiseMax(t);
    }
    lo.array() -= 0.5;
    hi.array() += 0.5;
    double pitch = queries.value("field_pitch", 1e-3);
    rf::IsometryField field(pm, lo, hi, pitch, threads);
    rf::parallel_for(points.size(), threads,
                     [&](std::size_t i) { images[i] = rf::g_map(pm, field, points[i]); });
  } else {
    throw rf::SchemaError("/mode: expected f or g");
  }

  rf::Json out;
  out["kind"] = "eval_result";
  out["schema_version"] = rf::kSchemaVersion;
  out["mode"] = mode;
  rf::Json imgs = rf::Json::array();
  for (const rf::Vec& p : images) imgs.push_back(rf::vec_to_json(p));
  out["images"] = std::move(imgs);
  out["report"] = rf::Json{{"tail_bound", (100.0 / 9.0) * rf::scale_radius(depth)},
                           {"max_step_ratio", max_step_ratio},
                           {"depth", depth}};
  rf::Json prov = rf::make_provenance(queries);
  prov["command"] = "eval";
  out["provenance"] = prov;
  rf::write_json(out_path(opts, "images.json"), out);
  std::cout << "wrote " << out_path(opts, "images.json") << " (" << images.size() << " images)\n";
  return 0;
}

int cmd_report(const CommonOpts& opts, const std::string& map_path,
               const std::string& cloud_path) {
  rf::Json cfg = opts.config_path.empty() ? rf::Json::object() : load_config(opts);
  ensure_out(opts);
  rf::Json report;
  report["kind"] = "consolidated_report";
  report["schema_version"] = rf::kSchemaVersion;

  if (!map_path.empty()) {
    rf::Json map_json = rf::read_json(map_path);
    rf::Ccbp ccbp = rf::ccbp_from_json(map_json);
    const int depth = map_json.value("depth", ccbp.depth());
    rf::ParamMap pm(ccbp, depth);
    if (map_json.contains("audit")) report["audit"] = map_json["audit"];

    if (cfg.value("distortion_pairs", 0) > 0) {
      const auto& s0 = pm.sigma0();
      const int d = static_cast<int>(s0.dim());
      rf::Vec lo = rf::Vec::Constant(d, 1e18), hi = rf::Vec::Constant(d, -1e18);
      for (const auto& lv : ccbp.net.levels) {
        for (const rf::Vec& c : lv) {
          rf::Vec t = s0.coords(c);
          lo = lo.cwiseMin(t);
          hi = hi.cwiseMax(t);
        }
      }
      auto pairs = rf::sample_pairs(s0, lo, hi, cfg["distortion_pairs"].get<int>(),
                                    opts.seed ? opts.seed : 0x5eed);
      rf::DistortionReport dist =
          rf::distortion(pm, pairs, 16, cfg.value("with_eps_profile", false),
                         resolve_threads(opts.threads));
      report["distortion"] = rf::distortion_to_json(dist);
    }
  }
  if (!cloud_path.empty()) {
    rf::Json cloud_json = rf::read_json(cloud_path);
    if (cloud_json.contains("provenance")) report["cloud_provenance"] = cloud_json["provenance"];
    report["cloud_points"] = cloud_json.value("points", rf::Json::array()).size();
  }
  rf::Json prov = rf::make_provenance(cfg);
  prov["command"] = "report";
  report["provenance"] = prov;
  rf::write_json(out_path(opts, "report.json"), report);
  std::cout << "wrote " << out_path(opts, "report.json") << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reifenberg parameterization toolkit"};
  app.require_subcommand(1);

  CommonOpts opts;
  app.add_option("--config", opts.config_path, "JSON config path")->envname("REIFENBERG_CONFIG");
  app.add_option("--out", opts.out_dir, "output directory");
  app.add_option("--threads", opts.threads, "worker threads (default: REIFENBERG_THREADS or 1)");
  app.add_option("--seed", opts.seed, "RNG seed for sampling");
  app.add_flag("--force", opts.force, "proceed past failed audits");

  std::string cloud_path, map_path, queries_path;
  CLI::App* gen = app.add_subcommand("gen", "generate a fixture cloud");
  CLI::App* betas = app.add_subcommand("betas", "compute beta/Jones profiles");
  betas->add_option("--cloud", cloud_path, "input cloud JSON")->required();
  betas->add_option("--map", map_path, "optional CCBP for eps columns");
  CLI::App* build = app.add_subcommand("build", "build a net + CCBP from a cloud");
  build->add_option("--cloud", cloud_path, "input cloud JSON")->required();
  CLI::App* audit = app.add_subcommand("audit", "re-audit a CCBP artifact");
  audit->add_option("--map", map_path, "CCBP JSON")->required();
  CLI::App* eval = app.add_subcommand("eval", "evaluate f or g on query points");
  eval->add_option("--map", map_path, "CCBP JSON")->required();
  eval->add_option("--queries", queries_path, "queries JSON")->required();
  CLI::App* report = app.add_subcommand("report", "consolidate artifacts into one report");
  report->add_option("--map", map_path, "CCBP JSON");
  report->add_option("--cloud", cloud_path, "cloud JSON");
  for (CLI::App* sc : {gen, betas, build, audit, eval, report}) sc->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(opts);
    if (betas->parsed()) return cmd_betas(opts, cloud_path, map_path);
    if (build->parsed()) return cmd_build(opts, cloud_path);
    if (audit->parsed()) return cmd_audit(opts, map_path);
    if (eval->parsed()) return cmd_eval(opts, map_path, queries_path);
    if (report->parsed()) return cmd_report(opts, map_path, cloud_path);
  } catch (const rf::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
