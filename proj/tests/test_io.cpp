#include "reifenberg/io.hpp"

#include "reifenberg/sets.hpp"

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

using namespace reifenberg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "reifenberg_io_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

#ifdef REIFENBERG_CLI_PATH
int run_cli(const std::string& args) {
  std::string cmd = std::string(REIFENBERG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}
#endif

PointCloud make_cloud() {
  MobiusSpec spec;
  spec.tau = 1e-3;
  spec.angular_samples = 24;
  spec.transverse_samples = 3;
  return mobius(spec);
}

}  // namespace

TEST_CASE("cloud json round trip preserves everything") {
  PointCloud cloud = make_cloud();
  Json j = cloud_to_json(cloud, make_provenance(Json{{"fixture", "mobius"}}));
  PointCloud back = cloud_from_json(j);

  REQUIRE(back.size() == cloud.size());
  REQUIRE(back.intrinsic_dim == cloud.intrinsic_dim);
  REQUIRE(back.has_normals());
  REQUIRE(back.has_frames());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK((back.points[i] - cloud.points[i]).norm() == 0.0);
    CHECK(back.weights[i] == cloud.weights[i]);
    CHECK((back.normals[i] - cloud.normals[i]).norm() == 0.0);
    CHECK((back.tangent_frames[i] - cloud.tangent_frames[i]).norm() == 0.0);
  }

  // canonical bytes: dump(parse(dump)) is a fixed point
  std::string once = j.dump(2);
  std::string twice = cloud_to_json(back, j["provenance"]).dump(2);
  CHECK(once == twice);
}

TEST_CASE("net and ccbp round trip bit-stably") {
  SnowflakeSpec spec;
  spec.generations = 3;
  spec.angles = {0.07};
  PointCloud cloud = snowflake(spec).cloud;
  MultiscaleNet net = build_net(cloud, 2);
  Vec base = Vec::Zero(2);
  Mat frame(2, 1);
  frame << 1.0, 0.0;
  AffinePlane sigma0(base, frame, true);
  Ccbp ccbp = fit_ccbp(cloud, net, sigma0, FitMode::L2, 0.15);

  Json nj = net_to_json(net);
  MultiscaleNet net2 = net_from_json(nj);
  CHECK(net_to_json(net2).dump() == nj.dump());

  Json cj = ccbp_to_json(ccbp);
  Ccbp ccbp2 = ccbp_from_json(cj);
  CHECK(ccbp_to_json(ccbp2).dump() == cj.dump());
  CHECK(ccbp2.eps == ccbp.eps);
  REQUIRE(ccbp2.planes.size() == ccbp.planes.size());
  for (std::size_t k = 0; k < ccbp.planes.size(); ++k) {
    REQUIRE(ccbp2.planes[k].size() == ccbp.planes[k].size());
    for (std::size_t j = 0; j < ccbp.planes[k].size(); ++j) {
      CHECK((ccbp2.planes[k][j].base() - ccbp.planes[k][j].base()).norm() == 0.0);
      CHECK((ccbp2.planes[k][j].frame() - ccbp.planes[k][j].frame()).norm() == 0.0);
    }
  }
}

TEST_CASE("schema violations raise SchemaError") {
  CHECK_THROWS_AS(cloud_from_json(Json{{"kind", "nonsense"}}), SchemaError);
  Json missing_points{{"kind", "point_cloud"}, {"intrinsic_dim", 1}};
  CHECK_THROWS_AS(cloud_from_json(missing_points), SchemaError);
  Json bad_weights = cloud_to_json(make_cloud());
  bad_weights["weights"] = std::vector<double>{1.0};
  CHECK_THROWS_AS(cloud_from_json(bad_weights), SchemaError);
}

TEST_CASE("profile serialization carries rows and aggregates") {
  BetaProfile profile;
  profile.q = 1.0;
  profile.depth = 2;
  profile.rows = {{3, 0, 0.1, 0.05, 0.01, 0.02, 0.001}, {3, 1, 0.2, 0.1, 0.0, 0.0, 0.0}};
  profile.aggregates = {{3, 0.05, 0.0125, 1e-6}};
  Json j = profile_to_json(profile);
  CHECK(j["rows"].size() == 2);
  CHECK(j["aggregates"][0]["point_id"] == 3);

  std::string csv = profile_to_csv(profile);
  CHECK(csv.find("point_id,k,beta_inf,beta_1,eps_k,eps_prime_k") == 0);
  CHECK(csv.find("3,0,0.1,0.05,0.01,0.02") != std::string::npos);
}

TEST_CASE("format_double is shortest round-trip") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456.789, -0.0625}) {
    std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(-0.0625) == "-0.0625");
}

#ifdef REIFENBERG_CLI_PATH

TEST_CASE("cli end-to-end: gen, build, eval, betas, report") {
  fs::path dir = scratch_dir("pipeline");
  fs::path cfg = dir / "gen.json";
  write_json(cfg.string(), Json{{"kind", "snowflake"},
                                {"generations", 3},
                                {"angles", {0.05}},
                                {"samples_per_edge", 2}});
  REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + dir.string()) == 0);
  REQUIRE(fs::exists(dir / "cloud.json"));

  // provenance embeds config hash + version; reruns are byte-identical
  std::string first = slurp(dir / "cloud.json");
  Json cloud_json = read_json((dir / "cloud.json").string());
  CHECK(cloud_json["provenance"]["library_version"] == kLibraryVersion);
  CHECK(cloud_json["provenance"].contains("config_hash"));
  REQUIRE(run_cli("gen --config " + cfg.string() + " --out " + dir.string()) == 0);
  CHECK(slurp(dir / "cloud.json") == first);

  fs::path bcfg = dir / "build.json";
  write_json(bcfg.string(), Json{{"depth", 3},
                                 {"eps", 0.2},
                                 {"fit_mode", "L2"},
                                 {"sigma0", Json{{"base", {0.0, 0.0}}, {"frame", {{1.0, 0.0}}}}}});
  REQUIRE(run_cli("build --config " + bcfg.string() + " --cloud " + (dir / "cloud.json").string() +
                  " --out " + dir.string()) == 0);
  REQUIRE(fs::exists(dir / "ccbp.json"));
  Json ccbp_json = read_json((dir / "ccbp.json").string());
  CHECK(ccbp_json["audit"]["pass"] == true);

  // audit subcommand agrees
  CHECK(run_cli("audit --map " + (dir / "ccbp.json").string() + " --out " + dir.string()) == 0);

  // evaluate f on a few points
  fs::path q = dir / "queries.json";
  write_json(q.string(), Json{{"kind", "queries"},
                              {"mode", "f"},
                              {"points", {{0.25, 0.0}, {0.5, 0.0}, {0.75, 0.0}}}});
  REQUIRE(run_cli("eval --map " + (dir / "ccbp.json").string() + " --queries " + q.string() +
                  " --out " + dir.string()) == 0);
  Json images = read_json((dir / "images.json").string());
  REQUIRE(images["images"].size() == 3);
  CHECK(images["report"]["max_step_ratio"].get<double>() <= 1.0 + 1e-12);

  // g-mode evaluation
  fs::path qg = dir / "queries_g.json";
  write_json(qg.string(), Json{{"kind", "queries"},
                               {"mode", "g"},
                               {"field_pitch", 0.01},
                               {"points", {{0.5, 3.0}, {0.5, 0.004}}}});
  REQUIRE(run_cli("eval --map " + (dir / "ccbp.json").string() + " --queries " + qg.string() +
                  " --out " + dir.string()) == 0);
  Json gimages = read_json((dir / "images.json").string());
  // far query is fixed by g
  CHECK(gimages["images"][0][0].get<double>() == 0.5);
  CHECK(gimages["images"][0][1].get<double>() == 3.0);

  // betas on a stride
  fs::path pcfg = dir / "betas.json";
  write_json(pcfg.string(), Json{{"depth", 2}, {"q", 1.0}, {"stride", 16}});
  REQUIRE(run_cli("betas --config " + pcfg.string() + " --cloud " + (dir / "cloud.json").string() +
                  " --map " + (dir / "ccbp.json").string() + " --out " + dir.string()) == 0);
  REQUIRE(fs::exists(dir / "profile.csv"));

  // consolidated report with a small distortion run
  fs::path rcfg = dir / "report.json.cfg";
  write_json(rcfg.string(), Json{{"distortion_pairs", 200}});
  REQUIRE(run_cli("report --config " + rcfg.string() + " --map " + (dir / "ccbp.json").string() +
                  " --cloud " + (dir / "cloud.json").string() + " --out " + dir.string()) == 0);
  Json report = read_json((dir / "report.json").string());
  CHECK(report["distortion"]["pairs"] == 200);
  CHECK(report["audit"]["pass"] == true);
}

TEST_CASE("cli exit codes: schema, audit, force") {
  fs::path dir = scratch_dir("errors");

  // malformed JSON config
  {
    std::ofstream bad(dir / "bad.json");
    bad << "{ this is not json";
  }
  CHECK(run_cli("gen --config " + (dir / "bad.json").string() + " --out " + dir.string()) == 2);

  // schema diagnostic for a wrong kind
  write_json((dir / "wrong.json").string(), Json{{"kind", "unknown-generator"}});
  CHECK(run_cli("gen --config " + (dir / "wrong.json").string() + " --out " + dir.string()) == 2);

  // build something whose audit fails: tiny eps budget
  write_json((dir / "gen.json").string(), Json{{"kind", "snowflake"},
                                               {"generations", 3},
                                               {"angles", {0.15}},
                                               {"samples_per_edge", 2}});
  REQUIRE(run_cli("gen --config " + (dir / "gen.json").string() + " --out " + dir.string()) == 0);
  write_json((dir / "build.json").string(),
             Json{{"depth", 3},
                  {"eps", 1e-5},
                  {"sigma0", Json{{"base", {0.0, 0.0}}, {"frame", {{1.0, 0.0}}}}}});
  REQUIRE(run_cli("build --config " + (dir / "build.json").string() + " --cloud " +
                  (dir / "cloud.json").string() + " --out " + dir.string()) == 0);
  Json ccbp_json = read_json((dir / "ccbp.json").string());
  REQUIRE(ccbp_json["audit"]["pass"] == false);

  // audit subcommand reports failure with exit 3
  CHECK(run_cli("audit --map " + (dir / "ccbp.json").string() + " --out " + dir.string()) == 3);

  // eval refuses without --force, proceeds with it
  write_json((dir / "q.json").string(),
             Json{{"kind", "queries"}, {"mode", "f"}, {"points", {{0.5, 0.0}}}});
  CHECK(run_cli("eval --map " + (dir / "ccbp.json").string() + " --queries " +
                (dir / "q.json").string() + " --out " + dir.string()) == 3);
  CHECK(run_cli("eval --force --map " + (dir / "ccbp.json").string() + " --queries " +
                (dir / "q.json").string() + " --out " + dir.string()) == 0);

  // betas on a weightless cloud is a schema error
  Json cloud_json = read_json((dir / "cloud.json").string());
  cloud_json.erase("weights");
  write_json((dir / "noweights.json").string(), cloud_json);
  write_json((dir / "betas.json").string(), Json{{"depth", 2}, {"q", 1.0}, {"stride", 64}});
  CHECK(run_cli("betas --config " + (dir / "betas.json").string() + " --cloud " +
                (dir / "noweights.json").string() + " --out " + dir.string()) == 2);
}

#endif  // REIFENBERG_CLI_PATH
