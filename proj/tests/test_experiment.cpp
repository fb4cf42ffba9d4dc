#include "robinspec/experiment.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace robinspec;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "robinspec_experiment_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
  const fs::path path = dir / name;
  std::ofstream(path) << doc.dump(2);
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json interval_config(const std::string& scenario, int K) {
  return {{"scenario", scenario},
          {"domain", {{"kind", "interval"}, {"length", 1.0}, {"n", 401}}},
          {"fields", {{"q", 0.0}, {"omega0", 0.0}}},
          {"sigma", {{"arc_start", 0.0}, {"arc_end", 1.0}}},
          {"params", {{"K", K}, {"J", 2}}}};
}

int run(const fs::path& config, const fs::path& out, std::string* log = nullptr) {
  std::ostringstream ss;
  const int code = run_command(config, out, std::nullopt, ss);
  if (log) *log = ss.str();
  return code;
}

}  // namespace

TEST_CASE("shipped forward config runs and writes the manifest last") {
  const fs::path out = scratch("forward");
  REQUIRE(run(fs::path(ROBINSPEC_CONFIG_DIR) / "interval_forward.json", out) == 0);
  for (const char* f : {"results.json", "traces.csv", "manifest.json"}) CHECK(fs::exists(out / f));
  const json manifest = json::parse(slurp(out / "manifest.json"));
  CHECK(manifest["version"] == kVersion);
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["config_hash"].get<std::string>().size() == 16);
  for (const auto& f : manifest["files"])
    CHECK(f["bytes"].get<std::uintmax_t>() == fs::file_size(out / f["path"].get<std::string>()));
  const json results = json::parse(slurp(out / "results.json"));
  CHECK(results["eigenvalues"].size() == 10);
}

TEST_CASE("configuration errors exit with status 2") {
  const fs::path dir = scratch("config_errors");
  json missing_sigma = interval_config("recover", 2);
  missing_sigma.erase("sigma");
  std::string log;
  CHECK(run(write_config(dir, "a.json", missing_sigma), dir / "out", &log) == 2);
  CHECK(log.find("config error") != std::string::npos);

  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK(run(dir / "bad.json", dir / "out") == 2);
  CHECK(run(dir / "absent.json", dir / "out") == 2);

  json bad_scenario = interval_config("nonsense", 2);
  CHECK(run(write_config(dir, "b.json", bad_scenario), dir / "out") == 2);

  json bad_domain = interval_config("forward", 2);
  bad_domain["domain"]["n"] = 2;
  CHECK(run(write_config(dir, "c.json", bad_domain), dir / "out") == 2);
}

TEST_CASE("record then replay reproduces results byte for byte") {
  const fs::path dir = scratch("record_replay");
  REQUIRE(run(write_config(dir, "record.json", interval_config("record-oracle", 4)), dir / "rec") == 0);
  REQUIRE(fs::exists(dir / "rec" / "oracle.json"));

  REQUIRE(run(write_config(dir, "live.json", interval_config("recover", 4)), dir / "live") == 0);
  json replay = interval_config("recover", 4);
  replay["oracle"] = {{"kind", "replay"}, {"path", "rec/oracle.json"}};
  REQUIRE(run(write_config(dir, "replay.json", replay), dir / "replay") == 0);
  CHECK(slurp(dir / "live" / "results.json") == slurp(dir / "replay" / "results.json"));
  CHECK(slurp(dir / "live" / "traces.csv") == slurp(dir / "replay" / "traces.csv"));

  // Rerunning is deterministic.
  REQUIRE(run(write_config(dir, "live.json", interval_config("recover", 4)), dir / "live2") == 0);
  CHECK(slurp(dir / "live" / "results.json") == slurp(dir / "live2" / "results.json"));

  // A recording without the needed queries is a scenario failure.
  std::ofstream(dir / "empty.json") << "[]\n";
  replay["oracle"]["path"] = "empty.json";
  std::string log;
  CHECK(run(write_config(dir, "replay_empty.json", replay), dir / "missing", &log) == 1);
  CHECK(log.find("replay oracle has no record") != std::string::npos);
  const json manifest = json::parse(slurp(dir / "missing" / "manifest.json"));
  CHECK(manifest["exit_code"] == 1);
  CHECK(manifest["status"] == "MissingQueryError");
}

TEST_CASE("K = 0 records an empty oracle file") {
  const fs::path dir = scratch("record_empty");
  REQUIRE(run(write_config(dir, "record.json", interval_config("record-oracle", 0)), dir / "rec") == 0);
  CHECK(json::parse(slurp(dir / "rec" / "oracle.json")) == json::array());
}

TEST_CASE("seed override is part of the effective config") {
  const fs::path dir = scratch("seed");
  const fs::path cfg = write_config(dir, "f.json", interval_config("forward", 3));
  std::ostringstream log;
  REQUIRE(run_command(cfg, dir / "a", std::uint64_t{11}, log) == 0);
  REQUIRE(run_command(cfg, dir / "b", std::uint64_t{12}, log) == 0);
  const json a = json::parse(slurp(dir / "a" / "manifest.json"));
  const json b = json::parse(slurp(dir / "b" / "manifest.json"));
  CHECK(a["effective_config"]["seed"] == 11);
  CHECK(a["config_hash"] != b["config_hash"]);
}

TEST_CASE("field specifications") {
  auto [mesh, bmesh] = build_mesh(DomainSpec::rectangle(1.0, 1.0, 5, 5));
  CHECK((field_from_json(json(2.0), mesh, "q").array() == 2.0).all());
  const ScalarField g = field_from_json(
      json{{"preset", "gaussian_bump"}, {"center", {0.5, 0.5}}, {"width", 0.2}, {"height", 3.0}}, mesh, "q");
  CHECK(g(mesh.index(2, 2)) == doctest::Approx(3.0));
  json values = json::array();
  for (int i = 0; i < bmesh.size(); ++i) values.push_back(0.1 * i);
  const BoundaryField omega = boundary_field_from_json(json{{"values", values}}, bmesh, "omega0");
  CHECK(omega(3) == doctest::Approx(0.3));
  CHECK_THROWS(boundary_field_from_json(json{{"values", {1.0, 2.0}}}, bmesh, "omega0"));
  CHECK_THROWS(field_from_json(json{{"preset", "unknown"}}, mesh, "q"));
}
