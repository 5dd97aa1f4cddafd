#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "kinetic/report.hpp"
#include "kinetic/rng.hpp"
#include "kinetic/scenario.hpp"

using namespace kinetic;

TEST_CASE("key-value config format") {
  const std::string text = R"(
# scenario
domain.type = ellipsoid
domain.semi_axes = [2, 1, 1]
bc.kind = diffuse          # trailing comment
weight.theta = 0.2
seed = 99
run.t_max: 1.5
)";
  const auto j = parse_config_text(text);
  CHECK(j["domain"]["type"] == "ellipsoid");
  CHECK(j["domain"]["semi_axes"][0] == 2);
  CHECK(j["bc"]["kind"] == "diffuse");
  CHECK(j["weight"]["theta"] == 0.2);
  CHECK(j["seed"] == 99);
  CHECK(j["run"]["t_max"] == 1.5);

  // JSON is accepted unchanged
  const auto j2 = parse_config_text(R"({"seed": 7, "bc": {"kind": "specular"}})");
  CHECK(j2["seed"] == 7);

  CHECK_THROWS_AS(parse_config_text("no equals sign here"), Error);
}

TEST_CASE("scenario config parsing and validation") {
  auto j = parse_config_text("domain.type = ball\nseed = 5\nweight.theta = 0.2\n");
  auto cfg = ScenarioConfig::from_json(j);
  CHECK(cfg.domain.tag() == LevelSetDomain::Tag::Ball);
  CHECK(cfg.weight.theta == 0.2);
  CHECK(cfg.seed == 5);
  CHECK_NOTHROW(cfg.validate_for("trace"));

  // theta at the boundary is rejected
  j["weight"]["theta"] = 0.25;
  bool invalid = false;
  try {
    ScenarioConfig::from_json(j).validate_for("trace");
  } catch (const Error& e) {
    invalid = e.code() == ErrorCode::ConfigInvalid;
  }
  CHECK(invalid);

  // stochastic runs demand an explicit seed
  auto j2 = parse_config_text("bc.kind = diffuse\n");
  bool needs_seed = false;
  try {
    ScenarioConfig::from_json(j2).validate_for("decay");
  } catch (const Error& e) {
    needs_seed = e.code() == ErrorCode::ConfigInvalid;
  }
  CHECK(needs_seed);

  CHECK_THROWS_AS(
      ScenarioConfig::from_json(parse_config_text("domain.type = torus\n")), Error);
}

TEST_CASE("17-significant-digit float serialization round-trips") {
  RandomStream rng(11);
  for (int i = 0; i < 1000; ++i) {
    double v = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-30.0, 30.0));
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("json rows keep field order; csv and text render") {
  ReportBundle b;
  b.name = "demo";
  b.config_hash = "abc";
  b.seed = 3;
  b.code_version = version_string();
  JsonRow row;
  row.set("zeta", 4).set("alpha", 0.5).set("name", "x").set("flag", true);
  b.rows.push_back(row);
  const std::string js = bundle_json(b);
  CHECK(js.find("\"zeta\":4,\"alpha\":0.5,\"name\":\"x\",\"flag\":true") != std::string::npos);
  CHECK(js.find("\"provenance\"") != std::string::npos);
  const std::string csv = bundle_csv(b);
  CHECK(csv.rfind("zeta,alpha,name,flag\n", 0) == 0);
  CHECK(bundle_text(b).find("zeta=4") != std::string::npos);
}

TEST_CASE("identical seed and config reproduce bit-identical json") {
  auto j = parse_config_text(
      "domain.type = ball\nseed = 31\nrun.t_max = 1\nrun.samples = 2000\nrun.k_max = 10\n");
  const auto cfg = ScenarioConfig::from_json(j);
  const auto a = run_scenario(cfg, "stuck-mass");
  const auto b = run_scenario(cfg, "stuck-mass");
  CHECK(bundle_json(a) == bundle_json(b));
  CHECK(a.config_hash == b.config_hash);

  // changed config is detectable through the hash
  auto j2 = j;
  j2["run"]["samples"] = 2001;
  const auto c = run_scenario(ScenarioConfig::from_json(j2), "stuck-mass");
  CHECK(c.config_hash != a.config_hash);
}

TEST_CASE("jacobian subcommand emits the asymptotic determinant") {
  auto j = parse_config_text("domain.type = ball\nseed = 1\nrun.k = 2\nrun.eps0 = 1e-3\n");
  j["run"]["x"] = {1.0, 0.0, 0.0};
  const auto b = run_scenario(ScenarioConfig::from_json(j), "jacobian");
  REQUIRE(b.rows.size() == 1);
  double det = 0.0, gap = 1.0;
  for (const auto& [k, v] : b.rows[0].fields()) {
    if (k == "det_fd") det = std::get<double>(v);
    if (k == "rel_gap") gap = std::get<double>(v);
  }
  CHECK(std::abs(det - 3.0) / 3.0 < 0.05);
  CHECK(gap < 0.05);
  CHECK_FALSE(b.check_failed);
}

TEST_CASE("coercivity scenario reports a finite, refinement-stable ratio") {
  auto j = parse_config_text(
      "domain.type = ball\nbc.kind = bounceback\nseed = 2\nrun.grid_n = 8\n"
      "run.grid_v_max = 4\nrun.cell_h = 0.8\n");
  const auto b = run_scenario(ScenarioConfig::from_json(j), "coercivity");
  CHECK_FALSE(b.check_failed);
  REQUIRE(b.rows.size() == 1);
  for (const auto& [k, v] : b.rows[0].fields())
    if (k == "ratio") CHECK(std::isfinite(std::get<double>(v)));
}

TEST_CASE("emit_report writes the three formats") {
  ReportBundle b;
  b.name = "files";
  b.code_version = version_string();
  JsonRow row;
  row.set("x", 1.5);
  b.rows.push_back(row);
  const std::string dir =
      (std::filesystem::temp_directory_path() / "kc_report_test").string();
  for (const std::string fmt : {"json", "csv", "text"}) emit_report(b, fmt, dir);
  CHECK(std::filesystem::exists(dir + "/files.json"));
  CHECK(std::filesystem::exists(dir + "/files.csv"));
  CHECK(std::filesystem::exists(dir + "/files.txt"));
  CHECK_THROWS_AS(emit_report(b, "yaml", dir), Error);
  std::filesystem::remove_all(dir);
}

#ifdef KC_BIN
TEST_CASE("binary exit-code contract") {
  const std::string bin = KC_BIN;
  // 0: a fast healthy run
  CHECK(std::system((bin + " trace --domain ball --out - > /dev/null 2>&1").c_str()) == 0);
  // 2: config/validation trouble
  CHECK(WEXITSTATUS(std::system(
            (bin + " decay --config /nonexistent.cfg > /dev/null 2>&1").c_str())) == 2);
  // 3: ran fine, numerical check failed (the stuck fraction cannot fall
  // below 0.05 with a two-bounce cap from the default start)
  const std::string cmd = bin +
                          " stuck-mass --seed 9 --k 2 --paths 400 --t 1 --domain ball"
                          " --out - > /dev/null 2>&1";
  CHECK(WEXITSTATUS(std::system(cmd.c_str())) == 3);
}
#endif
