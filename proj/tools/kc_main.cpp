#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "kinetic/parallel.hpp"
#include "kinetic/scenario.hpp"

namespace {

// Parses "a..b" into [a, b]; a single number sets both ends.
bool parse_range(const std::string& s, double* lo, double* hi) {
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      *lo = 0.0;
      *hi = std::stod(s);
      return true;
    }
    *lo = std::stod(s.substr(0, dots));
    *hi = std::stod(s.substr(dots + 2));
    return true;
  } catch (...) {
    return false;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kinetic transport cycles and collision-kernel checks"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "-", format = "json";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  std::string domain_name, bc_name, t_range, k_range;
  double eps0 = -1.0;
  int k_opt = 0, paths = 0;
  bool normal_incidence = false;

  app.add_option("--config", config_path, "scenario config file (json or key=value)");
  auto* seed_opt = app.add_option("--seed", seed, "random seed");
  app.add_option("--threads", threads, "worker threads")->envname("KC_THREADS");
  app.add_option("--out", out_dir, "output directory ('-' = stdout)");
  app.add_option("--format", format, "json|csv|text")
      ->check(CLI::IsMember({"json", "csv", "text"}));

  const std::vector<std::string> names = {"trace",      "cycles",     "jacobian",
                                          "kernel-check", "stuck-mass", "decay",
                                          "solve",      "coercivity"};
  std::map<std::string, CLI::App*> subs;
  for (const auto& n : names) {
    CLI::App* s = app.add_subcommand(n);
    s->fallthrough(true);
    s->add_option("--domain", domain_name, "ball|ellipsoid");
    s->add_option("--bc", bc_name, "inflow|bounceback|specular|diffuse");
    s->add_option("--t", t_range, "time range a..b (or single upper end)");
    s->add_option("--k", k_range, "bounce count (jacobian) or sweep a..b (stuck-mass)");
    s->add_option("--eps0", eps0, "jacobian eps0");
    s->add_option("--paths", paths, "Monte Carlo sample count");
    s->add_flag("--normal-incidence", normal_incidence, "jacobian normal-incidence start");
    subs[n] = s;
  }

  CLI11_PARSE(app, argc, argv);
  seed_set = seed_opt->count() > 0;
  if (threads > 0) kinetic::thread_count() = threads;

  std::string subcommand;
  for (const auto& n : names)
    if (subs[n]->parsed()) subcommand = n;

  try {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) j = kinetic::load_config_file(config_path);
    // CLI overrides fold into the config so the hash covers them.
    if (!domain_name.empty()) j["domain"]["type"] = domain_name;
    if (!bc_name.empty()) j["bc"]["kind"] = bc_name;
    if (seed_set) j["seed"] = seed;
    if (!t_range.empty()) {
      double lo = 0.0, hi = 0.0;
      if (!parse_range(t_range, &lo, &hi)) throw kinetic::Error(
          kinetic::ErrorCode::ConfigInvalid, "--t expects a..b");
      j["run"]["t_min"] = lo;
      j["run"]["t_max"] = hi;
    }
    if (!k_range.empty()) {
      double lo = 0.0, hi = 0.0;
      if (!parse_range(k_range, &lo, &hi)) throw kinetic::Error(
          kinetic::ErrorCode::ConfigInvalid, "--k expects an integer or a..b");
      j["run"]["k"] = static_cast<int>(hi);
      j["run"]["k_max"] = static_cast<int>(hi);
    }
    if (eps0 > 0.0) j["run"]["eps0"] = eps0;
    if (paths > 0) {
      j["run"]["samples"] = paths;
      j["bc"]["mc_paths"] = paths;
    }
    if (normal_incidence) j["run"]["normal_incidence"] = true;

    const kinetic::ScenarioConfig cfg = kinetic::ScenarioConfig::from_json(j);
    const kinetic::ReportBundle bundle = kinetic::run_scenario(cfg, subcommand);
    kinetic::emit_report(bundle, format, out_dir);
    if (bundle.check_failed) {
      std::cerr << "check failed: " << bundle.failed_invariant << "\n";
      return 3;
    }
    return 0;
  } catch (const kinetic::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == kinetic::ErrorCode::ConfigInvalid ||
                   e.code() == kinetic::ErrorCode::IoError
               ? 2
               : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
