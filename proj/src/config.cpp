#include "kinetic/config.hpp"

#include <fstream>
#include <sstream>

namespace kinetic {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Vec3 vec3_of(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3)
    throw Error(ErrorCode::ConfigInvalid, "expected a 3-element array");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

nlohmann::json parse_config_text(const std::string& text) {
  const std::string body = trim(text);
  if (!body.empty() && (body[0] == '{' || body[0] == '[')) {
    try {
      return nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ConfigInvalid, std::string("json parse: ") + e.what());
    }
  }
  nlohmann::json root = nlohmann::json::object();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) eq = line.find(':');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigInvalid,
                  "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string valtext = trim(line.substr(eq + 1));
    nlohmann::json val;
    try {
      val = nlohmann::json::parse(valtext);
    } catch (const nlohmann::json::exception&) {
      val = valtext;  // bare word -> string
    }
    nlohmann::json* node = &root;
    std::size_t pos = 0;
    while (true) {
      const auto dot = key.find('.', pos);
      const std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
      if (part.empty())
        throw Error(ErrorCode::ConfigInvalid, "config: empty key segment in '" + key + "'");
      if (dot == std::string::npos) {
        (*node)[part] = val;
        break;
      }
      node = &(*node)[part];
      pos = dot + 1;
    }
  }
  return root;
}

nlohmann::json load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  ScenarioConfig cfg;
  try {
    if (j.contains("domain")) {
      const auto& d = j["domain"];
      const std::string type = d.value("type", "ball");
      const Vec3 center = d.contains("center") ? vec3_of(d["center"]) : Vec3::Zero();
      if (type == "ball") {
        double r = 1.0;
        if (d.contains("semi_axes")) r = vec3_of(d["semi_axes"])[0];
        if (d.contains("radius")) r = d["radius"].get<double>();
        cfg.domain = LevelSetDomain::ball(r, center);
        cfg.domain_desc = "ball";
      } else if (type == "ellipsoid") {
        Vec3 ax(2.0, 1.0, 1.0);
        if (d.contains("semi_axes")) ax = vec3_of(d["semi_axes"]);
        cfg.domain = LevelSetDomain::ellipsoid(ax[0], ax[1], ax[2], center);
        cfg.domain_desc = "ellipsoid";
      } else {
        throw Error(ErrorCode::ConfigInvalid,
                    "domain.type must be ball or ellipsoid (custom domains are library-only)");
      }
    }
    if (j.contains("bc")) {
      const auto& b = j["bc"];
      const std::string kind = b.value("kind", "bounceback");
      if (kind == "inflow") cfg.bc.kind = BCSpec::Kind::Inflow;
      else if (kind == "bounceback") cfg.bc.kind = BCSpec::Kind::BounceBack;
      else if (kind == "specular") cfg.bc.kind = BCSpec::Kind::Specular;
      else if (kind == "diffuse") cfg.bc.kind = BCSpec::Kind::Diffuse;
      else throw Error(ErrorCode::ConfigInvalid, "bc.kind unknown: " + kind);
      cfg.bc.k_trunc = b.value("k_trunc", cfg.bc.k_trunc);
      cfg.bc.mc_paths = b.value("mc_paths", cfg.bc.mc_paths);
      cfg.bc.remainder_cap = b.value("remainder_cap", cfg.bc.remainder_cap);
    }
    if (j.contains("weight")) {
      const auto& w = j["weight"];
      cfg.weight.rho = w.value("rho", cfg.weight.rho);
      cfg.weight.beta = w.value("beta", cfg.weight.beta);
      cfg.weight.theta = w.value("theta", cfg.weight.theta);
    }
    if (j.contains("kernel")) {
      const auto& k = j["kernel"];
      cfg.kernel.gamma = k.value("gamma", cfg.kernel.gamma);
      cfg.kernel.u_max = k.value("u_max", cfg.kernel.u_max);
      cfg.kernel.u_nodes = k.value("u_nodes", cfg.kernel.u_nodes);
      cfg.kernel.omega_polar = k.value("omega_polar", cfg.kernel.omega_polar);
      cfg.kernel.omega_azimuth = k.value("omega_azimuth", cfg.kernel.omega_azimuth);
    }
    if (j.contains("run")) {
      const auto& r = j["run"];
      cfg.run.t_min = r.value("t_min", cfg.run.t_min);
      cfg.run.t_max = r.value("t_max", cfg.run.t_max);
      cfg.run.time_samples = r.value("time_samples", cfg.run.time_samples);
      cfg.run.samples = r.value("samples", cfg.run.samples);
      cfg.run.k = r.value("k", cfg.run.k);
      cfg.run.k_max = r.value("k_max", cfg.run.k_max);
      cfg.run.eps0 = r.value("eps0", cfg.run.eps0);
      cfg.run.picard_iters = r.value("picard_iters", cfg.run.picard_iters);
      cfg.run.time_nodes_per_unit = r.value("time_nodes_per_unit", cfg.run.time_nodes_per_unit);
      cfg.run.cell_h = r.value("cell_h", cfg.run.cell_h);
      cfg.run.grid_v_max = r.value("grid_v_max", cfg.run.grid_v_max);
      cfg.run.grid_n = r.value("grid_n", cfg.run.grid_n);
      cfg.run.phase_samples = r.value("phase_samples", cfg.run.phase_samples);
      cfg.run.normal_incidence = r.value("normal_incidence", cfg.run.normal_incidence);
      if (r.contains("x")) cfg.run.x0 = vec3_of(r["x"]);
      if (r.contains("v")) cfg.run.v0 = vec3_of(r["v"]);
    }
    if (j.contains("seed")) {
      cfg.seed = j["seed"].get<std::uint64_t>();
      cfg.seed_given = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigInvalid, std::string("config: ") + e.what());
  }
  cfg.canonical = j.dump();
  cfg.bc.weight = cfg.weight;
  return cfg;
}

void ScenarioConfig::validate_for(const std::string& subcommand) const {
  weight.validate();
  kernel.validate();
  bc.validate();
  if (run.t_max < run.t_min)
    throw Error(ErrorCode::ConfigInvalid, "run: t_max >= t_min required");
  const bool stochastic = subcommand == "stuck-mass" || bc.kind == BCSpec::Kind::Diffuse;
  if (stochastic && !seed_given)
    throw Error(ErrorCode::ConfigInvalid, "stochastic run requires an explicit seed");
  if (run.grid_n < 2 || run.grid_v_max <= 0.0)
    throw Error(ErrorCode::ConfigInvalid, "run: velocity grid spec invalid");
}

}  // namespace kinetic
