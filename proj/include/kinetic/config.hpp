#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "kinetic/collision.hpp"
#include "kinetic/geometry.hpp"
#include "kinetic/semigroup.hpp"

namespace kinetic {

// Scenario file: JSON, or a flat key-value format with dotted keys
// (`weight.theta = 0.2`, `#` comments). Values follow JSON syntax; bare words
// are read as strings.
nlohmann::json load_config_file(const std::string& path);
nlohmann::json parse_config_text(const std::string& text);

struct RunParams {
  double t_min{0.0};
  double t_max{2.0};
  int time_samples{9};
  int samples{10000};       // MC sample count
  int k{2};                 // jacobian bounce count
  int k_max{30};            // stuck-mass sweep depth
  double eps0{1e-3};
  int picard_iters{3};
  int time_nodes_per_unit{16};
  double cell_h{0.7};
  double grid_v_max{6.0};
  int grid_n{12};
  int phase_samples{64};    // phase points for norms / checks
  bool normal_incidence{false};
  std::optional<Vec3> x0;
  std::optional<Vec3> v0;
};

struct ScenarioConfig {
  LevelSetDomain domain{LevelSetDomain::ball()};
  std::string domain_desc{"ball"};
  BCSpec bc;
  WeightParams weight;
  KernelConfig kernel;
  RunParams run;
  std::uint64_t seed{1};
  bool seed_given{false};
  std::string canonical;  // canonical dump used for the config hash

  static ScenarioConfig from_json(const nlohmann::json& j);
  void validate_for(const std::string& subcommand) const;
};

}  // namespace kinetic
