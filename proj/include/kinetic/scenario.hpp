#pragma once

#include <string>

#include "kinetic/config.hpp"
#include "kinetic/report.hpp"

namespace kinetic {

inline const char* version_string() { return "kc 0.1.0"; }

// Dispatches one subcommand on a validated scenario. Throws Error on invalid
// configuration; numerical-check failures are reported in the bundle.
ReportBundle run_scenario(const ScenarioConfig& cfg, const std::string& subcommand);

}  // namespace kinetic
