#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "fedloc/experiment.hpp"

namespace fedloc {

// Parses the experiment config file (JSON, // comments allowed),
// applies dotted-key overrides ("federation.lambda_tilde=0.1"), and
// validates against the known schema. Unknown keys are rejected.
ExperimentConfig load_config_file(const std::string& path,
                                  const std::vector<std::string>& overrides);

ExperimentConfig config_from_json(const nlohmann::json& j);

// Fully-resolved snapshot of a config, including defaulted values;
// reparsing it reproduces the config exactly.
nlohmann::json config_to_json(const ExperimentConfig& config);

// Applies one "dotted.path=value" assignment; the value is parsed as
// JSON when possible and as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

}  // namespace fedloc
