#include "fedloc/config.hpp"

#include <fstream>
#include <set>

#include "fedloc/errors.hpp"

namespace fedloc {

namespace {

using nlohmann::json;

void check_keys(const json& node, const std::string& scope,
                const std::set<std::string>& known) {
  if (!node.is_object()) {
    throw SchemaError("config: '" + scope + "' must be an object");
  }
  for (const auto& [key, value] : node.items()) {
    (void)value;
    if (known.find(key) == known.end()) {
      throw SchemaError("config: unknown key '" +
                        (scope.empty() ? key : scope + "." + key) + "'");
    }
  }
}

template <class T>
T get_or(const json& node, const std::string& key, const T& fallback) {
  if (!node.contains(key)) return fallback;
  try {
    return node.at(key).get<T>();
  } catch (const json::exception& e) {
    throw SchemaError("config: bad value for '" + key + "': " + e.what());
  }
}

TrainingMode parse_mode(const std::string& mode) {
  if (mode == "stochastic") return TrainingMode::kStochastic;
  if (mode == "full_batch") return TrainingMode::kFullBatch;
  throw SchemaError("config: training.mode must be 'stochastic' or 'full_batch'");
}

AttentionKernel parse_kernel(const std::string& kernel) {
  if (kernel == "gaussian_saturating") return AttentionKernel::kGaussianSaturating;
  throw SchemaError("config: unknown federation.kernel '" + kernel + "'");
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  check_keys(j, "",
             {"dataset", "model", "labels", "clients", "groups", "strategies",
              "federation", "training", "monte_carlo", "sweep", "workers",
              "output_dir"});

  ExperimentConfig config;

  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset",
               {"source_csv", "processed", "building", "floor", "test_fraction"});
    config.source_csv = get_or<std::string>(d, "source_csv", config.source_csv);
    config.processed_path = get_or<std::string>(d, "processed", config.processed_path);
    config.building = get_or<int>(d, "building", config.building);
    config.floor = get_or<int>(d, "floor", config.floor);
    config.test_fraction = get_or<double>(d, "test_fraction", config.test_fraction);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m, "model", {"hidden"});
    config.hidden = get_or<std::vector<int>>(m, "hidden", config.hidden);
  }

  config.label_count = get_or<int>(j, "labels", config.label_count);
  config.client_count = get_or<int>(j, "clients", config.client_count);

  if (j.contains("groups")) {
    const json& g = j.at("groups");
    check_keys(g, "groups",
               {"count", "beta_high", "beta_low", "samples_per_client", "explicit"});
    config.group_count = get_or<int>(g, "count", config.group_count);
    config.beta_high = get_or<double>(g, "beta_high", config.beta_high);
    config.beta_low = get_or<double>(g, "beta_low", config.beta_low);
    config.samples_per_client =
        get_or<int>(g, "samples_per_client", config.samples_per_client);
    if (g.contains("explicit")) {
      if (!g.at("explicit").is_array()) {
        throw SchemaError("config: groups.explicit must be an array");
      }
      std::vector<GroupSpec::Group> groups;
      for (const json& entry : g.at("explicit")) {
        check_keys(entry, "groups.explicit[]", {"clients", "dominant_labels"});
        GroupSpec::Group group;
        group.client_count = get_or<int>(entry, "clients", 1);
        group.dominant_labels =
            get_or<std::vector<int>>(entry, "dominant_labels", {});
        groups.push_back(std::move(group));
      }
      config.explicit_groups = std::move(groups);
    }
  }

  if (j.contains("strategies")) {
    if (!j.at("strategies").is_array()) {
      throw SchemaError("config: strategies must be an array of names");
    }
    std::vector<Strategy> strategies;
    for (const json& name : j.at("strategies")) {
      try {
        strategies.push_back(parse_strategy(name.get<std::string>()));
      } catch (const ParameterError& e) {
        throw SchemaError(std::string("config: ") + e.what());
      }
    }
    if (strategies.empty()) throw SchemaError("config: strategies is empty");
    config.strategies = std::move(strategies);
  }

  if (j.contains("federation")) {
    const json& f = j.at("federation");
    check_keys(f, "federation", {"rounds", "sigma", "lambda_tilde", "alpha", "kernel"});
    config.federation.rounds = get_or<int>(f, "rounds", config.federation.rounds);
    config.federation.sigma = get_or<double>(f, "sigma", config.federation.sigma);
    config.federation.lambda_tilde =
        get_or<double>(f, "lambda_tilde", config.federation.lambda_tilde);
    config.federation.alpha = get_or<double>(f, "alpha", config.federation.alpha);
    config.federation.kernel =
        parse_kernel(get_or<std::string>(f, "kernel", "gaussian_saturating"));
  }

  if (j.contains("training")) {
    const json& t = j.at("training");
    check_keys(t, "training", {"learning_rate", "epochs", "batch_size", "mode"});
    auto& local = config.federation.local;
    local.learning_rate = get_or<double>(t, "learning_rate", local.learning_rate);
    local.epochs = get_or<int>(t, "epochs", local.epochs);
    local.batch_size = get_or<int>(t, "batch_size", local.batch_size);
    local.mode = parse_mode(get_or<std::string>(
        t, "mode",
        local.mode == TrainingMode::kStochastic ? "stochastic" : "full_batch"));
  }

  if (j.contains("monte_carlo")) {
    const json& mc = j.at("monte_carlo");
    check_keys(mc, "monte_carlo", {"runs", "master_seed"});
    config.runs = get_or<int>(mc, "runs", config.runs);
    config.master_seed = get_or<std::uint64_t>(mc, "master_seed", config.master_seed);
  }

  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    check_keys(s, "sweep", {"axis", "values"});
    try {
      config.sweep_axis = parse_axis(get_or<std::string>(s, "axis", "none"));
    } catch (const ParameterError& e) {
      throw SchemaError(std::string("config: ") + e.what());
    }
    config.sweep_values =
        get_or<std::vector<double>>(s, "values", config.sweep_values);
  }

  config.workers = get_or<int>(j, "workers", config.workers);
  if (j.contains("output_dir")) {
    config.output_dir = get_or<std::string>(j, "output_dir", "out");
  }

  if (config.label_count < 1) throw SchemaError("config: labels must be >= 1");
  if (config.client_count < 1) throw SchemaError("config: clients must be >= 1");
  if (config.runs < 1) throw SchemaError("config: monte_carlo.runs must be >= 1");
  if (!(config.test_fraction >= 0.0 && config.test_fraction <= 1.0)) {
    throw SchemaError("config: dataset.test_fraction must be in [0, 1]");
  }
  for (int h : config.hidden) {
    if (h < 1) throw SchemaError("config: model.hidden widths must be >= 1");
  }
  if (config.federation.rounds < 1) {
    throw SchemaError("config: federation.rounds must be >= 1");
  }
  if (!(config.federation.sigma > 0.0)) {
    throw SchemaError("config: federation.sigma must be > 0");
  }
  if (config.federation.lambda_tilde < 0.0) {
    throw SchemaError("config: federation.lambda_tilde must be >= 0");
  }
  if (!(config.federation.alpha > 0.0)) {
    throw SchemaError("config: federation.alpha must be > 0");
  }
  if (config.federation.local.epochs < 1) {
    throw SchemaError("config: training.epochs must be >= 1");
  }
  if (!(config.federation.local.learning_rate > 0.0)) {
    throw SchemaError("config: training.learning_rate must be > 0");
  }
  return config;
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  json j;
  j["dataset"] = {{"source_csv", config.source_csv},
                  {"processed", config.processed_path},
                  {"building", config.building},
                  {"floor", config.floor},
                  {"test_fraction", config.test_fraction}};
  j["model"] = {{"hidden", config.hidden}};
  j["labels"] = config.label_count;
  j["clients"] = config.client_count;
  json groups = {{"count", config.group_count},
                 {"beta_high", config.beta_high},
                 {"beta_low", config.beta_low},
                 {"samples_per_client", config.samples_per_client}};
  if (config.explicit_groups.has_value()) {
    json list = json::array();
    for (const auto& group : *config.explicit_groups) {
      list.push_back({{"clients", group.client_count},
                      {"dominant_labels", group.dominant_labels}});
    }
    groups["explicit"] = std::move(list);
  }
  j["groups"] = std::move(groups);
  json strategies = json::array();
  for (Strategy s : config.strategies) strategies.push_back(strategy_name(s));
  j["strategies"] = std::move(strategies);
  j["federation"] = {{"rounds", config.federation.rounds},
                     {"sigma", config.federation.sigma},
                     {"lambda_tilde", config.federation.lambda_tilde},
                     {"alpha", config.federation.alpha},
                     {"kernel", "gaussian_saturating"}};
  j["training"] = {
      {"learning_rate", config.federation.local.learning_rate},
      {"epochs", config.federation.local.epochs},
      {"batch_size", config.federation.local.batch_size},
      {"mode", config.federation.local.mode == TrainingMode::kStochastic
                   ? "stochastic"
                   : "full_batch"}};
  j["monte_carlo"] = {{"runs", config.runs}, {"master_seed", config.master_seed}};
  j["sweep"] = {{"axis", axis_name(config.sweep_axis)},
                {"values", config.sweep_values}};
  j["workers"] = config.workers;
  if (config.output_dir.has_value()) j["output_dir"] = *config.output_dir;
  return j;
}

void apply_override(json& j, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw SchemaError("override must look like path.to.key=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings
  }

  json* node = &j;
  std::size_t start = 0;
  for (;;) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) {
      throw SchemaError("override has an empty path segment: " + assignment);
    }
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

ExperimentConfig load_config_file(const std::string& path,
                                  const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw InputFileError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw SchemaError("config parse error in " + path + ": " + e.what());
  }
  for (const auto& assignment : overrides) apply_override(j, assignment);
  return config_from_json(j);
}

}  // namespace fedloc
