#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "fedloc/checkpoint.hpp"
#include "fedloc/config.hpp"
#include "fedloc/csv.hpp"
#include "fedloc/errors.hpp"
#include "fedloc/experiment.hpp"

namespace fs = std::filesystem;
using namespace fedloc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_flag;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config_path,
                  "experiment config file (JSON, // comments allowed)")
      ->required();
  cmd->add_option("-s,--set", args.overrides,
                  "config override, dotted.path=value (repeatable)");
  cmd->add_option("-o,--output", args.output_flag,
                  "output directory (overrides config and FEDLOC_OUT)");
  cmd->add_flag("-v,--verbose", args.verbose, "chatty progress output");
}

std::string resolve_output_dir(const ExperimentConfig& config,
                               const std::string& flag) {
  if (!flag.empty()) return flag;
  if (config.output_dir.has_value()) return *config.output_dir;
  if (const char* env = std::getenv("FEDLOC_OUT")) return env;
  return "out";
}

// Loads config, resolves the output directory into it, and writes the
// resolved snapshot every command leaves behind.
ExperimentConfig setup_command(const CommonArgs& args, std::string* out_dir) {
  ExperimentConfig config = load_config_file(args.config_path, args.overrides);
  *out_dir = resolve_output_dir(config, args.output_flag);
  config.output_dir = *out_dir;
  fs::create_directories(*out_dir);
  std::ofstream snapshot(*out_dir + "/resolved_config.json");
  if (!snapshot) throw IoError("cannot write resolved config snapshot");
  snapshot << config_to_json(config).dump(2) << '\n';
  return config;
}

std::string strategy_dir(Strategy s) {
  switch (s) {
    case Strategy::kGm: return "gm";
    case Strategy::kFedAvg: return "fedavg";
    case Strategy::kLm:
    case Strategy::kLmFused: return "lm";
    case Strategy::kFedAmp:
    case Strategy::kFedAmpFused: return "fedamp";
  }
  throw ParameterError("unknown strategy");
}

bool is_single_model(Strategy s) {
  return s == Strategy::kGm || s == Strategy::kFedAvg;
}

std::string client_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "client_%03d.bin", i);
  return buf;
}

void save_models(const std::string& out_dir, int run, Strategy base,
                 const std::vector<MlpParams>& models, std::uint64_t seed) {
  const fs::path dir = fs::path(out_dir) / "models" /
                       ("run_" + std::to_string(run)) / strategy_dir(base);
  fs::create_directories(dir);
  if (is_single_model(base)) {
    save_checkpoint((dir / "model.bin").string(), models.front(), seed);
    return;
  }
  for (std::size_t i = 0; i < models.size(); ++i) {
    save_checkpoint((dir / client_file(static_cast<int>(i))).string(), models[i],
                    seed);
  }
}

std::vector<MlpParams> load_models(const std::string& out_dir, int run, Strategy s,
                                   int client_count) {
  const fs::path dir = fs::path(out_dir) / "models" /
                       ("run_" + std::to_string(run)) / strategy_dir(s);
  std::vector<MlpParams> models;
  if (is_single_model(s)) {
    models.push_back(load_checkpoint((dir / "model.bin").string()).params);
    return models;
  }
  for (int i = 0; i < client_count; ++i) {
    models.push_back(load_checkpoint((dir / client_file(i)).string()).params);
  }
  return models;
}

std::vector<RssSample> load_filtered_samples(const ExperimentConfig& config,
                                             bool verbose) {
  if (config.source_csv.empty()) {
    throw SchemaError("config: dataset.source_csv is required for this command");
  }
  const auto samples = load_ujiindoorloc(config.source_csv);
  if (verbose) {
    std::cout << "loaded " << samples.size() << " samples from "
              << config.source_csv << "\n";
  }
  auto filtered = filter_building_floor(samples, config.building, config.floor);
  if (verbose) {
    std::cout << "building " << config.building << " / floor " << config.floor
              << ": " << filtered.size() << " samples\n";
  }
  return filtered;
}

AreaDataset load_processed(const ExperimentConfig& config) {
  if (config.processed_path.empty()) {
    throw SchemaError("config: dataset.processed is required for this command");
  }
  return load_dataset(config.processed_path);
}

int run_prepare_data(const CommonArgs& args) {
  std::string out_dir;
  const ExperimentConfig config = setup_command(args, &out_dir);
  const auto filtered = load_filtered_samples(config, args.verbose);

  RoomClustering clustering;
  int clipped = 0;
  const AreaDataset dataset = build_area_dataset(
      filtered, config.label_count, config.master_seed, &clustering, &clipped);

  const std::string processed = config.processed_path.empty()
                                    ? out_dir + "/dataset.bin"
                                    : config.processed_path;
  if (const fs::path parent = fs::path(processed).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  save_dataset(processed, dataset);
  write_label_map_csv(out_dir + "/label_map.csv", clustering);
  write_centroid_csv(out_dir + "/label_centroids.csv", clustering);

  std::cout << "prepared " << dataset.n() << " samples, "
            << clustering.spaces.size() << " rooms -> " << dataset.label_count
            << " areas";
  if (clipped > 0) std::cout << " (" << clipped << " RSS values clipped)";
  std::cout << "\n  dataset: " << processed << "\n  label map: " << out_dir
            << "/label_map.csv\n";
  return 0;
}

int run_partition(const CommonArgs& args, int run) {
  std::string out_dir;
  const ExperimentConfig config = setup_command(args, &out_dir);
  const AreaDataset dataset = load_processed(config);
  const RunSetup setup = make_run_setup(dataset, config, run);

  const std::string manifest =
      out_dir + "/partition_run" + std::to_string(run) + ".csv";
  write_partition_manifest(manifest, setup.parts, setup.train);

  CsvWriter dist(out_dir + "/client_distributions_run" + std::to_string(run) +
                 ".csv");
  std::vector<std::string> header = {"client_id"};
  for (int l = 0; l < dataset.label_count; ++l) {
    header.push_back("p_" + std::to_string(l));
  }
  dist.row(header);
  for (std::size_t i = 0; i < setup.client_distributions.size(); ++i) {
    std::vector<std::string> row = {std::to_string(i)};
    for (int l = 0; l < dataset.label_count; ++l) {
      row.push_back(format_double(setup.client_distributions[i][l]));
    }
    dist.row(row);
  }

  std::cout << "partitioned " << setup.train.n() << " train samples across "
            << setup.parts.size() << " clients\n  manifest: " << manifest << "\n";
  return 0;
}

int run_train(const CommonArgs& args, int run) {
  std::string out_dir;
  const ExperimentConfig config = setup_command(args, &out_dir);
  const AreaDataset dataset = load_processed(config);
  const RunOutput out = run_single(dataset, config, run, /*keep_artifacts=*/true);

  for (const auto& [strategy, models] : out.models) {
    save_models(out_dir, run, strategy, models, out.train_seed);
  }
  const fs::path log_dir = fs::path(out_dir) / "logs";
  fs::create_directories(log_dir);
  if (!out.fedavg_log.empty()) {
    write_round_log_csv(
        (log_dir / ("fedavg_rounds_run" + std::to_string(run) + ".csv")).string(),
        out.fedavg_log);
  }
  if (!out.fedamp_log.empty()) {
    write_round_log_csv(
        (log_dir / ("fedamp_rounds_run" + std::to_string(run) + ".csv")).string(),
        out.fedamp_log);
  }

  std::cout << "run " << run << " accuracies:\n";
  for (const auto& [strategy, acc] : out.accuracies) {
    std::cout << "  " << strategy_name(strategy) << ": " << format_double(acc)
              << "\n";
  }
  std::cout << "checkpoints under " << out_dir << "/models/run_" << run << "/\n";
  return 0;
}

int run_evaluate(const CommonArgs& args, int run) {
  std::string out_dir;
  const ExperimentConfig config = setup_command(args, &out_dir);
  const AreaDataset dataset = load_processed(config);
  const RunSetup setup = make_run_setup(dataset, config, run);
  const LabeledBatch global_test = as_batch(setup.test);

  CsvWriter csv(out_dir + "/metrics_run" + std::to_string(run) + ".csv");
  csv.row({"strategy", "run", "accuracy"});
  std::cout << "run " << run << " accuracies:\n";
  for (Strategy s : config.strategies) {
    const auto models = load_models(out_dir, run, s, config.client_count);
    const double acc =
        evaluate_strategy(s, models, global_test, setup.per_client_test);
    csv.row({strategy_name(s), std::to_string(run), format_double(acc)});
    std::cout << "  " << strategy_name(s) << ": " << format_double(acc) << "\n";
  }
  return 0;
}

int run_sweep(const CommonArgs& args) {
  std::string out_dir;
  const ExperimentConfig config = setup_command(args, &out_dir);
  const auto filtered = load_filtered_samples(config, args.verbose);
  const SweepOutput out = sweep(filtered, config);

  write_results_csv(out_dir + "/results.csv", out.records, config.sweep_axis);
  write_summary_csv(out_dir + "/summary.csv", out.records, config.sweep_axis);
  if (!out.rates.empty()) {
    write_rates_csv(out_dir + "/rates.csv", out.rates, config.sweep_axis);
  }

  std::cout << "strategy, " << axis_name(config.sweep_axis)
            << ", mean accuracy, std\n";
  for (const auto& rec : out.records) {
    std::cout << "  " << strategy_name(rec.strategy) << ", "
              << format_double(rec.sweep_value) << ", " << format_double(rec.mean)
              << ", " << format_double(rec.stddev) << "\n";
  }
  std::cout << "results: " << out_dir << "/results.csv\n";
  return 0;
}

int run_histograms(const CommonArgs& args, int run,
                   const std::string& strategy_arg, int target_label) {
  std::string out_dir;
  const ExperimentConfig config = setup_command(args, &out_dir);
  const Strategy strategy = parse_strategy(strategy_arg);
  if (is_single_model(strategy)) {
    throw ParameterError("histograms need a personalized strategy (LM or FedAMP)");
  }
  const AreaDataset dataset = load_processed(config);
  const RunSetup setup = make_run_setup(dataset, config, run);
  const auto models = load_models(out_dir, run, strategy, config.client_count);

  const auto rows =
      emit_posterior_histograms(models, as_batch(setup.test), target_label);
  const std::string path = out_dir + "/histograms_" + strategy_dir(strategy) +
                           "_label" + std::to_string(target_label) + "_run" +
                           std::to_string(run) + ".csv";
  write_histogram_csv(path, rows);
  std::cout << rows.size() << " histogram rows -> " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated indoor-localization experiment harness"};
  app.require_subcommand(1);

  CommonArgs prepare_args;
  CLI::App* prepare = app.add_subcommand(
      "prepare-data",
      "ingest the RSS CSV, cluster rooms into areas, save the dataset");
  add_common(prepare, prepare_args);

  CommonArgs partition_args;
  int partition_run = 0;
  CLI::App* partition_cmd =
      app.add_subcommand("partition", "derive one run's client partition manifest");
  add_common(partition_cmd, partition_args);
  partition_cmd->add_option("-r,--run", partition_run, "Monte-Carlo run index");

  CommonArgs train_args;
  int train_run = 0;
  CLI::App* train = app.add_subcommand(
      "train", "train one run's strategies and write model checkpoints");
  add_common(train, train_args);
  train->add_option("-r,--run", train_run, "Monte-Carlo run index");

  CommonArgs eval_args;
  int eval_run = 0;
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "score checkpoints from a previous train invocation");
  add_common(evaluate, eval_args);
  evaluate->add_option("-r,--run", eval_run, "Monte-Carlo run index");

  CommonArgs sweep_args;
  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Monte-Carlo runs across the configured sweep axis");
  add_common(sweep_cmd, sweep_args);

  CommonArgs hist_args;
  int hist_run = 0;
  std::string hist_strategy = "FedAMP";
  int hist_label = 0;
  CLI::App* histograms = app.add_subcommand(
      "histograms", "per-model vs fused posterior mass on one label");
  add_common(histograms, hist_args);
  histograms->add_option("-r,--run", hist_run, "Monte-Carlo run index");
  histograms->add_option("--strategy", hist_strategy, "LM or FedAMP");
  histograms->add_option("--target-label", hist_label,
                         "label whose probability is collected");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (prepare->parsed()) return run_prepare_data(prepare_args);
    if (partition_cmd->parsed()) return run_partition(partition_args, partition_run);
    if (train->parsed()) return run_train(train_args, train_run);
    if (evaluate->parsed()) return run_evaluate(eval_args, eval_run);
    if (sweep_cmd->parsed()) return run_sweep(sweep_args);
    if (histograms->parsed()) {
      return run_histograms(hist_args, hist_run, hist_strategy, hist_label);
    }
    return 2;
  } catch (const SchemaError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InputFileError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const EmptySelection& e) {
    std::cerr << "selection error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
