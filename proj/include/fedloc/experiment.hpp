#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedloc/dataset.hpp"
#include "fedloc/federation.hpp"
#include "fedloc/partition.hpp"

namespace fedloc {

enum class Strategy { kGm, kLm, kLmFused, kFedAvg, kFedAmp, kFedAmpFused };

std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

enum class SweepAxis { kNone, kLabels, kClients, kSigma, kLambda };

std::string axis_name(SweepAxis axis);
SweepAxis parse_axis(const std::string& name);

struct ExperimentConfig {
  // Data sources.
  std::string source_csv;      // raw UJIIndoorLoc-format CSV
  std::string processed_path;  // binary AreaDataset container
  int building = 1;
  int floor = 1;
  double test_fraction = 0.2;

  // Problem shape.
  int label_count = 10;  // L
  int client_count = 6;  // M
  std::vector<int> hidden = {256, 16};

  // Group-structured label skew; explicit groups override the derived
  // three-group layout.
  std::optional<std::vector<GroupSpec::Group>> explicit_groups;
  int group_count = 3;
  double beta_high = 80.0;
  double beta_low = 20.0;
  int samples_per_client = 0;  // 0: floor(n_train / M)

  std::vector<Strategy> strategies = {Strategy::kGm,     Strategy::kLm,
                                      Strategy::kLmFused, Strategy::kFedAvg,
                                      Strategy::kFedAmp, Strategy::kFedAmpFused};

  FederationConfig federation;

  // Monte-Carlo harness.
  int runs = 10;
  std::uint64_t master_seed = 20240601;

  SweepAxis sweep_axis = SweepAxis::kNone;
  std::vector<double> sweep_values;

  int workers = 0;  // 0: all hardware threads
  std::optional<std::string> output_dir;  // resolved by the CLI
};

GroupSpec effective_group_spec(const ExperimentConfig& config);

// Clusters rooms into label_count areas (seed derived from the master
// seed and label_count) and assembles the processed dataset. Backs both
// prepare-data and the sweep over the label axis, so they agree.
AreaDataset build_area_dataset(const std::vector<RssSample>& samples,
                               int label_count, std::uint64_t master_seed,
                               RoomClustering* clustering_out = nullptr,
                               int* clipped_count = nullptr);

// Fraction of rows whose MAP label matches the truth.
double accuracy(const MlpParams& model, const LabeledBatch& test);
// Same, with the models' posteriors fused under a uniform prior.
double fused_accuracy(const std::vector<MlpParams>& models, const LabeledBatch& test);

// Per-strategy accuracy. Global strategies (GM, FedAvg) and fused
// strategies score one predictor on the global test set; personalized
// strategies (LM, FedAMP) average each model's accuracy on its client's
// test set.
double evaluate_strategy(Strategy strategy, const std::vector<MlpParams>& models,
                         const LabeledBatch& global_test,
                         const std::vector<LabeledBatch>& per_client_test);

// Test set matching a client's label mix: label counts apportioned by
// the distribution (restricted to labels present in the test set), rows
// drawn with replacement.
LabeledBatch resample_by_distribution(const AreaDataset& test,
                                      const Eigen::VectorXd& distribution,
                                      Eigen::Index count, Rng& rng);

// Everything one Monte-Carlo run produces; models and partition data
// are kept only when keep_artifacts is set (checkpointing CLI path).
struct RunOutput {
  std::vector<std::pair<Strategy, double>> accuracies;  // config order
  std::map<Strategy, std::vector<MlpParams>> models;
  std::vector<Eigen::VectorXd> client_distributions;
  std::vector<ClientPartition> parts;
  RoundLog fedavg_log;
  RoundLog fedamp_log;
  std::uint64_t train_seed = 0;  // checkpoint provenance
};

RunOutput run_single(const AreaDataset& dataset, const ExperimentConfig& config,
                     int run_index, bool keep_artifacts = false);

// Derived per-run artifacts shared by run_single and the CLI commands
// that re-derive them (partition, evaluate, histograms).
struct RunSetup {
  AreaDataset train;
  AreaDataset test;
  std::vector<Eigen::VectorXd> client_distributions;
  std::vector<ClientPartition> parts;
  MlpParams initial_params;
  FederationConfig federation;  // local.rng_seed resolved for this run
  std::vector<LabeledBatch> per_client_test;
};

RunSetup make_run_setup(const AreaDataset& dataset, const ExperimentConfig& config,
                        int run_index);

struct MetricsRecord {
  Strategy strategy{};
  double sweep_value = 0.0;
  std::vector<double> accuracies;  // one per run
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation
};

// R independent runs with derived seeds; records in strategy order.
std::vector<MetricsRecord> run_monte_carlo(const AreaDataset& dataset,
                                           const ExperimentConfig& config);

struct RateRecord {
  double sweep_value = 0.0;
  double fedampf_over_gm = 0.0;
  double fedampf_over_fedavg = 0.0;
};

struct SweepOutput {
  std::vector<MetricsRecord> records;
  std::vector<RateRecord> rates;  // sigma / lambda axes only
};

// Runs the Monte-Carlo harness per sweep value. The labels axis
// re-clusters rooms per value; other axes reuse one clustering.
SweepOutput sweep(const std::vector<RssSample>& samples,
                  const ExperimentConfig& config);

struct HistogramRow {
  int sample_index = 0;
  std::string source;  // "model_<i>" or "fused"
  double probability = 0.0;
};

// Per-model and fused posterior mass on the target label over the test
// samples that carry it (probability-distribution plot input).
std::vector<HistogramRow> emit_posterior_histograms(
    const std::vector<MlpParams>& models, const LabeledBatch& test,
    int target_label);

void write_results_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records, SweepAxis axis);
void write_summary_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records, SweepAxis axis);
void write_rates_csv(const std::string& path, const std::vector<RateRecord>& rates,
                     SweepAxis axis);
void write_round_log_csv(const std::string& path, const RoundLog& log);
void write_histogram_csv(const std::string& path,
                         const std::vector<HistogramRow>& rows);

}  // namespace fedloc
