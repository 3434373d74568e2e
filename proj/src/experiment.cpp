#include "fedloc/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "fedloc/csv.hpp"
#include "fedloc/errors.hpp"
#include "fedloc/fusion.hpp"
#include "fedloc/parallel.hpp"

namespace fedloc {

namespace {

// Seed-derivation tags; fixed forever so outputs are stable.
constexpr std::uint64_t kRunTag = 1;
constexpr std::uint64_t kSplitTag = 2;
constexpr std::uint64_t kPartitionTag = 3;
constexpr std::uint64_t kInitTag = 4;
constexpr std::uint64_t kTrainTag = 5;
constexpr std::uint64_t kClientTestTag = 6;
constexpr std::uint64_t kClusterTag = 7;

std::string normalize_token(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

int argmax_row(const Eigen::MatrixXd& probs, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index j = 1; j < probs.cols(); ++j) {
    if (probs(row, j) > probs(row, best)) best = static_cast<int>(j);
  }
  return best;
}

bool wants(const ExperimentConfig& config, Strategy s) {
  return std::find(config.strategies.begin(), config.strategies.end(), s) !=
         config.strategies.end();
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kGm: return "GM";
    case Strategy::kLm: return "LM";
    case Strategy::kLmFused: return "LM-F";
    case Strategy::kFedAvg: return "FedAvg";
    case Strategy::kFedAmp: return "FedAMP";
    case Strategy::kFedAmpFused: return "FedAMP-F";
  }
  throw ParameterError("unknown strategy");
}

Strategy parse_strategy(const std::string& name) {
  const std::string token = normalize_token(name);
  if (token == "GM") return Strategy::kGm;
  if (token == "LM") return Strategy::kLm;
  if (token == "LMF") return Strategy::kLmFused;
  if (token == "FEDAVG") return Strategy::kFedAvg;
  if (token == "FEDAMP") return Strategy::kFedAmp;
  if (token == "FEDAMPF") return Strategy::kFedAmpFused;
  throw ParameterError("unknown strategy: " + name);
}

std::string axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::kNone: return "none";
    case SweepAxis::kLabels: return "labels";
    case SweepAxis::kClients: return "clients";
    case SweepAxis::kSigma: return "sigma";
    case SweepAxis::kLambda: return "lambda";
  }
  throw ParameterError("unknown sweep axis");
}

SweepAxis parse_axis(const std::string& name) {
  const std::string token = normalize_token(name);
  if (token == "NONE" || token.empty()) return SweepAxis::kNone;
  if (token == "LABELS" || token == "L") return SweepAxis::kLabels;
  if (token == "CLIENTS" || token == "M") return SweepAxis::kClients;
  if (token == "SIGMA") return SweepAxis::kSigma;
  if (token == "LAMBDA" || token == "LAMBDATILDE") return SweepAxis::kLambda;
  throw ParameterError("unknown sweep axis: " + name);
}

GroupSpec effective_group_spec(const ExperimentConfig& config) {
  GroupSpec spec;
  if (config.explicit_groups.has_value()) {
    spec.groups = *config.explicit_groups;
    spec.beta_high = config.beta_high;
    spec.beta_low = config.beta_low;
  } else {
    spec = default_group_spec(config.label_count, config.client_count,
                              config.beta_high, config.beta_low,
                              config.group_count);
  }
  spec.samples_per_client = config.samples_per_client;
  if (spec.total_clients() != config.client_count) {
    throw ParameterError("group spec covers " + std::to_string(spec.total_clients()) +
                         " clients but the experiment has " +
                         std::to_string(config.client_count));
  }
  return spec;
}

double accuracy(const MlpParams& model, const LabeledBatch& test) {
  if (test.n() < 1) throw EvaluationError("accuracy: empty test set");
  const Eigen::MatrixXd probs = forward_batch(model, test.features);
  Eigen::Index hits = 0;
  for (Eigen::Index r = 0; r < test.n(); ++r) {
    if (argmax_row(probs, r) == test.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.n());
}

double fused_accuracy(const std::vector<MlpParams>& models, const LabeledBatch& test) {
  if (models.empty()) throw ContractViolation("fused_accuracy: no models");
  if (test.n() < 1) throw EvaluationError("fused_accuracy: empty test set");
  const auto label_count = models.front().output_dim();
  const auto prior = ClassPrior::uniform(label_count);

  std::vector<Eigen::MatrixXd> probs;
  probs.reserve(models.size());
  for (const auto& model : models) {
    probs.push_back(forward_batch(model, test.features));
  }

  Eigen::Index hits = 0;
  std::vector<Eigen::VectorXd> posteriors(models.size());
  for (Eigen::Index r = 0; r < test.n(); ++r) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      posteriors[i] = probs[i].row(r).transpose();
    }
    const Eigen::VectorXd fused = fuse_with_fallback(posteriors, prior);
    if (classify_map(fused) == test.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.n());
}

double evaluate_strategy(Strategy strategy, const std::vector<MlpParams>& models,
                         const LabeledBatch& global_test,
                         const std::vector<LabeledBatch>& per_client_test) {
  switch (strategy) {
    case Strategy::kGm:
    case Strategy::kFedAvg:
      if (models.size() != 1) {
        throw ContractViolation("evaluate_strategy: " + strategy_name(strategy) +
                                " expects exactly one model");
      }
      return accuracy(models.front(), global_test);
    case Strategy::kLmFused:
    case Strategy::kFedAmpFused:
      return fused_accuracy(models, global_test);
    case Strategy::kLm:
    case Strategy::kFedAmp: {
      if (models.size() != per_client_test.size()) {
        throw ContractViolation(
            "evaluate_strategy: one test set per personalized model required");
      }
      double sum = 0.0;
      for (std::size_t i = 0; i < models.size(); ++i) {
        sum += accuracy(models[i], per_client_test[i]);
      }
      return sum / static_cast<double>(models.size());
    }
  }
  throw ParameterError("unknown strategy");
}

LabeledBatch resample_by_distribution(const AreaDataset& test,
                                      const Eigen::VectorXd& distribution,
                                      Eigen::Index count, Rng& rng) {
  if (test.n() < 1) throw EvaluationError("resample_by_distribution: empty test set");
  if (distribution.size() != test.label_count) {
    throw ContractViolation("resample_by_distribution: distribution length mismatch");
  }
  std::vector<std::vector<int>> rows_by_label(static_cast<std::size_t>(test.label_count));
  for (Eigen::Index i = 0; i < test.n(); ++i) {
    rows_by_label[static_cast<std::size_t>(test.labels[i])].push_back(static_cast<int>(i));
  }
  Eigen::VectorXd weights = Eigen::VectorXd::Zero(test.label_count);
  for (int l = 0; l < test.label_count; ++l) {
    if (!rows_by_label[static_cast<std::size_t>(l)].empty()) weights[l] = distribution[l];
  }
  if (!(weights.sum() > 0.0)) {
    throw EvaluationError(
        "resample_by_distribution: no test samples under the client's labels");
  }
  const std::vector<int> counts =
      largest_remainder_counts(weights, static_cast<int>(count));
  std::vector<int> rows;
  rows.reserve(static_cast<std::size_t>(count));
  for (int l = 0; l < test.label_count; ++l) {
    const auto& candidates = rows_by_label[static_cast<std::size_t>(l)];
    for (int t = 0; t < counts[static_cast<std::size_t>(l)]; ++t) {
      rows.push_back(candidates[rng.below(candidates.size())]);
    }
  }
  LabeledBatch batch;
  batch.features = test.features(rows, Eigen::all);
  batch.labels = test.labels(rows);
  return batch;
}

RunSetup make_run_setup(const AreaDataset& dataset, const ExperimentConfig& config,
                        int run_index) {
  if (run_index < 0) throw ParameterError("run index must be >= 0");
  const std::uint64_t run_seed =
      derive_seed(config.master_seed, {kRunTag, static_cast<std::uint64_t>(run_index)});

  RunSetup setup;
  std::tie(setup.train, setup.test) = split_train_test(
      dataset, config.test_fraction, derive_seed(run_seed, {kSplitTag}));
  if (setup.train.n() < 1) throw EvaluationError("run setup: empty train split");

  const GroupSpec spec = effective_group_spec(config);
  Rng partition_rng(derive_seed(run_seed, {kPartitionTag}));
  setup.client_distributions.reserve(static_cast<std::size_t>(config.client_count));
  for (int i = 0; i < config.client_count; ++i) {
    setup.client_distributions.push_back(sample_distribution(
        concentration_vector(spec, spec.group_of_client(i), dataset.label_count),
        partition_rng));
  }
  setup.parts = partition(setup.train, setup.client_distributions, spec, partition_rng);

  std::vector<Eigen::Index> widths;
  widths.push_back(setup.train.feature_dim());
  for (int h : config.hidden) widths.push_back(h);
  widths.push_back(dataset.label_count);
  setup.initial_params = make_mlp<double>(widths, derive_seed(run_seed, {kInitTag}));

  setup.federation = config.federation;
  setup.federation.local.rng_seed = derive_seed(run_seed, {kTrainTag});

  // Each client is scored on test data matching the label mix it was
  // actually trained on.
  setup.per_client_test.reserve(setup.parts.size());
  for (std::size_t i = 0; i < setup.parts.size(); ++i) {
    const LabeledBatch client_data = slice(setup.train, setup.parts[i].rows);
    Eigen::VectorXd empirical =
        label_histogram(client_data.labels, dataset.label_count);
    empirical /= empirical.sum();
    Rng test_rng(derive_seed(run_seed, {kClientTestTag, static_cast<std::uint64_t>(i)}));
    setup.per_client_test.push_back(
        resample_by_distribution(setup.test, empirical, setup.test.n(), test_rng));
  }
  return setup;
}

AreaDataset build_area_dataset(const std::vector<RssSample>& samples,
                               int label_count, std::uint64_t master_seed,
                               RoomClustering* clustering_out,
                               int* clipped_count) {
  const RoomClustering clustering = cluster_rooms(
      samples, label_count,
      derive_seed(master_seed, {kClusterTag, static_cast<std::uint64_t>(label_count)}));
  AreaDataset dataset = make_area_dataset(samples, clustering, clipped_count);
  if (clustering_out != nullptr) *clustering_out = clustering;
  return dataset;
}

RunOutput run_single(const AreaDataset& dataset, const ExperimentConfig& config,
                     int run_index, bool keep_artifacts) {
  RunSetup setup = make_run_setup(dataset, config, run_index);

  std::vector<ClientState> clients;
  clients.reserve(setup.parts.size());
  for (const auto& part : setup.parts) {
    clients.push_back(ClientState{part.client_id, setup.initial_params,
                                  slice(setup.train, part.rows)});
  }

  RunOutput out;
  out.train_seed = setup.federation.local.rng_seed;
  const bool want_lm = wants(config, Strategy::kLm) || wants(config, Strategy::kLmFused);
  const bool want_amp =
      wants(config, Strategy::kFedAmp) || wants(config, Strategy::kFedAmpFused);

  std::vector<MlpParams> gm_model;
  std::vector<MlpParams> fedavg_model;
  std::vector<MlpParams> lm_models;
  std::vector<MlpParams> amp_models;
  if (wants(config, Strategy::kGm)) {
    gm_model.push_back(train_gm(setup.initial_params, as_batch(setup.train),
                                setup.federation));
  }
  if (wants(config, Strategy::kFedAvg)) {
    fedavg_model.push_back(run_fedavg(clients, setup.federation,
                                      keep_artifacts ? &out.fedavg_log : nullptr));
  }
  if (want_lm) lm_models = train_lm(clients, setup.federation);
  if (want_amp) {
    amp_models = run_fedamp(clients, setup.federation,
                            keep_artifacts ? &out.fedamp_log : nullptr);
  }

  const LabeledBatch global_test = as_batch(setup.test);
  const auto models_for = [&](Strategy s) -> const std::vector<MlpParams>& {
    switch (s) {
      case Strategy::kGm: return gm_model;
      case Strategy::kFedAvg: return fedavg_model;
      case Strategy::kLm:
      case Strategy::kLmFused: return lm_models;
      case Strategy::kFedAmp:
      case Strategy::kFedAmpFused: return amp_models;
    }
    throw ParameterError("unknown strategy");
  };
  for (Strategy s : config.strategies) {
    out.accuracies.emplace_back(
        s, evaluate_strategy(s, models_for(s), global_test, setup.per_client_test));
  }

  if (keep_artifacts) {
    if (!gm_model.empty()) out.models[Strategy::kGm] = gm_model;
    if (!fedavg_model.empty()) out.models[Strategy::kFedAvg] = fedavg_model;
    if (!lm_models.empty()) out.models[Strategy::kLm] = lm_models;
    if (!amp_models.empty()) out.models[Strategy::kFedAmp] = amp_models;
    out.client_distributions = std::move(setup.client_distributions);
    out.parts = std::move(setup.parts);
  }
  return out;
}

std::vector<MetricsRecord> run_monte_carlo(const AreaDataset& dataset,
                                           const ExperimentConfig& config) {
  if (config.runs < 1) throw ParameterError("run_monte_carlo: runs must be >= 1");
  std::vector<std::vector<double>> per_run(static_cast<std::size_t>(config.runs));
  parallel_for(config.runs, config.workers, [&](int r) {
    const RunOutput out = run_single(dataset, config, r);
    std::vector<double> accs;
    accs.reserve(out.accuracies.size());
    for (const auto& [strategy, value] : out.accuracies) accs.push_back(value);
    per_run[static_cast<std::size_t>(r)] = std::move(accs);
  });

  std::vector<MetricsRecord> records;
  records.reserve(config.strategies.size());
  for (std::size_t s = 0; s < config.strategies.size(); ++s) {
    MetricsRecord rec;
    rec.strategy = config.strategies[s];
    rec.accuracies.reserve(static_cast<std::size_t>(config.runs));
    for (int r = 0; r < config.runs; ++r) {
      rec.accuracies.push_back(per_run[static_cast<std::size_t>(r)][s]);
    }
    double sum = 0.0;
    for (double a : rec.accuracies) sum += a;
    rec.mean = sum / static_cast<double>(config.runs);
    if (config.runs > 1) {
      double ss = 0.0;
      for (double a : rec.accuracies) ss += (a - rec.mean) * (a - rec.mean);
      rec.stddev = std::sqrt(ss / static_cast<double>(config.runs - 1));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

SweepOutput sweep(const std::vector<RssSample>& samples,
                  const ExperimentConfig& config) {
  if (config.sweep_axis != SweepAxis::kNone && config.sweep_values.empty()) {
    throw ParameterError("sweep: no sweep values configured");
  }
  const std::vector<double> values = config.sweep_axis == SweepAxis::kNone
                                         ? std::vector<double>{0.0}
                                         : config.sweep_values;

  std::map<int, AreaDataset> dataset_by_label_count;
  const auto dataset_for = [&](int label_count) -> const AreaDataset& {
    auto it = dataset_by_label_count.find(label_count);
    if (it == dataset_by_label_count.end()) {
      it = dataset_by_label_count
               .emplace(label_count, build_area_dataset(samples, label_count,
                                                        config.master_seed))
               .first;
    }
    return it->second;
  };

  SweepOutput out;
  for (double value : values) {
    ExperimentConfig point = config;
    switch (config.sweep_axis) {
      case SweepAxis::kNone:
        break;
      case SweepAxis::kLabels:
        point.label_count = static_cast<int>(std::llround(value));
        break;
      case SweepAxis::kClients:
        point.client_count = static_cast<int>(std::llround(value));
        break;
      case SweepAxis::kSigma:
        point.federation.sigma = value;
        break;
      case SweepAxis::kLambda:
        point.federation.lambda_tilde = value;
        break;
    }
    std::vector<MetricsRecord> records =
        run_monte_carlo(dataset_for(point.label_count), point);
    for (auto& rec : records) {
      rec.sweep_value = config.sweep_axis == SweepAxis::kNone ? 0.0 : value;
      out.records.push_back(std::move(rec));
    }
  }

  if (config.sweep_axis == SweepAxis::kSigma || config.sweep_axis == SweepAxis::kLambda) {
    for (double value : values) {
      const auto mean_of = [&](Strategy s, bool* found) {
        for (const auto& rec : out.records) {
          if (rec.strategy == s && rec.sweep_value == value) {
            *found = true;
            return rec.mean;
          }
        }
        *found = false;
        return 0.0;
      };
      bool has_fused = false;
      bool has_gm = false;
      bool has_avg = false;
      const double fused = mean_of(Strategy::kFedAmpFused, &has_fused);
      const double gm = mean_of(Strategy::kGm, &has_gm);
      const double avg = mean_of(Strategy::kFedAvg, &has_avg);
      if (has_fused && has_gm && has_avg) {
        out.rates.push_back(RateRecord{value, fused / gm, fused / avg});
      }
    }
  }
  return out;
}

std::vector<HistogramRow> emit_posterior_histograms(
    const std::vector<MlpParams>& models, const LabeledBatch& test,
    int target_label) {
  if (models.empty()) throw ContractViolation("emit_posterior_histograms: no models");
  const auto label_count = models.front().output_dim();
  if (target_label < 0 || target_label >= label_count) {
    throw ParameterError("emit_posterior_histograms: target label out of range");
  }
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < test.n(); ++i) {
    if (test.labels[i] == target_label) rows.push_back(static_cast<int>(i));
  }
  if (rows.empty()) {
    throw EvaluationError("emit_posterior_histograms: no test samples with label " +
                          std::to_string(target_label));
  }

  const auto prior = ClassPrior::uniform(label_count);
  std::vector<HistogramRow> out;
  out.reserve(rows.size() * (models.size() + 1));
  std::vector<Eigen::VectorXd> posteriors(models.size());
  for (int row : rows) {
    const Eigen::VectorXd features = test.features.row(row).transpose();
    for (std::size_t i = 0; i < models.size(); ++i) {
      posteriors[i] = forward(models[i], features);
      out.push_back(HistogramRow{row, "model_" + std::to_string(i),
                                 posteriors[i][target_label]});
    }
    const Eigen::VectorXd fused = fuse_with_fallback(posteriors, prior);
    out.push_back(HistogramRow{row, "fused", fused[target_label]});
  }
  return out;
}

void write_results_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records, SweepAxis axis) {
  CsvWriter csv(path);
  csv.row({"strategy", "sweep_axis", "sweep_value", "run", "accuracy"});
  for (const auto& rec : records) {
    for (std::size_t r = 0; r < rec.accuracies.size(); ++r) {
      csv.row({strategy_name(rec.strategy), axis_name(axis),
               format_double(rec.sweep_value), std::to_string(r),
               format_double(rec.accuracies[r])});
    }
  }
}

void write_summary_csv(const std::string& path,
                       const std::vector<MetricsRecord>& records, SweepAxis axis) {
  CsvWriter csv(path);
  csv.row({"strategy", "sweep_axis", "sweep_value", "mean", "std"});
  for (const auto& rec : records) {
    csv.row({strategy_name(rec.strategy), axis_name(axis),
             format_double(rec.sweep_value), format_double(rec.mean),
             format_double(rec.stddev)});
  }
}

void write_rates_csv(const std::string& path, const std::vector<RateRecord>& rates,
                     SweepAxis axis) {
  CsvWriter csv(path);
  csv.row({"sweep_axis", "sweep_value", "fedampf_over_gm", "fedampf_over_fedavg"});
  for (const auto& rate : rates) {
    csv.row({axis_name(axis), format_double(rate.sweep_value),
             format_double(rate.fedampf_over_gm),
             format_double(rate.fedampf_over_fedavg)});
  }
}

void write_round_log_csv(const std::string& path, const RoundLog& log) {
  CsvWriter csv(path);
  std::vector<std::string> header = {"round", "client_id", "local_loss",
                                     "prox_distance"};
  const std::size_t xi_width = log.empty() ? 0 : log.front().xi_row.size();
  for (std::size_t j = 0; j < xi_width; ++j) {
    header.push_back("xi_" + std::to_string(j));
  }
  csv.row(header);
  for (const auto& rec : log) {
    std::vector<std::string> row = {std::to_string(rec.round),
                                    std::to_string(rec.client_id),
                                    format_double(rec.local_loss),
                                    format_double(rec.prox_distance)};
    for (double xi : rec.xi_row) row.push_back(format_double(xi));
    csv.row(row);
  }
}

void write_histogram_csv(const std::string& path,
                         const std::vector<HistogramRow>& rows) {
  CsvWriter csv(path);
  csv.row({"sample_index", "source", "probability"});
  for (const auto& row : rows) {
    csv.row({std::to_string(row.sample_index), row.source,
             format_double(row.probability)});
  }
}

}  // namespace fedloc
