#include <doctest.h>

#include <cmath>

#include "fedloc/experiment.hpp"
#include "fedloc/fusion.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace fedloc;
using fedloc::testing::make_blob_dataset;

namespace {

MlpParams single_layer(const Eigen::MatrixXd& weights) {
  MlpParams p;
  p.layers.resize(1);
  p.layers[0].weights = weights;
  p.layers[0].bias = Eigen::VectorXd::Zero(weights.rows());
  return p;
}

MlpParams zero_model(Eigen::Index in, Eigen::Index out) {
  return single_layer(Eigen::MatrixXd::Zero(out, in));
}

// Two-label batch on one-hot features: rows 0..n0-1 are label 0 at
// (1, 0); the rest label 1 at (0, 1).
LabeledBatch one_hot_batch(Eigen::Index n0, Eigen::Index n1) {
  LabeledBatch batch;
  batch.features = Eigen::MatrixXd::Zero(n0 + n1, 2);
  batch.labels.resize(n0 + n1);
  for (Eigen::Index i = 0; i < n0 + n1; ++i) {
    const int label = i < n0 ? 0 : 1;
    batch.features(i, label) = 1.0;
    batch.labels[i] = label;
  }
  return batch;
}

ExperimentConfig small_config(int label_count, int client_count) {
  ExperimentConfig config;
  config.label_count = label_count;
  config.client_count = client_count;
  config.hidden = {16, 8};
  config.test_fraction = 0.25;
  config.runs = 2;
  config.master_seed = 424242;
  config.workers = 1;
  config.federation.rounds = 3;
  config.federation.local.learning_rate = 0.1;
  config.federation.local.epochs = 2;
  config.federation.local.batch_size = 16;
  return config;
}

}  // namespace

TEST_CASE("strategy names parse and print") {
  CHECK(strategy_name(Strategy::kLmFused) == "LM-F");
  CHECK(parse_strategy("lm-f") == Strategy::kLmFused);
  CHECK(parse_strategy("LM_F") == Strategy::kLmFused);
  CHECK(parse_strategy("fedamp-f") == Strategy::kFedAmpFused);
  CHECK(parse_strategy("FedAvg") == Strategy::kFedAvg);
  CHECK_THROWS_AS(parse_strategy("what"), ParameterError);
  CHECK(parse_axis("LAMBDA") == SweepAxis::kLambda);
  CHECK(parse_axis("labels") == SweepAxis::kLabels);
  CHECK(axis_name(SweepAxis::kSigma) == "sigma");
  CHECK_THROWS_AS(parse_axis("diagonal"), ParameterError);
}

TEST_CASE("a perfect classifier scores accuracy one") {
  const LabeledBatch test = one_hot_batch(6, 6);
  const MlpParams expert = single_layer(10.0 * Eigen::MatrixXd::Identity(2, 2));
  CHECK(evaluate_strategy(Strategy::kGm, {expert}, test, {}) == 1.0);
}

TEST_CASE("zero-weight models score the label-0 share via the MAP tie-break") {
  const AreaDataset dataset = make_blob_dataset(10, 12, 6, 8);  // balanced labels
  const LabeledBatch test = as_batch(dataset);
  const MlpParams zero = zero_model(6, 10);
  const double acc = evaluate_strategy(Strategy::kGm, {zero}, test, {});
  CHECK(acc == doctest::Approx(0.1));  // exactly the label-0 share
  const double fused =
      evaluate_strategy(Strategy::kLmFused, {zero, zero, zero}, test, {});
  CHECK(fused == doctest::Approx(0.1));
}

TEST_CASE("fusion beats the mean of complementary experts") {
  //  Expert A is confident on label 0 and uniform on label 1; expert B
  //  mirrors it. Alone they average 75%; fused they are perfect.
  Eigen::MatrixXd wa(2, 2);
  wa << 2, 0, 0, 0;
  Eigen::MatrixXd wb(2, 2);
  wb << 0, 0, 0, 2;
  const std::vector<MlpParams> models{single_layer(wa), single_layer(wb)};
  const LabeledBatch test = one_hot_batch(8, 8);
  const std::vector<LabeledBatch> per_client{test, test};

  const double mean_local =
      evaluate_strategy(Strategy::kLm, models, test, per_client);
  const double fused = evaluate_strategy(Strategy::kLmFused, models, test, {});
  CHECK(mean_local == doctest::Approx(0.75));
  CHECK(fused == doctest::Approx(1.0));
}

TEST_CASE("evaluation contracts") {
  const LabeledBatch test = one_hot_batch(2, 2);
  const MlpParams m = zero_model(2, 2);
  LabeledBatch empty;
  empty.features.resize(0, 2);
  empty.labels.resize(0);
  CHECK_THROWS_AS(evaluate_strategy(Strategy::kGm, {m}, empty, {}), EvaluationError);
  CHECK_THROWS_AS(evaluate_strategy(Strategy::kGm, {m, m}, test, {}),
                  ContractViolation);
  CHECK_THROWS_AS(evaluate_strategy(Strategy::kLm, {m, m}, test, {test}),
                  ContractViolation);
}

TEST_CASE("per-client resampling follows the requested distribution") {
  const AreaDataset dataset = make_blob_dataset(4, 20, 5, 9);
  Rng rng(3);
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(4);
  mass[2] = 1.0;
  const LabeledBatch drawn = resample_by_distribution(dataset, mass, 30, rng);
  CHECK(drawn.n() == 30);
  for (Eigen::Index i = 0; i < drawn.n(); ++i) CHECK(drawn.labels[i] == 2);

  Eigen::VectorXd mixed(4);
  mixed << 0.5, 0.5, 0.0, 0.0;
  const LabeledBatch half = resample_by_distribution(dataset, mixed, 40, rng);
  const Eigen::VectorXd counts = label_histogram(half.labels, 4);
  CHECK(counts[0] == 20.0);
  CHECK(counts[1] == 20.0);

  AreaDataset empty = dataset;
  empty.features.resize(0, 5);
  empty.labels.resize(0);
  CHECK_THROWS_AS(resample_by_distribution(empty, mixed, 5, rng), EvaluationError);
}

TEST_CASE("resampling renormalizes over labels present in the test set") {
  AreaDataset dataset = make_blob_dataset(3, 10, 4, 10);
  // Restrict to labels 0 and 1 only.
  std::vector<int> rows;
  for (Eigen::Index i = 0; i < dataset.n(); ++i) {
    if (dataset.labels[i] < 2) rows.push_back(static_cast<int>(i));
  }
  AreaDataset reduced = dataset;
  reduced.features = dataset.features(rows, Eigen::all);
  reduced.labels = dataset.labels(rows);

  Rng rng(4);
  Eigen::VectorXd mass(3);
  mass << 0.2, 0.2, 0.6;  // most mass on the missing label
  const LabeledBatch drawn = resample_by_distribution(reduced, mass, 20, rng);
  const Eigen::VectorXd counts = label_histogram(drawn.labels, 3);
  CHECK(counts[2] == 0.0);
  CHECK(counts[0] == 10.0);
  CHECK(counts[1] == 10.0);

  Eigen::VectorXd only_missing = Eigen::VectorXd::Zero(3);
  only_missing[2] = 1.0;
  CHECK_THROWS_AS(resample_by_distribution(reduced, only_missing, 5, rng),
                  EvaluationError);
}

TEST_CASE("monte carlo runs are reproducible and internally consistent") {
  const AreaDataset dataset = make_blob_dataset(4, 40, 8, 11);
  ExperimentConfig config = small_config(4, 3);
  config.runs = 3;
  config.strategies = {Strategy::kGm, Strategy::kLm, Strategy::kLmFused};

  const auto records_a = run_monte_carlo(dataset, config);
  const auto records_b = run_monte_carlo(dataset, config);
  REQUIRE(records_a.size() == 3);
  for (std::size_t s = 0; s < records_a.size(); ++s) {
    CHECK(records_a[s].strategy == config.strategies[s]);
    REQUIRE(records_a[s].accuracies.size() == 3);
    CHECK(records_a[s].accuracies == records_b[s].accuracies);
    double sum = 0.0;
    for (double a : records_a[s].accuracies) {
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
      sum += a;
    }
    CHECK(records_a[s].mean == doctest::Approx(sum / 3.0).epsilon(1e-15));
    double ss = 0.0;
    for (double a : records_a[s].accuracies) {
      ss += (a - records_a[s].mean) * (a - records_a[s].mean);
    }
    CHECK(records_a[s].stddev == doctest::Approx(std::sqrt(ss / 2.0)).epsilon(1e-12));
  }
}

TEST_CASE("single-run records have zero deviation and replay exactly") {
  const AreaDataset dataset = make_blob_dataset(3, 30, 6, 12);
  ExperimentConfig config = small_config(3, 2);
  config.runs = 1;
  config.strategies = {Strategy::kFedAvg, Strategy::kFedAmp};
  const auto a = run_monte_carlo(dataset, config);
  const auto b = run_monte_carlo(dataset, config);
  for (std::size_t s = 0; s < a.size(); ++s) {
    CHECK(a[s].stddev == 0.0);
    CHECK(a[s].accuracies == b[s].accuracies);
  }
}

TEST_CASE("the pooled baseline beats independent locals on IID clients") {
  const AreaDataset dataset = make_blob_dataset(4, 60, 10, 13, 0.15);
  ExperimentConfig config = small_config(4, 3);
  config.runs = 2;
  config.strategies = {Strategy::kGm, Strategy::kLm};
  // One group, every label dominant: IID uniform-ish clients.
  config.explicit_groups = std::vector<GroupSpec::Group>{{3, {0, 1, 2, 3}}};
  const auto records = run_monte_carlo(dataset, config);
  const double gm = records[0].mean;
  const double lm = records[1].mean;
  CHECK(gm >= lm - 0.01);
}

TEST_CASE("workers do not change monte carlo results") {
  const AreaDataset dataset = make_blob_dataset(3, 30, 6, 14);
  ExperimentConfig config = small_config(3, 2);
  config.runs = 3;
  config.strategies = {Strategy::kLm, Strategy::kFedAmpFused};
  config.workers = 1;
  const auto serial = run_monte_carlo(dataset, config);
  config.workers = 3;
  const auto parallel = run_monte_carlo(dataset, config);
  for (std::size_t s = 0; s < serial.size(); ++s) {
    CHECK(serial[s].accuracies == parallel[s].accuracies);
  }
}

TEST_CASE("a sweep point equals a direct monte carlo run") {
  fedloc::testing::SyntheticCsvOptions opts;
  opts.rooms = 12;
  opts.samples_per_room = 20;
  fedloc::testing::TempDir tmp("sweep_point");
  fedloc::testing::write_synthetic_uji_csv(tmp.str("s.csv"), opts);
  const auto samples = load_ujiindoorloc(tmp.str("s.csv"));

  ExperimentConfig config = small_config(4, 3);
  config.strategies = {Strategy::kGm, Strategy::kFedAmpFused};
  config.sweep_axis = SweepAxis::kLambda;
  config.sweep_values = {1.0};
  config.federation.lambda_tilde = 1.0;

  const SweepOutput swept = sweep(samples, config);
  const AreaDataset dataset =
      build_area_dataset(samples, config.label_count, config.master_seed);
  const auto direct = run_monte_carlo(dataset, config);
  REQUIRE(swept.records.size() == direct.size());
  for (std::size_t s = 0; s < direct.size(); ++s) {
    CHECK(swept.records[s].accuracies == direct[s].accuracies);
    CHECK(swept.records[s].sweep_value == 1.0);
  }
}

TEST_CASE("a lambda sweep emits one record per strategy per value plus rates") {
  fedloc::testing::SyntheticCsvOptions opts;
  opts.rooms = 12;
  opts.samples_per_room = 15;
  fedloc::testing::TempDir tmp("sweep_lambda");
  fedloc::testing::write_synthetic_uji_csv(tmp.str("s.csv"), opts);
  const auto samples = load_ujiindoorloc(tmp.str("s.csv"));

  ExperimentConfig config = small_config(4, 3);
  config.runs = 1;
  config.strategies = {Strategy::kGm, Strategy::kFedAvg, Strategy::kFedAmpFused};
  config.sweep_axis = SweepAxis::kLambda;
  config.sweep_values = {0.001, 0.01, 0.1, 1.0, 10.0};

  const SweepOutput out = sweep(samples, config);
  CHECK(out.records.size() == 15);
  REQUIRE(out.rates.size() == 5);
  for (const auto& rate : out.rates) {
    double fused = 0.0;
    double gm = 0.0;
    double avg = 0.0;
    for (const auto& rec : out.records) {
      if (rec.sweep_value != rate.sweep_value) continue;
      if (rec.strategy == Strategy::kGm) gm = rec.mean;
      if (rec.strategy == Strategy::kFedAvg) avg = rec.mean;
      if (rec.strategy == Strategy::kFedAmpFused) fused = rec.mean;
    }
    CHECK(rate.fedampf_over_gm == doctest::Approx(fused / gm));
    CHECK(rate.fedampf_over_fedavg == doctest::Approx(fused / avg));
  }

  config.sweep_axis = SweepAxis::kSigma;
  config.sweep_values = {};
  CHECK_THROWS_AS(sweep(samples, config), ParameterError);
}

TEST_CASE("histogram rows cover each target sample per model and fused") {
  Eigen::MatrixXd wa(2, 2);
  wa << 2, 0, 0, 0;
  Eigen::MatrixXd wb(2, 2);
  wb << 0, 0, 0, 2;
  const std::vector<MlpParams> models{single_layer(wa), single_layer(wb)};
  const LabeledBatch test = one_hot_batch(5, 7);

  const auto rows = emit_posterior_histograms(models, test, 0);
  CHECK(rows.size() == 5 * 3);
  double model_sum = 0.0;
  double fused_sum = 0.0;
  int fused_rows = 0;
  for (const auto& row : rows) {
    if (row.source == "fused") {
      fused_sum += row.probability;
      ++fused_rows;
    } else {
      model_sum += row.probability;
    }
  }
  CHECK(fused_rows == 5);
  // Fusion sharpens the target-label mass above the per-model average.
  CHECK(fused_sum / 5.0 > model_sum / 10.0);

  CHECK_THROWS_AS(emit_posterior_histograms(models, test, 3), ParameterError);
  LabeledBatch only_ones = one_hot_batch(0, 4);
  CHECK_THROWS_AS(emit_posterior_histograms(models, only_ones, 0),
                  EvaluationError);
}

TEST_CASE("a single model histograms identically before and after fusion") {
  const AreaDataset dataset = make_blob_dataset(3, 8, 4, 15);
  const LabeledBatch test = as_batch(dataset);
  const MlpParams m = make_mlp<double>({4, 6, 3}, 21);
  const auto rows = emit_posterior_histograms({m}, test, 1);
  REQUIRE(rows.size() % 2 == 0);
  for (std::size_t i = 0; i < rows.size(); i += 2) {
    CHECK(rows[i].source == "model_0");
    CHECK(rows[i + 1].source == "fused");
    CHECK(rows[i].probability == rows[i + 1].probability);
    CHECK(rows[i].sample_index == rows[i + 1].sample_index);
  }
}

TEST_CASE("group spec mismatches surface as parameter errors") {
  const AreaDataset dataset = make_blob_dataset(4, 30, 5, 16);
  ExperimentConfig config = small_config(4, 3);
  config.explicit_groups = std::vector<GroupSpec::Group>{{2, {0, 1}}};  // covers 2 of 3
  CHECK_THROWS_AS(run_monte_carlo(dataset, config), ParameterError);
}

TEST_CASE("csv writers produce stable headers") {
  fedloc::testing::TempDir tmp("writers");
  MetricsRecord rec;
  rec.strategy = Strategy::kGm;
  rec.sweep_value = 2.0;
  rec.accuracies = {0.5, 0.25};
  rec.mean = 0.375;
  rec.stddev = 0.17677669529663687;
  write_results_csv(tmp.str("r.csv"), {rec}, SweepAxis::kLambda);
  write_summary_csv(tmp.str("s.csv"), {rec}, SweepAxis::kLambda);
  write_rates_csv(tmp.str("rates.csv"), {RateRecord{2.0, 1.25, 0.5}},
                  SweepAxis::kLambda);

  std::ifstream results(tmp.str("r.csv"));
  std::string line;
  REQUIRE(std::getline(results, line));
  CHECK(line == "strategy,sweep_axis,sweep_value,run,accuracy");
  REQUIRE(std::getline(results, line));
  CHECK(line == "GM,lambda,2,0,0.5");
  REQUIRE(std::getline(results, line));
  CHECK(line == "GM,lambda,2,1,0.25");

  std::ifstream summary(tmp.str("s.csv"));
  REQUIRE(std::getline(summary, line));
  CHECK(line == "strategy,sweep_axis,sweep_value,mean,std");
  REQUIRE(std::getline(summary, line));
  CHECK(line == "GM,lambda,2,0.375,0.17677669529663687");

  std::ifstream rates(tmp.str("rates.csv"));
  REQUIRE(std::getline(rates, line));
  CHECK(line == "sweep_axis,sweep_value,fedampf_over_gm,fedampf_over_fedavg");
  REQUIRE(std::getline(rates, line));
  CHECK(line == "lambda,2,1.25,0.5");
}
