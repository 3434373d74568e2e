#include <doctest.h>

#include <numeric>
#include <set>

#include "fedloc/partition.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace fedloc;
using fedloc::testing::make_blob_dataset;

namespace {

GroupSpec paper_spec() {
  GroupSpec spec;
  spec.groups = {{2, {0, 1, 2}}, {2, {3, 4, 5}}, {2, {6, 7, 8}}};
  spec.beta_high = 80.0;
  spec.beta_low = 20.0;
  return spec;
}

Eigen::VectorXd point_mass(int label_count, int label) {
  Eigen::VectorXd p = Eigen::VectorXd::Zero(label_count);
  p[label] = 1.0;
  return p;
}

}  // namespace

TEST_CASE("concentration vectors put beta_high on the dominant labels") {
  const GroupSpec spec = paper_spec();
  const Eigen::VectorXd beta = concentration_vector(spec, 0, 10);
  for (int l = 0; l < 10; ++l) {
    CHECK(beta[l] == (l <= 2 ? 80.0 : 20.0));
  }
  const Eigen::VectorXd beta2 = concentration_vector(spec, 2, 10);
  CHECK(beta2[6] == 80.0);
  CHECK(beta2[0] == 20.0);
}

TEST_CASE("degenerate dominant sets give constant concentration vectors") {
  GroupSpec spec = paper_spec();
  spec.groups[0].dominant_labels = {0, 1, 2, 3, 4};
  CHECK(concentration_vector(spec, 0, 5).isConstant(80.0));
  spec.groups[0].dominant_labels = {};
  CHECK(concentration_vector(spec, 0, 5).isConstant(20.0));
}

TEST_CASE("concentration vector validation") {
  GroupSpec spec = paper_spec();
  CHECK_THROWS_AS(concentration_vector(spec, 3, 10), ParameterError);
  // Dominant label 2 falls outside a 2-label problem.
  CHECK_THROWS_AS(concentration_vector(spec, 0, 2), ParameterError);
  spec.beta_low = 0.0;
  CHECK_THROWS_AS(concentration_vector(spec, 0, 10), ParameterError);
}

TEST_CASE("default group spec covers clients and labels with contiguous blocks") {
  const GroupSpec spec = default_group_spec(10, 6);
  REQUIRE(spec.groups.size() == 3);
  CHECK(spec.total_clients() == 6);
  CHECK(spec.groups[0].client_count == 2);
  CHECK(spec.groups[0].dominant_labels == std::vector<int>{0, 1, 2, 3});
  CHECK(spec.groups[1].dominant_labels == std::vector<int>{4, 5, 6});
  CHECK(spec.groups[2].dominant_labels == std::vector<int>{7, 8, 9});

  const GroupSpec four = default_group_spec(10, 4);
  CHECK(four.total_clients() == 4);
  CHECK(four.groups[0].client_count == 2);
  CHECK(four.groups[1].client_count == 1);

  const GroupSpec solo = default_group_spec(4, 1);
  CHECK(solo.groups.size() == 1);
  CHECK(solo.groups[0].dominant_labels == std::vector<int>{0, 1, 2, 3});

  CHECK(default_group_spec(2, 9).groups.size() == 2);  // capped by labels
}

TEST_CASE("group_of_client walks consecutive blocks") {
  const GroupSpec spec = paper_spec();
  CHECK(spec.group_of_client(0) == 0);
  CHECK(spec.group_of_client(1) == 0);
  CHECK(spec.group_of_client(2) == 1);
  CHECK(spec.group_of_client(5) == 2);
  CHECK_THROWS_AS(spec.group_of_client(6), ParameterError);
}

TEST_CASE("largest remainder apportionment is exact and deterministic") {
  Eigen::VectorXd w(3);
  w << 0.5, 0.3, 0.2;
  CHECK(largest_remainder_counts(w, 10) == std::vector<int>{5, 3, 2});

  Eigen::VectorXd even = Eigen::VectorXd::Ones(4);
  CHECK(largest_remainder_counts(even, 10) == std::vector<int>{3, 3, 2, 2});

  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::VectorXd weights(6);
    for (int i = 0; i < 6; ++i) weights[i] = rng.uniform();
    const auto counts = largest_remainder_counts(weights, 97);
    CHECK(std::accumulate(counts.begin(), counts.end(), 0) == 97);
    for (int i = 0; i < 6; ++i) {
      CHECK(std::abs(counts[static_cast<std::size_t>(i)] -
                     weights[i] / weights.sum() * 97) <= 1.0);
    }
  }
  CHECK_THROWS_AS(largest_remainder_counts(Eigen::VectorXd::Zero(3), 5),
                  ParameterError);
}

TEST_CASE("a single client with the empirical distribution takes the whole set") {
  const AreaDataset train = make_blob_dataset(4, 25, 5, 50);
  Eigen::VectorXd empirical = label_histogram(train.labels, 4);
  empirical /= empirical.sum();
  GroupSpec spec = default_group_spec(4, 1);
  spec.samples_per_client = static_cast<int>(train.n());
  Rng rng(8);
  const auto parts = partition(train, {empirical}, spec, rng);
  REQUIRE(parts.size() == 1);
  CHECK(parts[0].rows.size() == static_cast<std::size_t>(train.n()));
  std::vector<int> expected(static_cast<std::size_t>(train.n()));
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(parts[0].rows == expected);
}

TEST_CASE("point-mass clients on disjoint labels get disjoint label sets") {
  const AreaDataset train = make_blob_dataset(2, 30, 5, 51);
  GroupSpec spec = default_group_spec(2, 2);
  spec.samples_per_client = 20;
  Rng rng(9);
  const auto parts =
      partition(train, {point_mass(2, 0), point_mass(2, 1)}, spec, rng);
  for (int row : parts[0].rows) CHECK(train.labels[row] == 0);
  for (int row : parts[1].rows) CHECK(train.labels[row] == 1);
}

TEST_CASE("client histograms match largest-remainder targets within one") {
  const AreaDataset train = make_blob_dataset(10, 60, 4, 52);  // 600 samples
  const GroupSpec spec = [] {
    GroupSpec s = paper_spec();
    s.groups = {{2, {0, 1, 2}}, {2, {3, 4, 5}}, {2, {6, 7, 8}}};
    return s;
  }();
  Rng rng(10);
  std::vector<Eigen::VectorXd> distributions;
  for (int i = 0; i < 6; ++i) {
    distributions.push_back(sample_distribution(
        concentration_vector(spec, spec.group_of_client(i), 10), rng));
  }
  const auto parts = partition(train, distributions, spec, rng);
  REQUIRE(parts.size() == 6);
  const int quota = 600 / 6;
  for (int i = 0; i < 6; ++i) {
    const auto& rows = parts[static_cast<std::size_t>(i)].rows;
    CHECK(rows.size() == static_cast<std::size_t>(quota));
    Eigen::VectorXi labels(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) labels[static_cast<Eigen::Index>(r)] = train.labels[rows[r]];
    const Eigen::VectorXd hist = label_histogram(labels, 10);
    const auto target =
        largest_remainder_counts(distributions[static_cast<std::size_t>(i)], quota);
    for (int l = 0; l < 10; ++l) {
      CHECK(std::abs(hist[l] - target[static_cast<std::size_t>(l)]) <= 1.0);
    }
  }
}

TEST_CASE("partitions are pairwise disjoint and reproducible") {
  const AreaDataset train = make_blob_dataset(6, 40, 4, 53);
  const GroupSpec spec = default_group_spec(6, 4);
  const auto make = [&] {
    Rng rng(77);
    std::vector<Eigen::VectorXd> distributions;
    for (int i = 0; i < 4; ++i) {
      distributions.push_back(sample_distribution(
          concentration_vector(spec, spec.group_of_client(i), 6), rng));
    }
    return partition(train, distributions, spec, rng);
  };
  const auto a = make();
  const auto b = make();
  REQUIRE(a.size() == b.size());
  std::set<int> seen;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rows == b[i].rows);
    for (int row : a[i].rows) {
      CHECK(seen.insert(row).second);  // no row assigned twice
      CHECK(row >= 0);
      CHECK(row < train.n());
    }
  }
}

TEST_CASE("pool exhaustion redistributes the deficit deterministically") {
  // 10 samples of label 0, 90 of label 1; both clients want only label 0.
  AreaDataset train;
  train.label_count = 2;
  train.label_centroids = Eigen::MatrixX2d::Zero(2, 2);
  train.features = Eigen::MatrixXd::Constant(100, 3, 0.5);
  train.labels.resize(100);
  for (int i = 0; i < 100; ++i) train.labels[i] = i < 10 ? 0 : 1;

  GroupSpec spec = default_group_spec(2, 2);
  spec.samples_per_client = 50;
  Rng rng(11);
  const auto parts =
      partition(train, {point_mass(2, 0), point_mass(2, 0)}, spec, rng);
  REQUIRE(parts.size() == 2);
  CHECK(parts[0].rows.size() == 50);
  CHECK(parts[1].rows.size() == 50);
  int label0_first = 0;
  for (int row : parts[0].rows) label0_first += train.labels[row] == 0 ? 1 : 0;
  int label0_second = 0;
  for (int row : parts[1].rows) label0_second += train.labels[row] == 0 ? 1 : 0;
  CHECK(label0_first == 10);   // drained the pool
  CHECK(label0_second == 0);   // nothing left, fell back to label 1
}

TEST_CASE("infeasible demand raises a capacity error") {
  const AreaDataset train = make_blob_dataset(2, 10, 3, 54);
  GroupSpec spec = default_group_spec(2, 2);
  spec.samples_per_client = 15;  // 30 > 20 available
  Rng rng(12);
  CHECK_THROWS_AS(
      partition(train, {point_mass(2, 0), point_mass(2, 1)}, spec, rng),
      CapacityError);
}

TEST_CASE("more clients than samples is a parameter error") {
  const AreaDataset train = make_blob_dataset(2, 2, 3, 55);  // 4 samples
  const GroupSpec spec = default_group_spec(2, 2);
  Rng rng(13);
  std::vector<Eigen::VectorXd> distributions(5, point_mass(2, 0));
  CHECK_THROWS_AS(partition(train, distributions, spec, rng), ParameterError);
}

TEST_CASE("distribution validation") {
  const AreaDataset train = make_blob_dataset(2, 10, 3, 56);
  const GroupSpec spec = default_group_spec(2, 1);
  Rng rng(14);
  Eigen::VectorXd not_normalized(2);
  not_normalized << 0.7, 0.7;
  CHECK_THROWS_AS(partition(train, {not_normalized}, spec, rng), ParameterError);
  CHECK_THROWS_AS(partition(train, {}, spec, rng), ParameterError);
  Eigen::VectorXd wrong_length = Eigen::VectorXd::Constant(3, 1.0 / 3.0);
  CHECK_THROWS_AS(partition(train, {wrong_length}, spec, rng), ParameterError);
}

TEST_CASE("partition manifests reload bit-exactly") {
  fedloc::testing::TempDir tmp("manifest");
  const AreaDataset train = make_blob_dataset(4, 30, 4, 57);
  const GroupSpec spec = default_group_spec(4, 3);
  Rng rng(15);
  std::vector<Eigen::VectorXd> distributions;
  for (int i = 0; i < 3; ++i) {
    distributions.push_back(sample_distribution(
        concentration_vector(spec, spec.group_of_client(i), 4), rng));
  }
  const auto parts = partition(train, distributions, spec, rng);
  const std::string path = tmp.str("parts.csv");
  write_partition_manifest(path, parts, train);
  const auto loaded = read_partition_manifest(path);
  REQUIRE(loaded.size() == parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    CHECK(loaded[i].client_id == parts[i].client_id);
    CHECK(loaded[i].rows == parts[i].rows);
  }
  CHECK_THROWS_AS(read_partition_manifest(tmp.str("nope.csv")), InputFileError);
}

TEST_CASE("dirichlet draws respect the concentration ordering") {
  // Dominant labels should receive visibly more mass on average.
  const GroupSpec spec = paper_spec();
  const Eigen::VectorXd beta = concentration_vector(spec, 0, 10);
  Rng rng(16);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(10);
  const int draws = 2000;
  for (int d = 0; d < draws; ++d) mean += sample_distribution(beta, rng);
  mean /= draws;
  // Expected: 80/380 for dominant, 20/380 otherwise.
  for (int l = 0; l < 3; ++l) CHECK(std::abs(mean[l] - 80.0 / 380.0) < 0.02);
  for (int l = 3; l < 10; ++l) CHECK(std::abs(mean[l] - 20.0 / 380.0) < 0.02);
}
