#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "fedloc/dataset.hpp"
#include "fedloc/random.hpp"

namespace fedloc {

// Group-structured label skew: clients within a group share the same
// dominant labels and therefore draw similar label distributions.
struct GroupSpec {
  struct Group {
    int client_count = 1;
    std::vector<int> dominant_labels;
  };

  std::vector<Group> groups;
  double beta_high = 80.0;
  double beta_low = 20.0;
  int samples_per_client = 0;  // 0: proportional, floor(n_train / M)

  int total_clients() const {
    int total = 0;
    for (const auto& g : groups) total += g.client_count;
    return total;
  }

  // Clients are laid out consecutively: group 0 owns ids [0, c0), etc.
  int group_of_client(int client_index) const;
};

// Three groups of near-equal size whose dominant labels are contiguous
// near-equal blocks covering [0, label_count). Group count shrinks when
// there are fewer clients or labels than groups.
GroupSpec default_group_spec(int label_count, int client_count,
                             double beta_high = 80.0, double beta_low = 20.0,
                             int group_count = 3);

// Dirichlet concentration vector for one group: beta_high at the
// group's dominant labels, beta_low elsewhere.
Eigen::VectorXd concentration_vector(const GroupSpec& spec, int group_index,
                                     int label_count);

// One Dirichlet(beta) draw; the client's label distribution.
Eigen::VectorXd sample_distribution(const Eigen::VectorXd& beta, Rng& rng);

// Integer apportionment of `total` by weight with largest-remainder
// rounding; ties break toward the lowest index.
std::vector<int> largest_remainder_counts(const Eigen::VectorXd& weights, int total);

struct ClientPartition {
  int client_id = 0;
  std::vector<int> rows;  // ascending indices into the train set
};

// Draws per-client samples without replacement from shared per-label
// pools to match each client's target label counts. When a pool runs
// dry the unmet remainder is redistributed proportionally over labels
// that still have samples.
std::vector<ClientPartition> partition(const AreaDataset& train,
                                       const std::vector<Eigen::VectorXd>& distributions,
                                       const GroupSpec& spec, Rng& rng);

// Manifest rows: client_id,sample_index,label. Reloading reproduces
// the partition exactly.
void write_partition_manifest(const std::string& path,
                              const std::vector<ClientPartition>& parts,
                              const AreaDataset& train);
std::vector<ClientPartition> read_partition_manifest(const std::string& path);

}  // namespace fedloc
