#include "fedloc/partition.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fedloc/csv.hpp"
#include "fedloc/errors.hpp"

namespace fedloc {

int GroupSpec::group_of_client(int client_index) const {
  int offset = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    offset += groups[g].client_count;
    if (client_index < offset) return static_cast<int>(g);
  }
  throw ParameterError("group_of_client: client index " +
                       std::to_string(client_index) + " out of range");
}

GroupSpec default_group_spec(int label_count, int client_count,
                             double beta_high, double beta_low,
                             int group_count) {
  if (label_count < 1) throw ParameterError("default_group_spec: label_count < 1");
  if (client_count < 1) throw ParameterError("default_group_spec: client_count < 1");
  if (group_count < 1) throw ParameterError("default_group_spec: group_count < 1");
  if (!(beta_high > beta_low && beta_low > 0.0)) {
    throw ParameterError("default_group_spec: need beta_high > beta_low > 0");
  }
  const int g = std::min({group_count, client_count, label_count});

  GroupSpec spec;
  spec.beta_high = beta_high;
  spec.beta_low = beta_low;
  spec.groups.resize(static_cast<std::size_t>(g));
  // Near-equal apportionment; earlier groups take the remainders.
  int client_offset = 0;
  int label_offset = 0;
  for (int i = 0; i < g; ++i) {
    const int clients = (client_count + g - 1 - i) / g;
    const int labels = (label_count + g - 1 - i) / g;
    auto& group = spec.groups[static_cast<std::size_t>(i)];
    group.client_count = clients;
    group.dominant_labels.resize(static_cast<std::size_t>(labels));
    std::iota(group.dominant_labels.begin(), group.dominant_labels.end(), label_offset);
    client_offset += clients;
    label_offset += labels;
  }
  (void)client_offset;
  return spec;
}

Eigen::VectorXd concentration_vector(const GroupSpec& spec, int group_index,
                                     int label_count) {
  if (group_index < 0 || group_index >= static_cast<int>(spec.groups.size())) {
    throw ParameterError("concentration_vector: group index out of range");
  }
  if (!(spec.beta_high > spec.beta_low && spec.beta_low > 0.0)) {
    throw ParameterError("concentration_vector: need beta_high > beta_low > 0");
  }
  Eigen::VectorXd beta = Eigen::VectorXd::Constant(label_count, spec.beta_low);
  for (int label : spec.groups[static_cast<std::size_t>(group_index)].dominant_labels) {
    if (label < 0 || label >= label_count) {
      throw ParameterError("concentration_vector: dominant label " +
                           std::to_string(label) + " outside [0, " +
                           std::to_string(label_count) + ")");
    }
    beta[label] = spec.beta_high;
  }
  return beta;
}

Eigen::VectorXd sample_distribution(const Eigen::VectorXd& beta, Rng& rng) {
  return rng.dirichlet(beta);
}

std::vector<int> largest_remainder_counts(const Eigen::VectorXd& weights, int total) {
  if (total < 0) throw ParameterError("largest_remainder_counts: negative total");
  const double sum = weights.sum();
  if (!(sum > 0.0)) {
    throw ParameterError("largest_remainder_counts: weights must have positive sum");
  }
  if ((weights.array() < 0.0).any()) {
    throw ParameterError("largest_remainder_counts: negative weight");
  }

  const Eigen::Index n = weights.size();
  std::vector<int> counts(static_cast<std::size_t>(n), 0);
  std::vector<double> fraction(static_cast<std::size_t>(n), 0.0);
  int assigned = 0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double exact = weights[j] / sum * total;
    counts[static_cast<std::size_t>(j)] = static_cast<int>(std::floor(exact));
    fraction[static_cast<std::size_t>(j)] = exact - std::floor(exact);
    assigned += counts[static_cast<std::size_t>(j)];
  }
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return fraction[static_cast<std::size_t>(a)] > fraction[static_cast<std::size_t>(b)];
  });
  for (int j = 0; assigned < total; ++j) {
    ++counts[static_cast<std::size_t>(order[static_cast<std::size_t>(j % n)])];
    ++assigned;
  }
  return counts;
}

std::vector<ClientPartition> partition(const AreaDataset& train,
                                       const std::vector<Eigen::VectorXd>& distributions,
                                       const GroupSpec& spec, Rng& rng) {
  const int m = static_cast<int>(distributions.size());
  if (m < 1) throw ParameterError("partition: need at least one distribution");
  const int label_count = train.label_count;
  for (const auto& p : distributions) {
    if (p.size() != label_count) {
      throw ParameterError("partition: distribution length mismatch");
    }
    if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > 1e-9) {
      throw ParameterError("partition: distribution is not a probability vector");
    }
  }

  const int n = static_cast<int>(train.n());
  const int quota = spec.samples_per_client > 0 ? spec.samples_per_client : n / m;
  if (quota < 1) {
    throw ParameterError("partition: per-client quota is zero (more clients than samples)");
  }
  if (static_cast<long long>(quota) * m > n) {
    throw CapacityError("partition: demand " + std::to_string(quota) + " x " +
                        std::to_string(m) + " clients exceeds " +
                        std::to_string(n) + " train samples");
  }

  // Shared per-label pools, shuffled once; clients consume prefixes.
  std::vector<std::vector<int>> pool(static_cast<std::size_t>(label_count));
  for (int i = 0; i < n; ++i) {
    pool[static_cast<std::size_t>(train.labels[i])].push_back(i);
  }
  for (auto& p : pool) rng.shuffle(p);
  std::vector<std::size_t> consumed(static_cast<std::size_t>(label_count), 0);
  const auto remaining = [&](int label) {
    return static_cast<int>(pool[static_cast<std::size_t>(label)].size() -
                            consumed[static_cast<std::size_t>(label)]);
  };

  std::vector<ClientPartition> parts;
  parts.reserve(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    std::vector<int> take = largest_remainder_counts(distributions[static_cast<std::size_t>(i)], quota);
    for (int l = 0; l < label_count; ++l) {
      take[static_cast<std::size_t>(l)] = std::min(take[static_cast<std::size_t>(l)], remaining(l));
    }
    int placed = std::accumulate(take.begin(), take.end(), 0);

    // Pool exhaustion: push the unmet remainder onto labels that still
    // have samples, proportionally to the client's distribution there
    // (or to pool sizes when the client puts no mass on them).
    while (placed < quota) {
      Eigen::VectorXd weights = Eigen::VectorXd::Zero(label_count);
      Eigen::VectorXd fallback = Eigen::VectorXd::Zero(label_count);
      bool any_open = false;
      for (int l = 0; l < label_count; ++l) {
        const int slack = remaining(l) - take[static_cast<std::size_t>(l)];
        if (slack > 0) {
          any_open = true;
          weights[l] = distributions[static_cast<std::size_t>(i)][l];
          fallback[l] = static_cast<double>(slack);
        }
      }
      if (!any_open) {
        throw CapacityError("partition: pools exhausted before quotas met");
      }
      if (!(weights.sum() > 0.0)) weights = fallback;
      const std::vector<int> extra = largest_remainder_counts(weights, quota - placed);
      for (int l = 0; l < label_count; ++l) {
        const int slack = remaining(l) - take[static_cast<std::size_t>(l)];
        const int add = std::min(extra[static_cast<std::size_t>(l)], slack);
        take[static_cast<std::size_t>(l)] += add;
        placed += add;
      }
    }

    ClientPartition part;
    part.client_id = i;
    part.rows.reserve(static_cast<std::size_t>(quota));
    for (int l = 0; l < label_count; ++l) {
      auto& used = consumed[static_cast<std::size_t>(l)];
      for (int t = 0; t < take[static_cast<std::size_t>(l)]; ++t) {
        part.rows.push_back(pool[static_cast<std::size_t>(l)][used++]);
      }
    }
    std::sort(part.rows.begin(), part.rows.end());
    parts.push_back(std::move(part));
  }
  return parts;
}

void write_partition_manifest(const std::string& path,
                              const std::vector<ClientPartition>& parts,
                              const AreaDataset& train) {
  CsvWriter csv(path);
  csv.row({"client_id", "sample_index", "label"});
  for (const auto& part : parts) {
    for (int row : part.rows) {
      csv.row({std::to_string(part.client_id), std::to_string(row),
               std::to_string(train.labels[row])});
    }
  }
}

std::vector<ClientPartition> read_partition_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputFileError("cannot open partition manifest: " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("partition manifest has no header: " + path);
  }
  std::vector<ClientPartition> parts;
  int file_line = 1;
  while (std::getline(in, line)) {
    ++file_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int client = 0;
    int row = 0;
    const char* p = line.data();
    const char* end = p + line.size();
    auto r1 = std::from_chars(p, end, client);
    if (r1.ec != std::errc{} || r1.ptr == end || *r1.ptr != ',') {
      throw RowParseError("manifest line " + std::to_string(file_line));
    }
    auto r2 = std::from_chars(r1.ptr + 1, end, row);
    if (r2.ec != std::errc{}) {
      throw RowParseError("manifest line " + std::to_string(file_line));
    }
    if (parts.empty() || parts.back().client_id != client) {
      parts.push_back(ClientPartition{client, {}});
    }
    parts.back().rows.push_back(row);
  }
  return parts;
}

}  // namespace fedloc
