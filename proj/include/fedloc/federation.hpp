#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "fedloc/errors.hpp"
#include "fedloc/mlp.hpp"
#include "fedloc/parallel.hpp"
#include "fedloc/random.hpp"

namespace fedloc {

template <class Scalar>
struct ClientStateT {
  int id = 0;
  MlpParamsT<Scalar> params;
  LabeledBatchT<Scalar> data;

  Eigen::Index sample_count() const { return data.n(); }
};

using ClientState = ClientStateT<double>;

enum class AttentionKernel { kGaussianSaturating };

// Derivative h'(v) of the attention-inducing kernel h. The saturating
// Gaussian h(v) = 1 - exp(-v / sigma) gives h'(v) = exp(-v / sigma) / sigma.
template <class Scalar>
Scalar attention_weight(AttentionKernel kernel, Scalar squared_distance,
                        Scalar sigma) {
  switch (kernel) {
    case AttentionKernel::kGaussianSaturating:
      return std::exp(-squared_distance / sigma) / sigma;
  }
  throw ParameterError("unknown attention kernel");
}

struct FederationConfig {
  int rounds = 20;
  TrainingConfig local;  // local.rng_seed is the base of the per-(client, round) seed schedule
  double sigma = 20.0;
  double lambda_tilde = 1.0;
  double alpha = 1.0;  // prox-center gradient step size
  AttentionKernel kernel = AttentionKernel::kGaussianSaturating;
};

// One client-round diagnostic row; xi_row also doubles as the FedAvg
// aggregation weights.
struct RoundRecord {
  int round = 0;
  int client_id = 0;
  double local_loss = 0.0;
  double prox_distance = 0.0;
  std::vector<double> xi_row;
};

using RoundLog = std::vector<RoundRecord>;

namespace detail {

// Seed tag for the pooled (global-model) trainer, distinct from any
// client id.
inline constexpr std::uint64_t kPooledTag = ~std::uint64_t{0};

inline std::uint64_t round_seed(std::uint64_t base, std::uint64_t actor,
                                int round) {
  return derive_seed(base, {actor, static_cast<std::uint64_t>(round)});
}

template <class Scalar>
void check_clients(const std::vector<ClientStateT<Scalar>>& clients) {
  if (clients.empty()) throw ContractViolation("federation: no clients");
  for (const auto& c : clients) {
    if (c.data.n() < 1) {
      throw ContractViolation("federation: client " + std::to_string(c.id) +
                              " has no data");
    }
    if (!same_architecture(c.params, clients.front().params)) {
      throw ContractViolation("federation: client architectures differ");
    }
  }
}

}  // namespace detail

// Sample-count weighted mean of flattened parameters, reduced in
// ascending client-id order so the result is independent of the input
// permutation, bit for bit.
template <class Scalar>
MlpParamsT<Scalar> fedavg_aggregate(const std::vector<ClientStateT<Scalar>>& clients) {
  detail::check_clients(clients);
  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clients[a].id < clients[b].id;
  });
  double total = 0;
  for (const auto& c : clients) total += static_cast<double>(c.sample_count());
  VectorX<Scalar> acc = VectorX<Scalar>::Zero(clients.front().params.size());
  for (std::size_t idx : order) {
    const auto& c = clients[idx];
    const Scalar w = static_cast<Scalar>(static_cast<double>(c.sample_count()) / total);
    acc += w * flatten(c.params);
  }
  return unflatten(acc, clients.front().params.architecture());
}

template <class Scalar>
struct SimilarityT {
  MatrixX<Scalar> xi;   // M x M, rows sum to 1, entries >= 0
  Scalar alpha_used{};  // step size after the diagonal clamp
  bool clamped = false;
};

using Similarity = SimilarityT<double>;

// Similarity coefficients xi of the attentive message-passing update:
// xi[i][j] = alpha * h'(||w_i - w_j||^2) for i != j, and the diagonal
// absorbs the remainder so each row is a convex combination. If any
// diagonal would go negative, alpha is clamped to the largest value
// keeping all diagonals non-negative and the result is flagged.
template <class Scalar>
SimilarityT<Scalar> amp_similarity(const std::vector<MlpParamsT<Scalar>>& params,
                                   Scalar sigma, Scalar alpha,
                                   AttentionKernel kernel =
                                       AttentionKernel::kGaussianSaturating) {
  const Eigen::Index m = static_cast<Eigen::Index>(params.size());
  if (m < 1) throw ContractViolation("amp_similarity: no models");
  if (!(sigma > Scalar(0))) throw ParameterError("amp_similarity: sigma must be > 0");
  if (!(alpha > Scalar(0))) throw ParameterError("amp_similarity: alpha must be > 0");

  // h'(d^2) per unordered pair; mirroring keeps xi exactly symmetric.
  MatrixX<Scalar> weight = MatrixX<Scalar>::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = i + 1; j < m; ++j) {
      const Scalar d2 = squared_distance(params[static_cast<std::size_t>(i)],
                                         params[static_cast<std::size_t>(j)]);
      if (!std::isfinite(static_cast<double>(d2))) {
        throw InvalidState("amp_similarity: non-finite model distance");
      }
      const Scalar w = attention_weight(kernel, d2, sigma);
      weight(i, j) = w;
      weight(j, i) = w;
    }
  }

  Scalar max_row_sum = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    max_row_sum = std::max(max_row_sum, weight.row(i).sum());
  }
  SimilarityT<Scalar> out;
  out.alpha_used = alpha;
  if (max_row_sum > Scalar(0) && alpha * max_row_sum > Scalar(1)) {
    out.alpha_used = (Scalar(1) - Scalar(1e-12)) / max_row_sum;
    out.clamped = true;
  }
  out.xi = out.alpha_used * weight;
  for (Eigen::Index i = 0; i < m; ++i) {
    out.xi(i, i) = Scalar(1) - out.xi.row(i).sum();
  }
  return out;
}

// Prox centers u_i = sum_j xi[i][j] w_j on the flattened vectors.
template <class Scalar>
std::vector<MlpParamsT<Scalar>> amp_prox_centers(
    const std::vector<MlpParamsT<Scalar>>& params, const MatrixX<Scalar>& xi) {
  const Eigen::Index m = static_cast<Eigen::Index>(params.size());
  if (m < 1) throw ContractViolation("amp_prox_centers: no models");
  if (xi.rows() != m || xi.cols() != m) {
    throw ContractViolation("amp_prox_centers: xi shape mismatch");
  }
  MatrixX<Scalar> stacked(m, params.front().size());
  for (Eigen::Index j = 0; j < m; ++j) {
    if (!same_architecture(params[static_cast<std::size_t>(j)], params.front())) {
      throw ContractViolation("amp_prox_centers: architecture mismatch");
    }
    stacked.row(j) = flatten(params[static_cast<std::size_t>(j)]).transpose();
  }
  const MatrixX<Scalar> centers = xi * stacked;
  const auto widths = params.front().architecture();
  std::vector<MlpParamsT<Scalar>> out;
  out.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    out.push_back(unflatten(VectorX<Scalar>(centers.row(i).transpose()), widths));
  }
  return out;
}

// Attentive message passing: each round the server turns the current
// models into per-client prox centers, then every client minimizes its
// proximal local objective. Returns the M personalized models.
template <class Scalar>
std::vector<MlpParamsT<Scalar>> run_fedamp(
    const std::vector<ClientStateT<Scalar>>& clients,
    const FederationConfig& config, RoundLog* log = nullptr, int workers = 1) {
  detail::check_clients(clients);
  if (config.rounds < 1) throw ParameterError("run_fedamp: rounds must be >= 1");
  const int m = static_cast<int>(clients.size());

  std::vector<MlpParamsT<Scalar>> models;
  models.reserve(clients.size());
  for (const auto& c : clients) models.push_back(c.params);

  for (int round = 1; round <= config.rounds; ++round) {
    const auto sim = amp_similarity(models, static_cast<Scalar>(config.sigma),
                                    static_cast<Scalar>(config.alpha),
                                    config.kernel);
    const auto centers = amp_prox_centers(models, sim.xi);
    parallel_for(m, workers, [&](int i) {
      TrainingConfig local = config.local;
      local.rng_seed = detail::round_seed(
          config.local.rng_seed, static_cast<std::uint64_t>(clients[i].id), round);
      try {
        models[i] = train_local(models[i], clients[i].data, local, &centers[i],
                                static_cast<Scalar>(config.lambda_tilde));
      } catch (const DivergenceError& e) {
        throw DivergenceError("fedamp: client " + std::to_string(clients[i].id) +
                              " diverged at round " + std::to_string(round) +
                              " (" + e.what() + ")");
      }
    });
    if (log != nullptr) {
      for (int i = 0; i < m; ++i) {
        RoundRecord rec;
        rec.round = round;
        rec.client_id = clients[i].id;
        rec.local_loss =
            static_cast<double>(objective_value(models[i], clients[i].data));
        rec.prox_distance = std::sqrt(
            static_cast<double>(squared_distance(models[i], centers[i])));
        rec.xi_row.resize(static_cast<std::size_t>(m));
        for (int j = 0; j < m; ++j) {
          rec.xi_row[static_cast<std::size_t>(j)] = static_cast<double>(sim.xi(i, j));
        }
        log->push_back(std::move(rec));
      }
    }
  }
  return models;
}

// Federated averaging: every round each client trains from the current
// global model and the server aggregates the results. Clients are
// expected to share their initialization; round one trains from the
// first client's parameters.
template <class Scalar>
MlpParamsT<Scalar> run_fedavg(const std::vector<ClientStateT<Scalar>>& clients,
                              const FederationConfig& config,
                              RoundLog* log = nullptr, int workers = 1) {
  detail::check_clients(clients);
  if (config.rounds < 1) throw ParameterError("run_fedavg: rounds must be >= 1");
  const int m = static_cast<int>(clients.size());

  double total = 0;
  for (const auto& c : clients) total += static_cast<double>(c.sample_count());
  std::vector<double> share(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    share[static_cast<std::size_t>(i)] =
        static_cast<double>(clients[static_cast<std::size_t>(i)].sample_count()) / total;
  }

  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clients[a].id < clients[b].id;
  });

  MlpParamsT<Scalar> global = clients.front().params;
  for (int round = 1; round <= config.rounds; ++round) {
    std::vector<MlpParamsT<Scalar>> locals(clients.size());
    parallel_for(m, workers, [&](int i) {
      TrainingConfig local = config.local;
      local.rng_seed = detail::round_seed(
          config.local.rng_seed, static_cast<std::uint64_t>(clients[i].id), round);
      try {
        locals[i] = train_local(global, clients[i].data, local);
      } catch (const DivergenceError& e) {
        throw DivergenceError("fedavg: client " + std::to_string(clients[i].id) +
                              " diverged at round " + std::to_string(round) +
                              " (" + e.what() + ")");
      }
    });
    VectorX<Scalar> acc = VectorX<Scalar>::Zero(global.size());
    for (std::size_t idx : order) {
      acc += static_cast<Scalar>(share[idx]) * flatten(locals[idx]);
    }
    MlpParamsT<Scalar> next = unflatten(acc, global.architecture());

    if (log != nullptr) {
      for (int i = 0; i < m; ++i) {
        RoundRecord rec;
        rec.round = round;
        rec.client_id = clients[i].id;
        rec.local_loss = static_cast<double>(
            objective_value(locals[i], clients[i].data));
        rec.prox_distance =
            std::sqrt(static_cast<double>(squared_distance(locals[i], next)));
        rec.xi_row.assign(share.begin(), share.end());
        log->push_back(std::move(rec));
      }
    }
    global = std::move(next);
  }
  return global;
}

// Pooled-data baseline trained with the same round structure and seed
// schedule budget as the federated loops.
template <class Scalar>
MlpParamsT<Scalar> train_gm(const MlpParamsT<Scalar>& initial,
                            const LabeledBatchT<Scalar>& pooled,
                            const FederationConfig& config) {
  if (config.rounds < 1) throw ParameterError("train_gm: rounds must be >= 1");
  MlpParamsT<Scalar> p = initial;
  for (int round = 1; round <= config.rounds; ++round) {
    TrainingConfig local = config.local;
    local.rng_seed = detail::round_seed(config.local.rng_seed, detail::kPooledTag, round);
    p = train_local(p, pooled, local);
  }
  return p;
}

// Independent local baseline: same per-(client, round) seed schedule as
// run_fedamp, no communication. A lambda_tilde = 0 FedAMP run reproduces
// this bit for bit.
template <class Scalar>
std::vector<MlpParamsT<Scalar>> train_lm(
    const std::vector<ClientStateT<Scalar>>& clients,
    const FederationConfig& config, int workers = 1) {
  detail::check_clients(clients);
  if (config.rounds < 1) throw ParameterError("train_lm: rounds must be >= 1");
  std::vector<MlpParamsT<Scalar>> models(clients.size());
  parallel_for(static_cast<int>(clients.size()), workers, [&](int i) {
    MlpParamsT<Scalar> p = clients[i].params;
    for (int round = 1; round <= config.rounds; ++round) {
      TrainingConfig local = config.local;
      local.rng_seed = detail::round_seed(
          config.local.rng_seed, static_cast<std::uint64_t>(clients[i].id), round);
      p = train_local(p, clients[i].data, local);
    }
    models[i] = std::move(p);
  });
  return models;
}

}  // namespace fedloc
