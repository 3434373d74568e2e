#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fedloc/errors.hpp"
#include "fedloc/random.hpp"

namespace fedloc {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using RowMajorMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// One dense layer, y = W x + b. Weights are stored row-major so the
// flattened parameter layout (layer-major, weights before biases,
// row-major) is the storage order.
template <class Scalar>
struct DenseLayer {
  RowMajorMatrix<Scalar> weights;  // out x in
  VectorX<Scalar> bias;            // out
};

// Parameters of a dense multilayer perceptron: ReLU hidden layers and a
// softmax output over the label set.
template <class Scalar>
struct MlpParamsT {
  std::vector<DenseLayer<Scalar>> layers;

  Eigen::Index input_dim() const { return layers.front().weights.cols(); }
  Eigen::Index output_dim() const { return layers.back().weights.rows(); }

  // Layer widths [input, hidden..., output].
  std::vector<Eigen::Index> architecture() const {
    std::vector<Eigen::Index> widths;
    widths.reserve(layers.size() + 1);
    widths.push_back(input_dim());
    for (const auto& layer : layers) widths.push_back(layer.weights.rows());
    return widths;
  }

  // Total parameter count d.
  Eigen::Index size() const {
    Eigen::Index d = 0;
    for (const auto& layer : layers) d += layer.weights.size() + layer.bias.size();
    return d;
  }
};

using MlpParams = MlpParamsT<double>;

template <class Scalar>
struct LabeledBatchT {
  MatrixX<Scalar> features;  // n x input_dim
  Eigen::VectorXi labels;    // n, values in [0, L)

  Eigen::Index n() const { return features.rows(); }
};

using LabeledBatch = LabeledBatchT<double>;

enum class TrainingMode { kStochastic, kFullBatch };

struct TrainingConfig {
  double learning_rate = 0.05;
  int epochs = 5;
  int batch_size = 32;  // <= 0 means full batch
  TrainingMode mode = TrainingMode::kStochastic;
  std::uint64_t rng_seed = 0;
};

template <class Scalar>
bool same_architecture(const MlpParamsT<Scalar>& a, const MlpParamsT<Scalar>& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t t = 0; t < a.layers.size(); ++t) {
    if (a.layers[t].weights.rows() != b.layers[t].weights.rows() ||
        a.layers[t].weights.cols() != b.layers[t].weights.cols()) {
      return false;
    }
  }
  return true;
}

inline Eigen::Index parameter_count(const std::vector<Eigen::Index>& widths) {
  Eigen::Index d = 0;
  for (std::size_t t = 0; t + 1 < widths.size(); ++t) {
    d += widths[t + 1] * widths[t] + widths[t + 1];
  }
  return d;
}

// Glorot-uniform weights (+-sqrt(6 / (fan_in + fan_out))), zero biases.
// Draw order is fixed: layer by layer, weights row-major, so the same
// seed always yields the same network.
template <class Scalar>
MlpParamsT<Scalar> make_mlp(const std::vector<Eigen::Index>& widths,
                            std::uint64_t seed) {
  if (widths.size() < 2) {
    throw ParameterError("make_mlp: need at least input and output widths");
  }
  for (Eigen::Index w : widths) {
    if (w < 1) throw ParameterError("make_mlp: layer widths must be >= 1");
  }
  Rng rng(seed);
  MlpParamsT<Scalar> params;
  params.layers.resize(widths.size() - 1);
  for (std::size_t t = 0; t + 1 < widths.size(); ++t) {
    const Eigen::Index in = widths[t];
    const Eigen::Index out = widths[t + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    auto& layer = params.layers[t];
    layer.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) {
        layer.weights(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
      }
    }
    layer.bias = VectorX<Scalar>::Zero(out);
  }
  return params;
}

// Flattened view of the parameters: layer-major, weights before biases,
// weights row-major. Round-trips exactly through unflatten.
template <class Scalar>
VectorX<Scalar> flatten(const MlpParamsT<Scalar>& params) {
  VectorX<Scalar> vec(params.size());
  Eigen::Index offset = 0;
  for (const auto& layer : params.layers) {
    vec.segment(offset, layer.weights.size()) =
        Eigen::Map<const VectorX<Scalar>>(layer.weights.data(),
                                          layer.weights.size());
    offset += layer.weights.size();
    vec.segment(offset, layer.bias.size()) = layer.bias;
    offset += layer.bias.size();
  }
  return vec;
}

template <class Scalar>
MlpParamsT<Scalar> unflatten(const VectorX<Scalar>& vec,
                             const std::vector<Eigen::Index>& widths) {
  if (widths.size() < 2) {
    throw ParameterError("unflatten: need at least input and output widths");
  }
  if (vec.size() != parameter_count(widths)) {
    throw ContractViolation("unflatten: vector length " +
                            std::to_string(vec.size()) +
                            " does not match architecture size " +
                            std::to_string(parameter_count(widths)));
  }
  MlpParamsT<Scalar> params;
  params.layers.resize(widths.size() - 1);
  Eigen::Index offset = 0;
  for (std::size_t t = 0; t + 1 < widths.size(); ++t) {
    const Eigen::Index in = widths[t];
    const Eigen::Index out = widths[t + 1];
    auto& layer = params.layers[t];
    layer.weights.resize(out, in);
    Eigen::Map<VectorX<Scalar>>(layer.weights.data(), layer.weights.size()) =
        vec.segment(offset, out * in);
    offset += out * in;
    layer.bias = vec.segment(offset, out);
    offset += out;
  }
  return params;
}

// Squared Euclidean distance over the flattened parameter vectors,
// accumulated layerwise.
template <class Scalar>
Scalar squared_distance(const MlpParamsT<Scalar>& a, const MlpParamsT<Scalar>& b) {
  if (!same_architecture(a, b)) {
    throw ContractViolation("squared_distance: architecture mismatch");
  }
  Scalar d2 = 0;
  for (std::size_t t = 0; t < a.layers.size(); ++t) {
    d2 += (a.layers[t].weights - b.layers[t].weights).squaredNorm();
    d2 += (a.layers[t].bias - b.layers[t].bias).squaredNorm();
  }
  return d2;
}

namespace detail {

template <class Scalar>
VectorX<Scalar> softmax(const VectorX<Scalar>& logits) {
  const Scalar m = logits.maxCoeff();
  VectorX<Scalar> e = (logits.array() - m).exp();
  return e / e.sum();
}

// Row-wise softmax in place.
template <class Scalar>
void softmax_rows(MatrixX<Scalar>& logits) {
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - m).exp();
    logits.row(r) /= logits.row(r).sum();
  }
}

}  // namespace detail

// Categorical posterior of a single feature vector: ReLU hidden layers,
// softmax output.
template <class Scalar>
VectorX<Scalar> forward(const MlpParamsT<Scalar>& params,
                        const VectorX<Scalar>& features) {
  if (features.size() != params.input_dim()) {
    throw ContractViolation("forward: feature length " +
                            std::to_string(features.size()) +
                            " does not match input dim " +
                            std::to_string(params.input_dim()));
  }
  if (!features.allFinite()) {
    throw InvalidInput("forward: non-finite feature values");
  }
  VectorX<Scalar> a = features;
  for (std::size_t t = 0; t < params.layers.size(); ++t) {
    VectorX<Scalar> z = params.layers[t].weights * a + params.layers[t].bias;
    if (t + 1 < params.layers.size()) {
      a = z.cwiseMax(Scalar(0));
    } else {
      return detail::softmax(z);
    }
  }
  return a;  // unreachable; layers is never empty
}

// Posterior rows for a whole feature matrix.
template <class Scalar>
MatrixX<Scalar> forward_batch(const MlpParamsT<Scalar>& params,
                              const MatrixX<Scalar>& features) {
  if (features.cols() != params.input_dim()) {
    throw ContractViolation("forward_batch: feature dim mismatch");
  }
  if (!features.allFinite()) {
    throw InvalidInput("forward_batch: non-finite feature values");
  }
  MatrixX<Scalar> a = features;
  for (std::size_t t = 0; t < params.layers.size(); ++t) {
    MatrixX<Scalar> z = a * params.layers[t].weights.transpose();
    z.rowwise() += params.layers[t].bias.transpose();
    if (t + 1 < params.layers.size()) {
      a = z.cwiseMax(Scalar(0));
    } else {
      detail::softmax_rows(z);
      return z;
    }
  }
  return a;
}

template <class Scalar>
struct LossGrad {
  Scalar loss;
  MlpParamsT<Scalar> gradient;
};

namespace detail {

template <class Scalar>
void check_batch(const MlpParamsT<Scalar>& params,
                 const LabeledBatchT<Scalar>& batch) {
  if (batch.n() < 1) {
    throw ContractViolation("batch must be non-empty");
  }
  if (batch.features.cols() != params.input_dim()) {
    throw ContractViolation("batch feature dim does not match network input");
  }
  if (batch.labels.size() != batch.n()) {
    throw ContractViolation("batch labels/features row count mismatch");
  }
  const int label_count = static_cast<int>(params.output_dim());
  for (Eigen::Index i = 0; i < batch.labels.size(); ++i) {
    if (batch.labels[i] < 0 || batch.labels[i] >= label_count) {
      throw ContractViolation("batch label out of range at row " +
                              std::to_string(i));
    }
  }
}

}  // namespace detail

// Mean cross-entropy over the batch plus, when prox_weight > 0, the
// proximal term prox_weight * ||params - prox_center||^2 on the
// flattened vector. The gradient is the exact analytic gradient of that
// scalar. Cross-entropy is computed through log-sum-exp with max
// subtraction.
template <class Scalar>
LossGrad<Scalar> loss_and_gradient(const MlpParamsT<Scalar>& params,
                                   const LabeledBatchT<Scalar>& batch,
                                   const MlpParamsT<Scalar>* prox_center = nullptr,
                                   Scalar prox_weight = Scalar(0)) {
  detail::check_batch(params, batch);
  if (prox_weight < Scalar(0)) {
    throw ParameterError("loss_and_gradient: prox_weight must be >= 0");
  }
  if (prox_center != nullptr && !same_architecture(params, *prox_center)) {
    throw ContractViolation(
        "loss_and_gradient: prox_center architecture mismatch");
  }

  const Eigen::Index n = batch.n();
  const std::size_t depth = params.layers.size();

  // Forward pass, keeping activations and pre-activations for backprop.
  std::vector<MatrixX<Scalar>> activations(depth + 1);
  std::vector<MatrixX<Scalar>> pre_activations(depth);
  activations[0] = batch.features;
  for (std::size_t t = 0; t < depth; ++t) {
    MatrixX<Scalar> z = activations[t] * params.layers[t].weights.transpose();
    z.rowwise() += params.layers[t].bias.transpose();
    pre_activations[t] = z;
    if (t + 1 < depth) activations[t + 1] = z.cwiseMax(Scalar(0));
  }

  // loss_i = logsumexp(z_i) - z_i[y_i]; probabilities reused for the
  // output-layer gradient.
  const MatrixX<Scalar>& logits = pre_activations[depth - 1];
  MatrixX<Scalar> probs(logits.rows(), logits.cols());
  Scalar loss = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    Eigen::Array<Scalar, 1, Eigen::Dynamic> e = (logits.row(r).array() - m).exp();
    const Scalar sum = e.sum();
    probs.row(r) = e / sum;
    loss += m + std::log(sum) - logits(r, batch.labels[r]);
  }
  loss /= static_cast<Scalar>(n);

  // Backward pass.
  MlpParamsT<Scalar> grad;
  grad.layers.resize(depth);
  MatrixX<Scalar> delta = probs;
  for (Eigen::Index r = 0; r < n; ++r) delta(r, batch.labels[r]) -= Scalar(1);
  delta /= static_cast<Scalar>(n);
  for (std::size_t t = depth; t-- > 0;) {
    grad.layers[t].weights.noalias() = delta.transpose() * activations[t];
    grad.layers[t].bias = delta.colwise().sum().transpose();
    if (t > 0) {
      MatrixX<Scalar> upstream = delta * params.layers[t].weights;
      delta = upstream.cwiseProduct(
          (pre_activations[t - 1].array() > Scalar(0)).template cast<Scalar>().matrix());
    }
  }

  // Proximal term; skipped entirely at weight zero so a zero-weight run
  // is bit-identical to the plain objective.
  if (prox_center != nullptr && prox_weight > Scalar(0)) {
    loss += prox_weight * squared_distance(params, *prox_center);
    for (std::size_t t = 0; t < depth; ++t) {
      grad.layers[t].weights +=
          Scalar(2) * prox_weight *
          (params.layers[t].weights - prox_center->layers[t].weights);
      grad.layers[t].bias += Scalar(2) * prox_weight *
                             (params.layers[t].bias - prox_center->layers[t].bias);
    }
  }

  return {loss, std::move(grad)};
}

// Objective value without the gradient (round logging, descent checks).
template <class Scalar>
Scalar objective_value(const MlpParamsT<Scalar>& params,
                       const LabeledBatchT<Scalar>& batch,
                       const MlpParamsT<Scalar>* prox_center = nullptr,
                       Scalar prox_weight = Scalar(0)) {
  detail::check_batch(params, batch);
  if (prox_center != nullptr && !same_architecture(params, *prox_center)) {
    throw ContractViolation("objective_value: prox_center architecture mismatch");
  }
  MatrixX<Scalar> a = batch.features;
  for (std::size_t t = 0; t + 1 < params.layers.size(); ++t) {
    MatrixX<Scalar> z = a * params.layers[t].weights.transpose();
    z.rowwise() += params.layers[t].bias.transpose();
    a = z.cwiseMax(Scalar(0));
  }
  MatrixX<Scalar> logits = a * params.layers.back().weights.transpose();
  logits.rowwise() += params.layers.back().bias.transpose();
  Scalar loss = 0;
  for (Eigen::Index r = 0; r < batch.n(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    loss += m + std::log((logits.row(r).array() - m).exp().sum()) -
            logits(r, batch.labels[r]);
  }
  loss /= static_cast<Scalar>(batch.n());
  if (prox_center != nullptr && prox_weight > Scalar(0)) {
    loss += prox_weight * squared_distance(params, *prox_center);
  }
  return loss;
}

// Mini-batch gradient descent on the (possibly proximal) local
// objective. Stochastic mode reshuffles each epoch from the seeded
// stream; full-batch mode consumes no randomness, so runs are exactly
// reproducible.
template <class Scalar>
MlpParamsT<Scalar> train_local(const MlpParamsT<Scalar>& params,
                               const LabeledBatchT<Scalar>& data,
                               const TrainingConfig& config,
                               const MlpParamsT<Scalar>* prox_center = nullptr,
                               Scalar prox_weight = Scalar(0)) {
  detail::check_batch(params, data);
  if (config.epochs < 1) throw ParameterError("train_local: epochs must be >= 1");
  if (config.learning_rate < 0.0) {
    throw ParameterError("train_local: learning rate must be >= 0");
  }

  MlpParamsT<Scalar> p = params;
  const Eigen::Index n = data.n();
  const bool full_batch = config.mode == TrainingMode::kFullBatch ||
                          config.batch_size <= 0 ||
                          static_cast<Eigen::Index>(config.batch_size) >= n;
  Rng rng(config.rng_seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = static_cast<int>(i);

  const Scalar lr = static_cast<Scalar>(config.learning_rate);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto step = [&](const LabeledBatchT<Scalar>& sub) {
      LossGrad<Scalar> lg = loss_and_gradient(p, sub, prox_center, prox_weight);
      if (!std::isfinite(static_cast<double>(lg.loss))) {
        throw DivergenceError("train_local: non-finite loss at epoch " +
                              std::to_string(epoch));
      }
      for (std::size_t t = 0; t < p.layers.size(); ++t) {
        p.layers[t].weights -= lr * lg.gradient.layers[t].weights;
        p.layers[t].bias -= lr * lg.gradient.layers[t].bias;
      }
    };

    if (full_batch && config.mode == TrainingMode::kFullBatch) {
      step(data);
      continue;
    }
    rng.shuffle(order);
    if (full_batch) {
      LabeledBatchT<Scalar> sub{data.features(order, Eigen::all),
                                data.labels(order)};
      step(sub);
      continue;
    }
    const Eigen::Index bs = config.batch_size;
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index len = std::min(bs, n - start);
      std::vector<int> rows(order.begin() + start, order.begin() + start + len);
      LabeledBatchT<Scalar> sub{data.features(rows, Eigen::all),
                                data.labels(rows)};
      step(sub);
    }
  }
  return p;
}

}  // namespace fedloc
