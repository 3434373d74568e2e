#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <vector>

#include "fedloc/errors.hpp"
#include "fedloc/mlp.hpp"

namespace fedloc {

// Probabilities below this are floored before entering log space, so a
// hard zero from one model dominates only softly.
inline constexpr double kProbabilityFloor = 1e-12;

// Strictly positive class prior; a zero-probability label is rejected
// at construction because fusion divides by prior^(M-1).
template <class Scalar>
class ClassPriorT {
 public:
  explicit ClassPriorT(VectorX<Scalar> probs) : probs_(std::move(probs)) {
    if (probs_.size() < 1) throw ParameterError("ClassPrior: empty");
    if ((probs_.array() <= Scalar(0)).any()) {
      throw ParameterError("ClassPrior: all probabilities must be > 0");
    }
    const Scalar sum = probs_.sum();
    if (std::abs(static_cast<double>(sum) - 1.0) > 1e-9) {
      throw ParameterError("ClassPrior: probabilities must sum to 1");
    }
    probs_ /= sum;
  }

  static ClassPriorT uniform(Eigen::Index label_count) {
    return ClassPriorT(VectorX<Scalar>::Constant(
        label_count, Scalar(1) / static_cast<Scalar>(label_count)));
  }

  const VectorX<Scalar>& probs() const { return probs_; }
  Eigen::Index size() const { return probs_.size(); }

 private:
  VectorX<Scalar> probs_;
};

using ClassPrior = ClassPriorT<double>;

// Joint posterior of conditionally independent classifiers:
//
//   fused[j] propto (prod_i p[j|i]) / prior[j]^(M-1)
//
// accumulated in log space with per-term flooring. Throws
// DegenerateFusion when every label was floored by at least one model,
// i.e. the product carries no information.
template <class Scalar>
VectorX<Scalar> fuse(const std::vector<VectorX<Scalar>>& posteriors,
                     const ClassPriorT<Scalar>& prior) {
  if (posteriors.empty()) throw ContractViolation("fuse: no posteriors");
  const Eigen::Index label_count = prior.size();
  for (const auto& p : posteriors) {
    if (p.size() != label_count) {
      throw ContractViolation("fuse: posterior length mismatch");
    }
  }
  if (posteriors.size() == 1) return posteriors[0];

  const Scalar floor = static_cast<Scalar>(kProbabilityFloor);
  VectorX<Scalar> log_score =
      -static_cast<Scalar>(posteriors.size() - 1) *
      prior.probs().array().log().matrix();
  std::vector<bool> floored(static_cast<std::size_t>(label_count), false);
  for (const auto& p : posteriors) {
    for (Eigen::Index j = 0; j < label_count; ++j) {
      if (p[j] < floor) floored[static_cast<std::size_t>(j)] = true;
      log_score[j] += std::log(std::max(p[j], floor));
    }
  }
  bool all_floored = true;
  for (bool f : floored) all_floored = all_floored && f;
  if (all_floored) {
    throw DegenerateFusion("fuse: every label zeroed by some model");
  }

  const Scalar m = log_score.maxCoeff();
  VectorX<Scalar> w = (log_score.array() - m).exp();
  return w / w.sum();
}

// MAP label: argmax with ties broken toward the lowest label index.
template <class Scalar>
int classify_map(const VectorX<Scalar>& posterior) {
  if (posterior.size() < 1) throw ContractViolation("classify_map: empty");
  int best = 0;
  for (Eigen::Index j = 1; j < posterior.size(); ++j) {
    if (posterior[j] > posterior[best]) best = static_cast<int>(j);
  }
  return best;
}

// fuse, falling back to the arithmetic mean of the posteriors on
// degenerate input. *degenerate, when given, records which path ran.
template <class Scalar>
VectorX<Scalar> fuse_with_fallback(const std::vector<VectorX<Scalar>>& posteriors,
                                   const ClassPriorT<Scalar>& prior,
                                   bool* degenerate = nullptr) {
  try {
    VectorX<Scalar> fused = fuse(posteriors, prior);
    if (degenerate != nullptr) *degenerate = false;
    return fused;
  } catch (const DegenerateFusion&) {
    VectorX<Scalar> mean = VectorX<Scalar>::Zero(prior.size());
    for (const auto& p : posteriors) mean += p;
    mean /= static_cast<Scalar>(posteriors.size());
    if (degenerate != nullptr) *degenerate = true;
    return mean;
  }
}

template <class Scalar>
struct FusedPrediction {
  VectorX<Scalar> posterior;
  int label = 0;
  bool degenerate = false;  // fell back to averaging the posteriors
};

// forward -> fuse -> classify_map.
template <class Scalar>
FusedPrediction<Scalar> predict_fused(const std::vector<MlpParamsT<Scalar>>& models,
                                      const VectorX<Scalar>& features,
                                      const ClassPriorT<Scalar>& prior) {
  if (models.empty()) throw ContractViolation("predict_fused: no models");
  std::vector<VectorX<Scalar>> posteriors;
  posteriors.reserve(models.size());
  for (const auto& model : models) posteriors.push_back(forward(model, features));

  FusedPrediction<Scalar> out;
  out.posterior = fuse_with_fallback(posteriors, prior, &out.degenerate);
  out.label = classify_map(out.posterior);
  return out;
}

}  // namespace fedloc
