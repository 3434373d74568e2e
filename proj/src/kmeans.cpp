#include "fedloc/kmeans.hpp"

#include <limits>

#include "fedloc/errors.hpp"
#include "fedloc/random.hpp"

namespace fedloc {

namespace {

double squared(const Eigen::RowVector2d& a, const Eigen::RowVector2d& b) {
  return (a - b).squaredNorm();
}

// Nearest centroid, ties toward the lowest index.
int nearest(const Eigen::RowVector2d& p, const Eigen::MatrixX2d& centroids) {
  int best = 0;
  double best_d = squared(p, centroids.row(0));
  for (int c = 1; c < centroids.rows(); ++c) {
    const double d = squared(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

KmeansResult run_once(const Eigen::MatrixX2d& points, int k, Rng& rng,
                      int max_iterations) {
  const int n = static_cast<int>(points.rows());
  Eigen::MatrixX2d centroids(k, 2);

  // k-means++ seeding: squared-distance weighted draws.
  centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n))));
  Eigen::VectorXd d2(n);
  for (int c = 1; c < k; ++c) {
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j) best = std::min(best, squared(points.row(i), centroids.row(j)));
      d2[i] = best;
    }
    const double total = d2.sum();
    int pick = -1;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double cum = 0.0;
      for (int i = 0; i < n; ++i) {
        cum += d2[i];
        if (u < cum) {
          pick = i;
          break;
        }
      }
      if (pick < 0) {  // fp tail: last point with positive mass
        for (int i = n - 1; i >= 0; --i) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    }
    if (pick < 0) {
      // All remaining mass is zero (duplicate points); take the lowest
      // index not yet chosen as a centroid.
      for (int i = 0; i < n && pick < 0; ++i) {
        bool used = false;
        for (int j = 0; j < c; ++j) {
          used = used || (points.row(i) - centroids.row(j)).squaredNorm() == 0.0;
        }
        if (!used) pick = i;
      }
      if (pick < 0) pick = 0;
    }
    centroids.row(c) = points.row(pick);
  }

  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      const int c = nearest(points.row(i), centroids);
      if (c != assignment[static_cast<std::size_t>(i)]) {
        assignment[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }

    // Re-seed any empty cluster with the point farthest from its
    // current centroid (lowest index on ties).
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (int a : assignment) ++counts[static_cast<std::size_t>(a)];
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      int farthest = 0;
      double far_d = -1.0;
      for (int i = 0; i < n; ++i) {
        const int a = assignment[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] <= 1) continue;
        const double d = squared(points.row(i), centroids.row(a));
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      --counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(farthest)])];
      assignment[static_cast<std::size_t>(farthest)] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      changed = true;
    }

    Eigen::MatrixX2d sums = Eigen::MatrixX2d::Zero(k, 2);
    std::vector<int> member_count(static_cast<std::size_t>(k), 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assignment[static_cast<std::size_t>(i)]) += points.row(i);
      ++member_count[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      centroids.row(c) = sums.row(c) / static_cast<double>(member_count[static_cast<std::size_t>(c)]);
    }
    if (!changed) break;
  }

  KmeansResult result;
  result.centroids = centroids;
  result.assignment = assignment;
  result.inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    result.inertia += squared(points.row(i), centroids.row(assignment[static_cast<std::size_t>(i)]));
  }
  return result;
}

}  // namespace

KmeansResult kmeans(const Eigen::MatrixX2d& points, int k, std::uint64_t seed,
                    int restarts, int max_iterations) {
  const int n = static_cast<int>(points.rows());
  if (k < 1) throw ParameterError("kmeans: k must be >= 1");
  if (k > n) throw ParameterError("kmeans: k exceeds point count");
  if (restarts < 1) throw ParameterError("kmeans: restarts must be >= 1");

  KmeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
    KmeansResult candidate = run_once(points, k, rng, max_iterations);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

}  // namespace fedloc
