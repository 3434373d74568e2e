#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace fedloc {

struct KmeansResult {
  Eigen::MatrixX2d centroids;   // k x 2
  std::vector<int> assignment;  // one cluster index per point
  double inertia = 0.0;         // sum of squared distances to assigned centroids
};

// Lloyd's algorithm with k-means++ seeding and seeded restarts. The
// best restart by inertia wins; all ties (seeding, assignment, restart
// selection) break toward the lowest index, so the result is a pure
// function of (points, k, seed).
KmeansResult kmeans(const Eigen::MatrixX2d& points, int k, std::uint64_t seed,
                    int restarts = 50, int max_iterations = 100);

}  // namespace fedloc
