#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedloc/mlp.hpp"

namespace fedloc {

inline constexpr int kWapCount = 520;
inline constexpr double kNotDetectedSentinel = 100.0;
// Sentinel replacement, just below the weakest detectable signal, so
// "not detected" scales to exactly 0.
inline constexpr double kRssFloorDbm = -105.0;

struct RssSample {
  Eigen::VectorXd rss;  // kWapCount entries in dBm; 100 = not detected
  double longitude = 0.0;
  double latitude = 0.0;
  int floor = 0;
  int building = 0;
  int space_id = 0;
};

// Classification-ready dataset: normalized RSS features and area labels.
struct AreaDataset {
  Eigen::MatrixXd features;          // n x F, entries in [0, 1]
  Eigen::VectorXi labels;            // n, values in [0, label_count)
  int label_count = 0;               // L
  Eigen::MatrixX2d label_centroids;  // L x (latitude, longitude)

  Eigen::Index n() const { return features.rows(); }
  Eigen::Index feature_dim() const { return features.cols(); }
};

// One room (space id) with its sample centroid and assigned area label.
struct SpaceAssignment {
  int space_id = 0;
  double latitude = 0.0;
  double longitude = 0.0;
  int label = 0;
};

struct RoomClustering {
  std::vector<SpaceAssignment> spaces;  // ascending space id
  Eigen::MatrixX2d label_centroids;     // L x (latitude, longitude)
  int label_count = 0;
};

// Parses the UJIIndoorLoc-format CSV (columns WAP001..WAP520, LONGITUDE,
// LATITUDE, FLOOR, BUILDINGID, SPACEID, RELATIVEPOSITION, USERID,
// PHONEID, TIMESTAMP). Missing columns raise SchemaError listing them;
// malformed rows raise RowParseError naming the file line.
std::vector<RssSample> load_ujiindoorloc(const std::string& path);

// Samples matching both building and floor, original order preserved.
// Throws EmptySelection when nothing matches.
std::vector<RssSample> filter_building_floor(const std::vector<RssSample>& samples,
                                             int building, int floor);

// Groups rooms into label_count areas: k-means on the per-space-id
// sample centroids, labels re-indexed 0..L-1 by ascending centroid
// longitude then latitude.
RoomClustering cluster_rooms(const std::vector<RssSample>& samples,
                             int label_count, std::uint64_t seed);

// Sentinel 100 -> -105 dBm, then affine [-105, 0] -> [0, 1], clipped.
// Out-of-range raw values are counted into *clipped_count when given.
Eigen::MatrixXd normalize_features(const std::vector<RssSample>& samples,
                                   int* clipped_count = nullptr);

AreaDataset make_area_dataset(const std::vector<RssSample>& samples,
                              const RoomClustering& clustering,
                              int* clipped_count = nullptr);

// Stratified by label, reproducible under seed; per-label test counts
// are round(test_fraction * n_label).
std::pair<AreaDataset, AreaDataset> split_train_test(const AreaDataset& dataset,
                                                     double test_fraction,
                                                     std::uint64_t seed);

// Processed-dataset container. Binary, little-endian: magic "FLDS",
// u32 version, i64 L/F/n, centroid doubles (lat, lon per label),
// features row-major, labels i32. Round-trips bit-exactly.
void save_dataset(const std::string& path, const AreaDataset& dataset);
AreaDataset load_dataset(const std::string& path);

// Label-map report: space_id,label,space_latitude,space_longitude.
void write_label_map_csv(const std::string& path, const RoomClustering& clustering);
// Centroid table: label,latitude,longitude.
void write_centroid_csv(const std::string& path, const RoomClustering& clustering);

// Row subset of a dataset as a training batch.
LabeledBatch slice(const AreaDataset& dataset, const std::vector<int>& rows);
LabeledBatch as_batch(const AreaDataset& dataset);

// Per-label sample counts.
Eigen::VectorXd label_histogram(const Eigen::VectorXi& labels, int label_count);

}  // namespace fedloc
