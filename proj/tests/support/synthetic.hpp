#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fedloc/csv.hpp"
#include "fedloc/dataset.hpp"
#include "fedloc/random.hpp"

namespace fedloc::testing {

// In-memory classification fixture: one Gaussian blob per label in
// [0, 1]^feature_dim, clipped. Small and fast; used wherever a test
// needs labeled data but not the CSV pipeline.
inline AreaDataset make_blob_dataset(int label_count, int per_label,
                                     int feature_dim, std::uint64_t seed,
                                     double noise = 0.08) {
  Rng rng(seed);
  Eigen::MatrixXd centers(label_count, feature_dim);
  for (int l = 0; l < label_count; ++l) {
    for (int f = 0; f < feature_dim; ++f) centers(l, f) = rng.uniform(0.15, 0.85);
  }
  AreaDataset dataset;
  dataset.label_count = label_count;
  dataset.label_centroids.resize(label_count, 2);
  for (int l = 0; l < label_count; ++l) {
    dataset.label_centroids(l, 0) = l;
    dataset.label_centroids(l, 1) = l;
  }
  const int n = label_count * per_label;
  dataset.features.resize(n, feature_dim);
  dataset.labels.resize(n);
  int row = 0;
  for (int l = 0; l < label_count; ++l) {
    for (int s = 0; s < per_label; ++s) {
      for (int f = 0; f < feature_dim; ++f) {
        dataset.features(row, f) =
            std::clamp(centers(l, f) + noise * rng.normal(), 0.0, 1.0);
      }
      dataset.labels[row] = l;
      ++row;
    }
  }
  return dataset;
}

struct SyntheticCsvOptions {
  int rooms = 24;            // laid out on a grid, 6 per row
  int samples_per_room = 40;
  int access_points = 24;    // informative WAP columns; the rest stay undetected
  int building = 1;
  int floor = 1;
  int stray_rows = 0;        // extra rows on another building/floor
  std::uint64_t seed = 7;
};

// UJIIndoorLoc-format CSV: rooms on a 10 m grid, RSS from a log-distance
// path-loss model with shadowing, sentinel 100 beyond detection range.
// Exercises the full ingest -> cluster -> normalize pipeline.
inline void write_synthetic_uji_csv(const std::string& path,
                                    const SyntheticCsvOptions& opts) {
  Rng rng(opts.seed);
  const double lon0 = -7500.0;
  const double lat0 = 4864700.0;
  const int room_cols = 6;
  const int ap_cols = 6;

  std::vector<std::pair<double, double>> aps;
  for (int a = 0; a < opts.access_points; ++a) {
    const int gx = a % ap_cols;
    const int gy = a / ap_cols;
    aps.emplace_back(lon0 + 10.0 * gx + 5.0, lat0 + 10.0 * gy + 5.0);
  }

  CsvWriter csv(path);
  std::vector<std::string> header;
  for (int i = 1; i <= kWapCount; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "WAP%03d", i);
    header.emplace_back(buf);
  }
  for (const char* meta : {"LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID",
                           "SPACEID", "RELATIVEPOSITION", "USERID", "PHONEID",
                           "TIMESTAMP"}) {
    header.emplace_back(meta);
  }
  csv.row(header);

  const auto emit_row = [&](int room, int building, int floor) {
    const int gx = room % room_cols;
    const int gy = room / room_cols;
    const double lon = lon0 + 10.0 * gx + rng.uniform(-2.0, 2.0);
    const double lat = lat0 + 10.0 * gy + rng.uniform(-2.0, 2.0);

    std::vector<std::string> row;
    row.reserve(header.size());
    for (int w = 0; w < kWapCount; ++w) {
      if (w >= opts.access_points) {
        row.emplace_back("100");
        continue;
      }
      const double dx = lon - aps[static_cast<std::size_t>(w)].first;
      const double dy = lat - aps[static_cast<std::size_t>(w)].second;
      const double dist = std::max(1.0, std::sqrt(dx * dx + dy * dy));
      double rss = -30.0 - 22.0 * std::log10(dist) + 2.0 * rng.normal();
      rss = std::clamp(rss, -104.0, 0.0);
      if (rss < -90.0) {
        row.emplace_back("100");
      } else {
        row.emplace_back(std::to_string(static_cast<int>(std::lround(rss))));
      }
    }
    row.push_back(format_double(lon));
    row.push_back(format_double(lat));
    row.push_back(std::to_string(floor));
    row.push_back(std::to_string(building));
    row.push_back(std::to_string(100 + room));
    row.emplace_back("2");
    row.emplace_back("1");
    row.emplace_back("1");
    row.emplace_back("1371713733");
    csv.row(row);
  };

  for (int room = 0; room < opts.rooms; ++room) {
    for (int s = 0; s < opts.samples_per_room; ++s) {
      emit_row(room, opts.building, opts.floor);
    }
  }
  for (int s = 0; s < opts.stray_rows; ++s) {
    emit_row(s % opts.rooms, opts.building + 1, opts.floor + 2);
  }
}

}  // namespace fedloc::testing
