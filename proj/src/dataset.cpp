#include "fedloc/dataset.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "fedloc/csv.hpp"
#include "fedloc/errors.hpp"
#include "fedloc/kmeans.hpp"
#include "fedloc/random.hpp"

namespace fedloc {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_double(const std::string& field, int file_line, const std::string& column) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end) {
    throw RowParseError("file line " + std::to_string(file_line) +
                        ": cannot parse numeric field '" + field +
                        "' in column " + column);
  }
  return value;
}

int parse_int(const std::string& field, int file_line, const std::string& column) {
  const double v = parse_double(field, file_line, column);
  const double rounded = std::round(v);
  if (std::abs(v - rounded) > 1e-9) {
    throw RowParseError("file line " + std::to_string(file_line) +
                        ": expected integer in column " + column + ", got '" +
                        field + "'");
  }
  return static_cast<int>(rounded);
}

std::vector<std::string> expected_columns() {
  std::vector<std::string> names;
  names.reserve(kWapCount + 9);
  for (int i = 1; i <= kWapCount; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "WAP%03d", i);
    names.emplace_back(buf);
  }
  for (const char* meta : {"LONGITUDE", "LATITUDE", "FLOOR", "BUILDINGID",
                           "SPACEID", "RELATIVEPOSITION", "USERID", "PHONEID",
                           "TIMESTAMP"}) {
    names.emplace_back(meta);
  }
  return names;
}

}  // namespace

std::vector<RssSample> load_ujiindoorloc(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputFileError("cannot open dataset csv: " + path);

  std::string line;
  if (!std::getline(in, line)) {
    throw SchemaError("dataset csv has no header row: " + path);
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_line(line);
  std::unordered_map<std::string, int> column;
  for (std::size_t i = 0; i < header.size(); ++i) {
    column.emplace(header[i], static_cast<int>(i));
  }
  std::string missing;
  const auto expected = expected_columns();
  for (const auto& name : expected) {
    if (column.find(name) == column.end()) {
      if (!missing.empty()) missing += ", ";
      missing += name;
    }
  }
  if (!missing.empty()) {
    throw SchemaError("dataset csv missing columns: " + missing);
  }

  std::vector<int> wap_column(kWapCount);
  for (int i = 0; i < kWapCount; ++i) wap_column[i] = column.at(expected[static_cast<std::size_t>(i)]);
  const int col_lon = column.at("LONGITUDE");
  const int col_lat = column.at("LATITUDE");
  const int col_floor = column.at("FLOOR");
  const int col_building = column.at("BUILDINGID");
  const int col_space = column.at("SPACEID");

  std::vector<RssSample> samples;
  int file_line = 1;
  while (std::getline(in, line)) {
    ++file_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != header.size()) {
      throw RowParseError("file line " + std::to_string(file_line) + ": expected " +
                          std::to_string(header.size()) + " fields, got " +
                          std::to_string(fields.size()));
    }
    RssSample s;
    s.rss.resize(kWapCount);
    for (int i = 0; i < kWapCount; ++i) {
      s.rss[i] = parse_double(fields[static_cast<std::size_t>(wap_column[i])], file_line,
                              expected[static_cast<std::size_t>(i)]);
    }
    s.longitude = parse_double(fields[static_cast<std::size_t>(col_lon)], file_line, "LONGITUDE");
    s.latitude = parse_double(fields[static_cast<std::size_t>(col_lat)], file_line, "LATITUDE");
    s.floor = parse_int(fields[static_cast<std::size_t>(col_floor)], file_line, "FLOOR");
    s.building = parse_int(fields[static_cast<std::size_t>(col_building)], file_line, "BUILDINGID");
    s.space_id = parse_int(fields[static_cast<std::size_t>(col_space)], file_line, "SPACEID");
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<RssSample> filter_building_floor(const std::vector<RssSample>& samples,
                                             int building, int floor) {
  std::vector<RssSample> out;
  for (const auto& s : samples) {
    if (s.building == building && s.floor == floor) out.push_back(s);
  }
  if (out.empty()) {
    throw EmptySelection("no samples for building " + std::to_string(building) +
                         ", floor " + std::to_string(floor));
  }
  return out;
}

RoomClustering cluster_rooms(const std::vector<RssSample>& samples,
                             int label_count, std::uint64_t seed) {
  struct Accum {
    double lat_sum = 0.0;
    double lon_sum = 0.0;
    int count = 0;
  };
  std::map<int, Accum> by_space;  // ordered: deterministic room indexing
  for (const auto& s : samples) {
    auto& a = by_space[s.space_id];
    a.lat_sum += s.latitude;
    a.lon_sum += s.longitude;
    ++a.count;
  }
  const int room_count = static_cast<int>(by_space.size());
  if (label_count < 1 || label_count > room_count) {
    throw ParameterError("cluster_rooms: label count " + std::to_string(label_count) +
                         " out of range [1, " + std::to_string(room_count) +
                         " distinct space ids]");
  }

  Eigen::MatrixX2d points(room_count, 2);  // (longitude, latitude)
  std::vector<int> space_ids;
  space_ids.reserve(by_space.size());
  for (const auto& [space_id, acc] : by_space) {
    const int r = static_cast<int>(space_ids.size());
    points(r, 0) = acc.lon_sum / acc.count;
    points(r, 1) = acc.lat_sum / acc.count;
    space_ids.push_back(space_id);
  }

  const KmeansResult km = kmeans(points, label_count, seed);

  // Re-index labels by ascending centroid longitude, then latitude.
  std::vector<int> order(static_cast<std::size_t>(label_count));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (km.centroids(a, 0) != km.centroids(b, 0)) {
      return km.centroids(a, 0) < km.centroids(b, 0);
    }
    return km.centroids(a, 1) < km.centroids(b, 1);
  });
  std::vector<int> relabel(static_cast<std::size_t>(label_count));
  for (int new_label = 0; new_label < label_count; ++new_label) {
    relabel[static_cast<std::size_t>(order[static_cast<std::size_t>(new_label)])] = new_label;
  }

  RoomClustering clustering;
  clustering.label_count = label_count;
  clustering.label_centroids.resize(label_count, 2);
  for (int c = 0; c < label_count; ++c) {
    const int source = order[static_cast<std::size_t>(c)];
    clustering.label_centroids(c, 0) = km.centroids(source, 1);  // latitude
    clustering.label_centroids(c, 1) = km.centroids(source, 0);  // longitude
  }
  clustering.spaces.reserve(space_ids.size());
  for (int r = 0; r < room_count; ++r) {
    SpaceAssignment a;
    a.space_id = space_ids[static_cast<std::size_t>(r)];
    a.longitude = points(r, 0);
    a.latitude = points(r, 1);
    a.label = relabel[static_cast<std::size_t>(km.assignment[static_cast<std::size_t>(r)])];
    clustering.spaces.push_back(a);
  }
  return clustering;
}

Eigen::MatrixXd normalize_features(const std::vector<RssSample>& samples,
                                   int* clipped_count) {
  const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
  Eigen::MatrixXd features(n, kWapCount);
  int clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int j = 0; j < kWapCount; ++j) {
      double v = samples[static_cast<std::size_t>(i)].rss[j];
      if (v == kNotDetectedSentinel) v = kRssFloorDbm;
      double scaled = (v - kRssFloorDbm) / -kRssFloorDbm;
      if (scaled < 0.0 || scaled > 1.0) {
        ++clipped;
        scaled = std::clamp(scaled, 0.0, 1.0);
      }
      features(i, j) = scaled;
    }
  }
  if (clipped_count != nullptr) *clipped_count = clipped;
  return features;
}

AreaDataset make_area_dataset(const std::vector<RssSample>& samples,
                              const RoomClustering& clustering,
                              int* clipped_count) {
  if (samples.empty()) throw ParameterError("make_area_dataset: no samples");
  std::unordered_map<int, int> space_to_label;
  for (const auto& space : clustering.spaces) {
    space_to_label.emplace(space.space_id, space.label);
  }

  AreaDataset dataset;
  dataset.label_count = clustering.label_count;
  dataset.label_centroids = clustering.label_centroids;
  dataset.features = normalize_features(samples, clipped_count);
  dataset.labels.resize(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto it = space_to_label.find(samples[i].space_id);
    if (it == space_to_label.end()) {
      throw ContractViolation("make_area_dataset: space id " +
                              std::to_string(samples[i].space_id) +
                              " missing from clustering");
    }
    dataset.labels[static_cast<Eigen::Index>(i)] = it->second;
  }

  const Eigen::VectorXd counts = label_histogram(dataset.labels, dataset.label_count);
  for (int l = 0; l < dataset.label_count; ++l) {
    if (counts[l] < 1.0) {
      throw InvalidState("make_area_dataset: label " + std::to_string(l) +
                         " has no samples");
    }
  }
  return dataset;
}

std::pair<AreaDataset, AreaDataset> split_train_test(const AreaDataset& dataset,
                                                     double test_fraction,
                                                     std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw ParameterError("split_train_test: fraction must be in [0, 1]");
  }
  Rng rng(seed);
  std::vector<int> train_rows;
  std::vector<int> test_rows;
  for (int l = 0; l < dataset.label_count; ++l) {
    std::vector<int> rows;
    for (Eigen::Index i = 0; i < dataset.labels.size(); ++i) {
      if (dataset.labels[i] == l) rows.push_back(static_cast<int>(i));
    }
    rng.shuffle(rows);
    const auto n_test = static_cast<std::size_t>(std::clamp<long long>(
        std::llround(test_fraction * static_cast<double>(rows.size())), 0,
        static_cast<long long>(rows.size())));
    test_rows.insert(test_rows.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_rows.insert(train_rows.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());

  const auto subset = [&](const std::vector<int>& rows) {
    AreaDataset out;
    out.label_count = dataset.label_count;
    out.label_centroids = dataset.label_centroids;
    out.features = dataset.features(rows, Eigen::all);
    out.labels = dataset.labels(rows);
    return out;
  };
  return {subset(train_rows), subset(test_rows)};
}

namespace {

template <class T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& path) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw InputFileError("truncated dataset file: " + path);
  return value;
}

static_assert(std::endian::native == std::endian::little,
              "dataset container assumes a little-endian host");

}  // namespace

void save_dataset(const std::string& path, const AreaDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open dataset for writing: " + path);
  out.write("FLDS", 4);
  write_pod<std::uint32_t>(out, 1);
  write_pod<std::int64_t>(out, dataset.label_count);
  write_pod<std::int64_t>(out, dataset.feature_dim());
  write_pod<std::int64_t>(out, dataset.n());
  for (int l = 0; l < dataset.label_count; ++l) {
    write_pod<double>(out, dataset.label_centroids(l, 0));
    write_pod<double>(out, dataset.label_centroids(l, 1));
  }
  const RowMajorMatrix<double> rows = dataset.features;
  out.write(reinterpret_cast<const char*>(rows.data()),
            static_cast<std::streamsize>(sizeof(double) * rows.size()));
  for (Eigen::Index i = 0; i < dataset.n(); ++i) {
    write_pod<std::int32_t>(out, dataset.labels[i]);
  }
  if (!out) throw IoError("dataset write failed: " + path);
}

AreaDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFileError("cannot open dataset: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "FLDS") {
    throw InputFileError("not a processed dataset file: " + path);
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != 1) {
    throw InputFileError("unsupported dataset version " + std::to_string(version));
  }
  AreaDataset dataset;
  dataset.label_count = static_cast<int>(read_pod<std::int64_t>(in, path));
  const auto feature_dim = read_pod<std::int64_t>(in, path);
  const auto n = read_pod<std::int64_t>(in, path);
  if (dataset.label_count < 1 || feature_dim < 1 || n < 0) {
    throw InputFileError("corrupt dataset header: " + path);
  }
  dataset.label_centroids.resize(dataset.label_count, 2);
  for (int l = 0; l < dataset.label_count; ++l) {
    dataset.label_centroids(l, 0) = read_pod<double>(in, path);
    dataset.label_centroids(l, 1) = read_pod<double>(in, path);
  }
  RowMajorMatrix<double> rows(n, feature_dim);
  in.read(reinterpret_cast<char*>(rows.data()),
          static_cast<std::streamsize>(sizeof(double) * rows.size()));
  if (!in) throw InputFileError("truncated dataset file: " + path);
  dataset.features = rows;
  dataset.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dataset.labels[i] = read_pod<std::int32_t>(in, path);
  }
  return dataset;
}

void write_label_map_csv(const std::string& path, const RoomClustering& clustering) {
  CsvWriter csv(path);
  csv.row({"space_id", "label", "space_latitude", "space_longitude"});
  for (const auto& space : clustering.spaces) {
    csv.row({std::to_string(space.space_id), std::to_string(space.label),
             format_double(space.latitude), format_double(space.longitude)});
  }
}

void write_centroid_csv(const std::string& path, const RoomClustering& clustering) {
  CsvWriter csv(path);
  csv.row({"label", "latitude", "longitude"});
  for (int l = 0; l < clustering.label_count; ++l) {
    csv.row({std::to_string(l), format_double(clustering.label_centroids(l, 0)),
             format_double(clustering.label_centroids(l, 1))});
  }
}

LabeledBatch slice(const AreaDataset& dataset, const std::vector<int>& rows) {
  LabeledBatch batch;
  batch.features = dataset.features(rows, Eigen::all);
  batch.labels = dataset.labels(rows);
  return batch;
}

LabeledBatch as_batch(const AreaDataset& dataset) {
  return LabeledBatch{dataset.features, dataset.labels};
}

Eigen::VectorXd label_histogram(const Eigen::VectorXi& labels, int label_count) {
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(label_count);
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || l >= label_count) {
      throw ContractViolation("label_histogram: label out of range");
    }
    counts[l] += 1.0;
  }
  return counts;
}

}  // namespace fedloc
