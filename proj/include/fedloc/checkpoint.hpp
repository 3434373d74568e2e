#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "fedloc/errors.hpp"
#include "fedloc/mlp.hpp"

namespace fedloc {

// Model checkpoint container. Binary, little-endian:
//
//   bytes 0-3   magic "FLMC"
//   u32         format version (1)
//   u64         seed provenance
//   u64         number of layer widths
//   i64[]       widths (input, hidden..., output)
//   u64         d, flattened parameter count
//   f64[d]      flattened parameters (layer-major, weights before
//               biases, weights row-major)
//
// The same bytes always reload to the same parameters, bit for bit.

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace detail {

template <class T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw IoError("checkpoint: truncated read");
  return value;
}

}  // namespace detail

struct Checkpoint {
  MlpParams params;
  std::uint64_t seed = 0;
};

inline void save_checkpoint(const std::string& path, const MlpParams& params,
                            std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out.write("FLMC", 4);
  detail::write_pod<std::uint32_t>(out, 1);
  detail::write_pod<std::uint64_t>(out, seed);
  const auto widths = params.architecture();
  detail::write_pod<std::uint64_t>(out, widths.size());
  for (Eigen::Index w : widths) detail::write_pod<std::int64_t>(out, w);
  const Eigen::VectorXd vec = flatten(params);
  detail::write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(vec.size()));
  out.write(reinterpret_cast<const char*>(vec.data()),
            static_cast<std::streamsize>(sizeof(double) * vec.size()));
  if (!out) throw IoError("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputFileError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "FLMC") {
    throw InputFileError("not a checkpoint file: " + path);
  }
  const auto version = detail::read_pod<std::uint32_t>(in);
  if (version != 1) {
    throw InputFileError("unsupported checkpoint version " +
                         std::to_string(version) + ": " + path);
  }
  Checkpoint ck;
  ck.seed = detail::read_pod<std::uint64_t>(in);
  const auto n_widths = detail::read_pod<std::uint64_t>(in);
  if (n_widths < 2 || n_widths > 1024) {
    throw InputFileError("corrupt checkpoint architecture: " + path);
  }
  std::vector<Eigen::Index> widths(n_widths);
  for (auto& w : widths) {
    w = static_cast<Eigen::Index>(detail::read_pod<std::int64_t>(in));
  }
  const auto d = detail::read_pod<std::uint64_t>(in);
  if (static_cast<Eigen::Index>(d) != parameter_count(widths)) {
    throw InputFileError("checkpoint length does not match architecture: " + path);
  }
  Eigen::VectorXd vec(static_cast<Eigen::Index>(d));
  in.read(reinterpret_cast<char*>(vec.data()),
          static_cast<std::streamsize>(sizeof(double) * d));
  if (!in) throw InputFileError("truncated checkpoint: " + path);
  ck.params = unflatten(vec, widths);
  return ck;
}

}  // namespace fedloc
