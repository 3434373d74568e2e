#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "fedloc/errors.hpp"

namespace fedloc {

// Shortest round-trip decimal representation, locale-independent, so
// CSV output bytes depend only on the values.
inline std::string format_double(double value) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, result.ptr);
}

// Minimal comma-separated writer; fields are never quoted, callers only
// pass numbers and identifiers. Opened in binary mode so line endings
// are identical on every platform.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open for writing: " + path);
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
    if (!out_) throw IoError("csv write failed");
  }

 private:
  std::ofstream out_;
};

}  // namespace fedloc
