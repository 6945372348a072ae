#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "qhash/core.hpp"

namespace qhash::io {

// Binary matrix file: "QEMB", u16 version, u32 rows, u32 cols, then
// rows * cols little-endian float32 values in row-major order.
inline constexpr std::uint16_t kEmbeddingVersion = 1;

/// Values must survive the float32 round trip as finite numbers.
void write_embeddings(std::ostream& os, const Matrix& m);
Matrix read_embeddings(std::istream& is, const std::string& name = "<stream>");
void write_embeddings(const std::string& path, const Matrix& m);
Matrix read_embeddings(const std::string& path);

// One non-negative integer per line.
void write_labels(std::ostream& os, const std::vector<int>& labels);
std::vector<int> read_labels(std::istream& is, const std::string& name = "<stream>");
void write_labels(const std::string& path, const std::vector<int>& labels);
std::vector<int> read_labels(const std::string& path);

// Header "# d=<d> k=<k>", then one line of k sorted bit indices per code.
void write_codes(std::ostream& os, const std::vector<HashCode>& codes, std::size_t dim);
std::vector<HashCode> read_codes(std::istream& is, const std::string& name = "<stream>");
void write_codes(const std::string& path, const std::vector<HashCode>& codes, std::size_t dim);
std::vector<HashCode> read_codes(const std::string& path);

/// Flat `key = value` file. Blank lines and `#` comments are skipped.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, const std::string& name = "<stream>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  std::string get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;  // comma separated

  /// Throws InvalidInput naming the first key outside `known`.
  void reject_unknown(const std::set<std::string>& known) const;

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };
  const Entry& entry(const std::string& key) const;
  [[noreturn]] void bad_value(const std::string& key, const std::string& expected) const;

  std::string name_;
  std::map<std::string, Entry> entries_;
};

}  // namespace qhash::io
