#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qhash {

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// n embeddings of dimension d with canonical class labels 0..C-1.
class EmbeddingSet {
 public:
  EmbeddingSet(Matrix data, std::vector<int> labels);

  // Canonicalizes arbitrary non-negative labels by first appearance.
  static EmbeddingSet from_raw_labels(Matrix data, std::span<const int> raw_labels);

  const Matrix& data() const { return data_; }
  std::span<const int> labels() const { return labels_; }
  std::size_t size() const { return data_.rows(); }
  std::size_t dim() const { return data_.cols(); }
  std::size_t num_classes() const { return num_classes_; }
  std::span<const double> embedding(std::size_t i) const { return data_.row(i); }

 private:
  Matrix data_;
  std::vector<int> labels_;
  std::size_t num_classes_ = 0;
};

/// k distinct set bits out of d, kept as a strictly increasing index list.
class HashCode {
 public:
  HashCode() = default;
  HashCode(std::size_t dim, std::vector<std::uint32_t> bits);

  static HashCode from_dense(std::size_t dim, std::span<const std::uint64_t> words);

  std::size_t dim() const { return dim_; }
  std::size_t k() const { return bits_.size(); }
  std::span<const std::uint32_t> bits() const { return bits_; }

  bool contains(std::size_t bit) const;
  /// Number of shared set bits (h_i^T h_j).
  std::size_t overlap(const HashCode& other) const;

  /// One 64-bit word per 64 bits, bit q at word q/64, position q%64.
  std::vector<std::uint64_t> to_dense() const;

  friend bool operator==(const HashCode&, const HashCode&) = default;
  friend auto operator<=>(const HashCode& a, const HashCode& b) {
    return a.bits_ <=> b.bits_;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::uint32_t> bits_;
};

std::string to_string(const HashCode& code);

/// d, k and the diagonal of the pairwise penalty P = diag(lambda).
struct SparsityConfig {
  SparsityConfig(std::size_t dim, std::size_t k, std::vector<double> lambda);

  std::size_t dim;
  std::size_t k;
  std::vector<double> lambda;
};

/// Seeded generator. Integer and uniform streams are bit-identical across
/// platforms; gaussian() additionally depends on the platform's std::log.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  double gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  /// `count` distinct values from [0, n) in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t count);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Relabels by order of first appearance. Returns (labels, mapping) where
/// mapping[c] is the raw label that became class c.
std::pair<std::vector<int>, std::vector<int>> canonicalize_labels(std::span<const int> raw);

/// Per-class mean rows. Summation is independent of item order: each
/// coordinate is reduced over the sorted values of the class.
Matrix class_means(const Matrix& data, std::span<const int> labels, std::size_t num_classes);
Matrix class_means(const EmbeddingSet& e);

}  // namespace qhash
