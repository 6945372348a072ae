#include "qhash/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace qhash {

namespace {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw InvalidInput("matrix payload has " + std::to_string(data_.size()) +
                       " values, expected " + std::to_string(rows * cols));
  }
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols()) throw InvalidInput("ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
  }
  return m;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

EmbeddingSet::EmbeddingSet(Matrix data, std::vector<int> labels)
    : data_(std::move(data)), labels_(std::move(labels)) {
  if (labels_.size() != data_.rows()) {
    throw InvalidInput("label count " + std::to_string(labels_.size()) +
                       " does not match item count " + std::to_string(data_.rows()));
  }
  if (!data_.all_finite()) throw InvalidInput("embedding set contains non-finite values");
  int max_label = -1;
  for (int y : labels_) {
    if (y < 0) throw InvalidInput("negative class label");
    max_label = std::max(max_label, y);
  }
  num_classes_ = static_cast<std::size_t>(max_label + 1);
  std::vector<bool> seen(num_classes_, false);
  for (int y : labels_) seen[static_cast<std::size_t>(y)] = true;
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InvalidInput("class labels are not a contiguous 0..C-1 range");
  }
}

EmbeddingSet EmbeddingSet::from_raw_labels(Matrix data, std::span<const int> raw_labels) {
  auto [labels, mapping] = canonicalize_labels(raw_labels);
  return EmbeddingSet(std::move(data), std::move(labels));
}

HashCode::HashCode(std::size_t dim, std::vector<std::uint32_t> bits)
    : dim_(dim), bits_(std::move(bits)) {
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i] >= dim_) {
      throw InvalidInput("bit index " + std::to_string(bits_[i]) + " out of range for d=" +
                         std::to_string(dim_));
    }
    if (i > 0 && bits_[i] <= bits_[i - 1]) {
      throw InvalidInput("hash code bits must be strictly increasing");
    }
  }
}

HashCode HashCode::from_dense(std::size_t dim, std::span<const std::uint64_t> words) {
  if (words.size() != (dim + 63) / 64) throw InvalidInput("dense code has wrong word count");
  std::vector<std::uint32_t> bits;
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::uint64_t word = words[w];
    while (word != 0) {
      const auto pos = static_cast<std::uint32_t>(__builtin_ctzll(word));
      bits.push_back(static_cast<std::uint32_t>(w * 64) + pos);
      word &= word - 1;
    }
  }
  return HashCode(dim, std::move(bits));
}

bool HashCode::contains(std::size_t bit) const {
  return std::binary_search(bits_.begin(), bits_.end(), static_cast<std::uint32_t>(bit));
}

std::size_t HashCode::overlap(const HashCode& other) const {
  std::size_t count = 0;
  auto a = bits_.begin();
  auto b = other.bits_.begin();
  while (a != bits_.end() && b != other.bits_.end()) {
    if (*a < *b) {
      ++a;
    } else if (*b < *a) {
      ++b;
    } else {
      ++count;
      ++a;
      ++b;
    }
  }
  return count;
}

std::vector<std::uint64_t> HashCode::to_dense() const {
  std::vector<std::uint64_t> words((dim_ + 63) / 64, 0);
  for (auto q : bits_) words[q / 64] |= std::uint64_t{1} << (q % 64);
  return words;
}

std::string to_string(const HashCode& code) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < code.k(); ++i) os << (i ? "," : "") << code.bits()[i];
  os << '}';
  return os.str();
}

SparsityConfig::SparsityConfig(std::size_t dim_, std::size_t k_, std::vector<double> lambda_)
    : dim(dim_), k(k_), lambda(std::move(lambda_)) {
  if (k < 1 || k > dim) throw InvalidInput("sparsity k must satisfy 1 <= k <= d");
  if (lambda.size() != dim) throw InvalidInput("lambda must have length d");
  for (double l : lambda) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidInput("lambda entries must be finite and >= 0");
  }
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) throw InvalidInput("Rng::below requires a positive bound");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Marsaglia polar method.
  double u, v, s;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double factor = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * factor;
  has_spare_ = true;
  return u * factor;
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t n, std::size_t count) {
  if (count > n) throw InvalidInput("cannot sample more items than available");
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(pool[i], pool[i + below(n - i)]);
  }
  pool.resize(count);
  return pool;
}

std::pair<std::vector<int>, std::vector<int>> canonicalize_labels(std::span<const int> raw) {
  if (raw.empty()) throw InvalidInput("cannot canonicalize an empty label sequence");
  std::unordered_map<int, int> index;
  std::vector<int> labels;
  std::vector<int> mapping;
  labels.reserve(raw.size());
  for (int y : raw) {
    if (y < 0) throw InvalidInput("negative class label " + std::to_string(y));
    auto [it, inserted] = index.emplace(y, static_cast<int>(mapping.size()));
    if (inserted) mapping.push_back(y);
    labels.push_back(it->second);
  }
  return {std::move(labels), std::move(mapping)};
}

Matrix class_means(const Matrix& data, std::span<const int> labels, std::size_t num_classes) {
  if (labels.size() != data.rows()) throw InvalidInput("label count does not match item count");
  std::vector<std::vector<std::size_t>> members(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidInput("label " + std::to_string(y) + " out of range");
    }
    members[static_cast<std::size_t>(y)].push_back(i);
  }
  Matrix means(num_classes, data.cols());
  std::vector<double> column;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (members[c].empty()) throw InvalidInput("class " + std::to_string(c) + " is empty");
    const double m = static_cast<double>(members[c].size());
    for (std::size_t q = 0; q < data.cols(); ++q) {
      column.clear();
      for (std::size_t i : members[c]) column.push_back(data(i, q));
      std::sort(column.begin(), column.end());
      // Shift by the minimum so a class of identical items reproduces them exactly.
      const double base = column.front();
      for (double& x : column) x -= base;
      means(c, q) = base + pairwise_sum(column) / m;
    }
  }
  return means;
}

Matrix class_means(const EmbeddingSet& e) {
  return class_means(e.data(), e.labels(), e.num_classes());
}

}  // namespace qhash
