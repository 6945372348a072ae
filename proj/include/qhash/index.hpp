#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qhash/core.hpp"

namespace qhash {

/// Hash table with one bucket per code bit. Item i sits in the k buckets of
/// its code; reranking uses a separate base embedding space.
class HashIndex {
 public:
  HashIndex(std::vector<HashCode> codes, Matrix base_embeddings, std::vector<int> labels);

  std::size_t size() const { return codes_.size(); }
  std::size_t code_dim() const { return buckets_.size(); }
  std::span<const std::size_t> bucket(std::size_t q) const { return buckets_.at(q); }
  std::span<const HashCode> item_codes() const { return codes_; }
  const Matrix& base_embeddings() const { return base_; }
  std::span<const int> labels() const { return labels_; }

  /// Sorted union of the buckets at the query's bits, minus `exclude`.
  std::vector<std::size_t> candidates(const HashCode& query,
                                      std::optional<std::size_t> exclude = std::nullopt) const;
  /// Size of candidates() without materializing it.
  std::size_t candidate_count(const HashCode& query,
                              std::optional<std::size_t> exclude = std::nullopt) const;

  friend bool operator==(const HashIndex&, const HashIndex&) = default;

 private:
  std::vector<std::vector<std::size_t>> buckets_;
  std::vector<HashCode> codes_;
  Matrix base_;
  std::vector<int> labels_;
};

inline HashIndex build(std::vector<HashCode> codes, Matrix base_embeddings, std::vector<int> labels) {
  return HashIndex(std::move(codes), std::move(base_embeddings), std::move(labels));
}

struct QueryResult {
  std::vector<std::size_t> retrieved;  // reranked, at most top_m
  std::size_t candidate_count = 0;
  std::size_t speedup_denominator = 0;  // index size n

  bool empty() const { return retrieved.empty(); }
};

/// Candidates reranked by Euclidean distance to `embedding` in the base
/// space, ties by item id, truncated to top_m.
QueryResult query(const HashIndex& ix, const HashCode& code, std::span<const double> embedding,
                  std::size_t top_m, std::optional<std::size_t> exclude = std::nullopt);

/// Mean over queries of the same-label fraction among the first
/// min(K, |retrieved|) results. Empty retrievals count as 0.
double precision_at(const HashIndex& ix, std::span<const QueryResult> results,
                    std::span<const int> query_labels, std::size_t K);

/// NMI between two labelings, normalized by the arithmetic mean of the
/// entropies. Two single-cluster labelings score 1.
double normalized_mutual_information(std::span<const int> a, std::span<const int> b);

/// Bucket purity against the class labels; defined for k = 1 only.
double nmi(const HashIndex& ix);

/// n / mean candidate count. With exclude_self, query i is index item i and
/// is not counted among its own candidates.
double measured_suf(const HashIndex& ix, std::span<const HashCode> queries, bool exclude_self = false);
double mean_candidate_count(const HashIndex& ix, std::span<const HashCode> queries,
                            bool exclude_self = false);

struct SufAnalysis {
  double suf = 1.0;               // expected speedup under uniform codes
  double no_collision_prob = 0.0; // p = C(d-k, k) / C(d, k)
  double variance_factor = 0.0;   // (1 - p) p, so V[N_q] = (n - 1) (1 - p) p
};

SufAnalysis theoretical_suf(std::size_t d, std::size_t k);

/// The expected speedup as an exact fraction C(d,k) / (C(d,k) - C(d-k,k)),
/// reduced. Throws OverflowError if the binomials do not fit in 64 bits.
struct SufFraction {
  std::uint64_t numerator = 1;
  std::uint64_t denominator = 1;
};
SufFraction theoretical_suf_exact(std::size_t d, std::size_t k);

/// Uniformly random k-subset of [0, d).
HashCode random_code(std::size_t d, std::size_t k, Rng& rng);

struct SufSimulation {
  double measured_suf = 0.0;
  double mean_candidates = 0.0;
  double expected_candidates = 0.0;  // n (1 - p)
  double standard_error = 0.0;       // sqrt(n (1 - p) p / queries)
};

/// Index of n uniform codes probed by `queries` fresh uniform codes. Given
/// any fixed index, the expected candidate count of a fresh query is
/// exactly n (1 - p).
SufSimulation simulate_suf(std::size_t n, std::size_t d, std::size_t k, std::size_t queries, Rng& rng);

/// One row of the metrics table.
struct MetricRow {
  std::string method;
  std::size_t k = 0;
  std::size_t d = 0;
  double suf = 0.0;
  std::vector<std::size_t> topk;
  std::vector<double> precision;  // aligned with topk
  std::optional<double> nmi;      // only when k == 1
};

/// Runs every query (code + base embedding) against the index. With
/// exclude_self, query i is index item i.
MetricRow evaluate(const std::string& method, const HashIndex& ix, std::span<const HashCode> query_codes,
                   const Matrix& query_embeddings, std::span<const int> query_labels,
                   std::span<const std::size_t> topk, bool exclude_self = false);

void write_metric_header(std::ostream& os, std::span<const std::size_t> topk);
void write_metric_row(std::ostream& os, const MetricRow& row);

}  // namespace qhash
