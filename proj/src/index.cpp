#include "qhash/index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>

namespace qhash {

namespace {

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t c = 1;
  for (std::uint64_t i = 0; i < k; ++i) {
    // c * (n - i) is divisible by (i + 1); split the division to delay overflow.
    const std::uint64_t g = std::gcd(c, i + 1);
    const std::uint64_t factor = (n - i) / ((i + 1) / g);
    if (__builtin_mul_overflow(c / g, factor, &c)) throw OverflowError("binomial exceeds 64 bits");
  }
  return c;
}

double entropy(const std::map<int, double>& counts, double n) {
  double h = 0.0;
  for (const auto& [key, c] : counts) {
    if (c > 0.0) h -= (c / n) * std::log(c / n);
  }
  return h;
}

}  // namespace

HashIndex::HashIndex(std::vector<HashCode> codes, Matrix base_embeddings, std::vector<int> labels)
    : codes_(std::move(codes)), base_(std::move(base_embeddings)), labels_(std::move(labels)) {
  if (codes_.size() != base_.rows() || codes_.size() != labels_.size()) {
    throw InvalidInput("index codes, embeddings and labels must have equal length");
  }
  const std::size_t d = codes_.empty() ? 0 : codes_.front().dim();
  buckets_.resize(d);
  for (std::size_t i = 0; i < codes_.size(); ++i) {
    if (codes_[i].dim() != d) throw InvalidInput("index codes disagree on the code dimension");
    for (auto q : codes_[i].bits()) buckets_[q].push_back(i);
  }
}

std::vector<std::size_t> HashIndex::candidates(const HashCode& query,
                                               std::optional<std::size_t> exclude) const {
  if (query.dim() != code_dim()) throw InvalidInput("query code dimension mismatch");
  std::vector<std::size_t> out;
  for (auto q : query.bits()) {
    const auto& b = buckets_[q];
    std::vector<std::size_t> merged;
    merged.reserve(out.size() + b.size());
    std::set_union(out.begin(), out.end(), b.begin(), b.end(), std::back_inserter(merged));
    out.swap(merged);
  }
  if (exclude) {
    auto it = std::lower_bound(out.begin(), out.end(), *exclude);
    if (it != out.end() && *it == *exclude) out.erase(it);
  }
  return out;
}

std::size_t HashIndex::candidate_count(const HashCode& query, std::optional<std::size_t> exclude) const {
  if (query.dim() != code_dim()) throw InvalidInput("query code dimension mismatch");
  if (query.k() == 1) {
    const auto& b = buckets_[query.bits()[0]];
    std::size_t count = b.size();
    if (exclude && std::binary_search(b.begin(), b.end(), *exclude)) --count;
    return count;
  }
  return candidates(query, exclude).size();
}

QueryResult query(const HashIndex& ix, const HashCode& code, std::span<const double> embedding,
                  std::size_t top_m, std::optional<std::size_t> exclude) {
  if (top_m < 1) throw InvalidInput("top_m must be >= 1");
  if (embedding.size() != ix.base_embeddings().cols()) {
    throw InvalidInput("query embedding dimension does not match the base space");
  }
  QueryResult result;
  result.speedup_denominator = ix.size();
  const auto cands = ix.candidates(code, exclude);
  result.candidate_count = cands.size();

  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(cands.size());
  for (std::size_t id : cands) {
    const auto row = ix.base_embeddings().row(id);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      const double diff = row[j] - embedding[j];
      s += diff * diff;
    }
    scored.emplace_back(std::sqrt(s), id);
  }
  const std::size_t keep = std::min(top_m, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end());
  result.retrieved.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) result.retrieved.push_back(scored[i].second);
  return result;
}

double precision_at(const HashIndex& ix, std::span<const QueryResult> results,
                    std::span<const int> query_labels, std::size_t K) {
  if (K < 1) throw InvalidInput("precision@K needs K >= 1");
  if (results.size() != query_labels.size()) throw InvalidInput("need one label per query");
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i].retrieved;
    const std::size_t top = std::min(K, r.size());
    if (top == 0) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j < top; ++j) {
      if (ix.labels()[r[j]] == query_labels[i]) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(top);
  }
  return total / static_cast<double>(results.size());
}

double normalized_mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw InvalidInput("labelings differ in length");
  if (a.empty()) throw InvalidInput("NMI of empty labelings is undefined");
  const double n = static_cast<double>(a.size());
  std::map<int, double> ca, cb;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1.0;
    cb[b[i]] += 1.0;
    joint[{a[i], b[i]}] += 1.0;
  }
  const double ha = entropy(ca, n);
  const double hb = entropy(cb, n);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  double mi = 0.0;
  for (const auto& [key, c] : joint) {
    mi += (c / n) * std::log(c * n / (ca[key.first] * cb[key.second]));
  }
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

double nmi(const HashIndex& ix) {
  std::vector<int> bucket_of(ix.size());
  for (std::size_t i = 0; i < ix.size(); ++i) {
    if (ix.item_codes()[i].k() != 1) throw InvalidInput("NMI is defined for k = 1 codes only");
    bucket_of[i] = static_cast<int>(ix.item_codes()[i].bits()[0]);
  }
  return normalized_mutual_information(bucket_of, ix.labels());
}

double mean_candidate_count(const HashIndex& ix, std::span<const HashCode> queries, bool exclude_self) {
  if (queries.empty()) throw InvalidInput("need at least one query");
  if (exclude_self && queries.size() != ix.size()) {
    throw InvalidInput("self-excluding queries must be the index items");
  }
  // Stamp array: marks items already counted for the current query.
  std::vector<std::size_t> stamp(ix.size(), std::numeric_limits<std::size_t>::max());
  double total = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].dim() != ix.code_dim()) throw InvalidInput("query code dimension mismatch");
    std::size_t count = 0;
    for (auto q : queries[i].bits()) {
      for (std::size_t id : ix.bucket(q)) {
        if (stamp[id] == i) continue;
        stamp[id] = i;
        ++count;
      }
    }
    if (exclude_self && stamp[i] == i) --count;
    total += static_cast<double>(count);
  }
  return total / static_cast<double>(queries.size());
}

double measured_suf(const HashIndex& ix, std::span<const HashCode> queries, bool exclude_self) {
  const double mean = mean_candidate_count(ix, queries, exclude_self);
  if (mean == 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(ix.size()) / mean;
}

SufAnalysis theoretical_suf(std::size_t d, std::size_t k) {
  if (k < 1 || k > d) throw InvalidInput("theoretical SUF needs 1 <= k <= d");
  SufAnalysis out;
  if (d < 2 * k) return out;  // any two codes collide
  double p = 1.0;
  for (std::size_t i = 0; i < k; ++i) {
    p *= static_cast<double>(d - k - i) / static_cast<double>(d - i);
  }
  out.no_collision_prob = p;
  out.variance_factor = (1.0 - p) * p;
  out.suf = 1.0 / (1.0 - p);
  return out;
}

SufFraction theoretical_suf_exact(std::size_t d, std::size_t k) {
  if (k < 1 || k > d) throw InvalidInput("theoretical SUF needs 1 <= k <= d");
  if (d < 2 * k) return {1, 1};
  const std::uint64_t total = binomial(d, k);
  const std::uint64_t disjoint = binomial(d - k, k);
  const std::uint64_t colliding = total - disjoint;
  const std::uint64_t g = std::gcd(total, colliding);
  return {total / g, colliding / g};
}

HashCode random_code(std::size_t d, std::size_t k, Rng& rng) {
  if (k < 1 || k > d) throw InvalidInput("random_code needs 1 <= k <= d");
  const auto picks = rng.sample_without_replacement(d, k);
  std::vector<std::uint32_t> bits(picks.begin(), picks.end());
  std::sort(bits.begin(), bits.end());
  return HashCode(d, std::move(bits));
}

SufSimulation simulate_suf(std::size_t n, std::size_t d, std::size_t k, std::size_t queries, Rng& rng) {
  if (n == 0 || queries == 0) throw InvalidInput("simulation needs n >= 1 and at least one query");
  std::vector<HashCode> codes;
  codes.reserve(n);
  for (std::size_t i = 0; i < n; ++i) codes.push_back(random_code(d, k, rng));
  const HashIndex ix(std::move(codes), Matrix(n, 0), std::vector<int>(n, 0));
  std::vector<HashCode> probes;
  probes.reserve(queries);
  for (std::size_t i = 0; i < queries; ++i) probes.push_back(random_code(d, k, rng));

  const SufAnalysis theory = theoretical_suf(d, k);
  const double hit = 1.0 - theory.no_collision_prob;
  SufSimulation out;
  out.mean_candidates = mean_candidate_count(ix, probes);
  out.measured_suf = out.mean_candidates == 0.0 ? std::numeric_limits<double>::infinity()
                                                : static_cast<double>(n) / out.mean_candidates;
  out.expected_candidates = static_cast<double>(n) * hit;
  out.standard_error = std::sqrt(static_cast<double>(n) * theory.variance_factor / static_cast<double>(queries));
  return out;
}

MetricRow evaluate(const std::string& method, const HashIndex& ix, std::span<const HashCode> query_codes,
                   const Matrix& query_embeddings, std::span<const int> query_labels,
                   std::span<const std::size_t> topk, bool exclude_self) {
  if (query_codes.size() != query_embeddings.rows() || query_codes.size() != query_labels.size()) {
    throw InvalidInput("query codes, embeddings and labels must have equal length");
  }
  if (query_codes.empty()) throw InvalidInput("need at least one query");
  MetricRow row;
  row.method = method;
  row.d = ix.code_dim();
  row.k = query_codes.front().k();
  row.topk.assign(topk.begin(), topk.end());
  const std::size_t deepest = topk.empty() ? 1 : *std::max_element(topk.begin(), topk.end());

  std::vector<QueryResult> results;
  results.reserve(query_codes.size());
  for (std::size_t i = 0; i < query_codes.size(); ++i) {
    std::optional<std::size_t> exclude;
    if (exclude_self) exclude = i;
    results.push_back(query(ix, query_codes[i], query_embeddings.row(i), deepest, exclude));
  }
  double candidates = 0.0;
  for (const auto& r : results) candidates += static_cast<double>(r.candidate_count);
  candidates /= static_cast<double>(results.size());
  row.suf = candidates == 0.0 ? std::numeric_limits<double>::infinity()
                              : static_cast<double>(ix.size()) / candidates;
  for (std::size_t K : topk) row.precision.push_back(precision_at(ix, results, query_labels, K));
  const bool single_bit = std::all_of(ix.item_codes().begin(), ix.item_codes().end(),
                                      [](const HashCode& h) { return h.k() == 1; });
  if (single_bit && ix.size() > 0) row.nmi = nmi(ix);
  return row;
}

void write_metric_header(std::ostream& os, std::span<const std::size_t> topk) {
  os << "method,k,d,SUF";
  for (std::size_t K : topk) os << ",pr" << K;
  os << ",nmi\n";
}

void write_metric_row(std::ostream& os, const MetricRow& row) {
  const auto precision = os.precision(6);
  os << row.method << ',' << row.k << ',' << row.d << ',' << row.suf;
  for (double p : row.precision) os << ',' << p;
  os << ',';
  if (row.nmi) os << *row.nmi;
  os << '\n';
  os.precision(precision);
}

}  // namespace qhash
