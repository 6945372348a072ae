// Independent reference implementations used only by the tests. They favour
// obviousness over speed and share no code with the library beyond types.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "qhash/core.hpp"
#include "qhash/mincostflow.hpp"

namespace oracle {

// Minimum cost over every integral flow vector with 0 <= f_e <= cap_e that
// conserves flow and ships exactly required_flow. Exponential in edges.
inline std::optional<std::int64_t> brute_force_mcf(const qhash::FlowNetwork& net) {
  const std::size_t m = net.edges.size();
  std::vector<std::int64_t> flow(m, 0);
  std::optional<std::int64_t> best;
  std::function<void(std::size_t)> rec = [&](std::size_t e) {
    if (e == m) {
      std::vector<std::int64_t> out(net.node_count, 0);
      std::int64_t cost = 0;
      for (std::size_t i = 0; i < m; ++i) {
        out[net.edges[i].from] += flow[i];
        out[net.edges[i].to] -= flow[i];
        cost += flow[i] * net.edges[i].cost;
      }
      for (std::size_t v = 0; v < net.node_count; ++v) {
        const std::int64_t want = v == net.source ? net.required_flow
                                  : v == net.sink ? -net.required_flow
                                                  : 0;
        if (out[v] != want) return;
      }
      if (!best || cost < *best) best = cost;
      return;
    }
    for (std::int64_t f = 0; f <= net.edges[e].capacity; ++f) {
      flow[e] = f;
      rec(e + 1);
    }
    flow[e] = 0;
  };
  rec(0);
  return best;
}

inline std::int64_t round_half_even(double x) { return static_cast<std::int64_t>(std::nearbyint(x)); }

// Scaled class-level objective summed pair by pair over ordered pairs i != j.
inline std::int64_t scaled_objective(const qhash::Matrix& means, const std::vector<double>& lambda,
                                     const std::vector<std::vector<int>>& z, std::int64_t scale) {
  const std::size_t n_c = means.rows();
  const std::size_t d = means.cols();
  std::int64_t total = 0;
  for (std::size_t p = 0; p < n_c; ++p) {
    for (std::size_t q = 0; q < d; ++q) {
      if (z[p][q]) total -= round_half_even(means(p, q) * static_cast<double>(scale));
    }
  }
  for (std::size_t i = 0; i < n_c; ++i) {
    for (std::size_t j = 0; j < n_c; ++j) {
      if (i == j) continue;
      for (std::size_t q = 0; q < d; ++q) {
        if (z[i][q] && z[j][q]) total += round_half_even(lambda[q] * static_cast<double>(scale));
      }
    }
  }
  return total;
}

// All 0/1 vectors of length d with exactly k ones.
inline std::vector<std::vector<int>> k_subsets(std::size_t d, std::size_t k) {
  std::vector<std::vector<int>> out;
  for (std::uint32_t mask = 0; mask < (1u << d); ++mask) {
    if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
    std::vector<int> z(d);
    for (std::size_t q = 0; q < d; ++q) z[q] = (mask >> q) & 1u;
    out.push_back(z);
  }
  return out;
}

// Minimum of the scaled objective over all C(d,k)^n_c configurations.
inline std::int64_t enumerate_assignment(const qhash::Matrix& means, const std::vector<double>& lambda,
                                         std::size_t k, std::int64_t scale) {
  const auto subsets = k_subsets(means.cols(), k);
  const std::size_t n_c = means.rows();
  std::vector<std::size_t> pick(n_c, 0);
  std::vector<std::vector<int>> z(n_c);
  std::optional<std::int64_t> best;
  while (true) {
    for (std::size_t p = 0; p < n_c; ++p) z[p] = subsets[pick[p]];
    const std::int64_t v = scaled_objective(means, lambda, z, scale);
    if (!best || v < *best) best = v;
    std::size_t p = 0;
    while (p < n_c && ++pick[p] == subsets.size()) pick[p++] = 0;
    if (p == n_c) break;
  }
  return *best;
}

inline std::vector<int> dense(const qhash::HashCode& h) {
  std::vector<int> z(h.dim(), 0);
  for (auto q : h.bits()) z[q] = 1;
  return z;
}

// Linear scan: item i is a candidate iff its code shares a set bit with the
// query, checked coordinate by coordinate.
inline std::vector<std::size_t> scan_candidates(const std::vector<qhash::HashCode>& codes,
                                                const qhash::HashCode& query,
                                                std::optional<std::size_t> exclude) {
  const auto zq = dense(query);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (exclude && *exclude == i) continue;
    const auto zi = dense(codes[i]);
    bool hit = false;
    for (std::size_t q = 0; q < zq.size(); ++q) hit = hit || (zq[q] && zi[q]);
    if (hit) out.push_back(i);
  }
  return out;
}

// Full sort of the candidates by (Euclidean distance, id), truncated.
inline std::vector<std::size_t> brute_rerank(const qhash::Matrix& base, std::span<const double> q,
                                             std::vector<std::size_t> cands, std::size_t top_m) {
  auto dist = [&](std::size_t i) {
    double s = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) s += (base(i, j) - q[j]) * (base(i, j) - q[j]);
    return std::sqrt(s);
  };
  std::sort(cands.begin(), cands.end(), [&](std::size_t a, std::size_t b) {
    const double da = dist(a), db = dist(b);
    return da != db ? da < db : a < b;
  });
  if (cands.size() > top_m) cands.resize(top_m);
  return cands;
}

// NMI with base-2 logs over an explicit contingency table.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<int, int> ia, ib;
  for (int x : a) ia.emplace(x, static_cast<int>(ia.size()));
  for (int x : b) ib.emplace(x, static_cast<int>(ib.size()));
  std::vector<std::vector<double>> table(ia.size(), std::vector<double>(ib.size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i) table[ia[a[i]]][ib[b[i]]] += 1.0;
  const double n = static_cast<double>(a.size());
  std::vector<double> ra(ia.size(), 0.0), rb(ib.size(), 0.0);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    for (std::size_t j = 0; j < rb.size(); ++j) {
      ra[i] += table[i][j];
      rb[j] += table[i][j];
    }
  }
  auto h = [n](const std::vector<double>& counts) {
    double s = 0.0;
    for (double c : counts) {
      if (c > 0) s -= c / n * std::log2(c / n);
    }
    return s;
  };
  double mi = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    for (std::size_t j = 0; j < rb.size(); ++j) {
      if (table[i][j] > 0) mi += table[i][j] / n * std::log2(table[i][j] * n / (ra[i] * rb[j]));
    }
  }
  const double ha = h(ra), hb = h(rb);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  return mi / ((ha + hb) / 2.0);
}

}  // namespace oracle
