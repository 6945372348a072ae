#include "qhash/codes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qhash {

namespace {

// Scaled costs must convert exactly to int64 and leave headroom for sums.
constexpr double kScaledCostBudget = 0x1.0p52;

std::int64_t scale_value(double x, std::int64_t scale) {
  const double scaled = x * static_cast<double>(scale);
  if (!std::isfinite(scaled) || std::fabs(scaled) > kScaledCostBudget) {
    throw OverflowError("scaled cost exceeds the safe integer budget");
  }
  // nearbyint honours the default round-half-to-even mode.
  return static_cast<std::int64_t>(std::nearbyint(scaled));
}

std::int64_t add_checked(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw OverflowError("scaled objective overflowed");
  return r;
}

void check_codes(const AssignmentProblem& p, std::span<const HashCode> codes) {
  if (codes.size() != p.num_classes()) throw InvalidInput("need exactly one code per class");
  for (const auto& z : codes) {
    if (z.dim() != p.dim() || z.k() != p.k) throw InvalidInput("class code has wrong d or k");
  }
}

std::vector<std::vector<std::uint32_t>> all_combinations(std::size_t d, std::size_t k) {
  std::vector<std::vector<std::uint32_t>> out;
  std::vector<std::uint32_t> cur(k);
  std::iota(cur.begin(), cur.end(), 0u);
  while (true) {
    out.push_back(cur);
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == d - k + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

}  // namespace

void AssignmentProblem::validate() const {
  if (num_classes() == 0) throw InvalidInput("assignment problem has no classes");
  if (k < 1 || k > dim()) throw InvalidInput("sparsity k must satisfy 1 <= k <= d");
  if (!means.all_finite()) throw InvalidInput("class means must be finite");
  if (lambda.size() != dim()) throw InvalidInput("lambda must have length d");
  for (double l : lambda) {
    if (!std::isfinite(l) || l < 0.0) throw InvalidInput("lambda entries must be finite and >= 0");
  }
}

HashCode topk_hash(std::span<const double> embedding, std::size_t k) {
  const std::size_t d = embedding.size();
  if (k < 1 || k > d) throw InvalidInput("topk_hash needs 1 <= k <= d");
  for (double x : embedding) {
    if (!std::isfinite(x)) throw InvalidInput("topk_hash input contains non-finite values");
  }
  std::vector<std::uint32_t> order(d);
  std::iota(order.begin(), order.end(), 0u);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (embedding[a] != embedding[b]) return embedding[a] > embedding[b];
                      return a < b;
                    });
  order.resize(k);
  std::sort(order.begin(), order.end());
  return HashCode(d, std::move(order));
}

ScaledCosts scale_costs(const AssignmentProblem& p, std::int64_t scale) {
  if (scale <= 0) throw InvalidInput("cost scale must be positive");
  ScaledCosts sc;
  sc.dim = p.dim();
  sc.unary.reserve(p.num_classes() * p.dim());
  for (double c : p.means.values()) sc.unary.push_back(scale_value(c, scale));
  for (double l : p.lambda) {
    const std::int64_t pen = scale_value(l, scale);
    // The most expensive sink edge costs 2 (n_c - 1) pen.
    if (static_cast<double>(pen) * 2.0 * static_cast<double>(p.num_classes()) > kScaledCostBudget) {
      throw OverflowError("pairwise penalty exceeds the safe integer budget");
    }
    sc.pair_penalty.push_back(pen);
  }
  return sc;
}

FlowNetwork build_flow_network(const AssignmentProblem& p, std::int64_t scale) {
  p.validate();
  const ScaledCosts sc = scale_costs(p, scale);
  const FlowLayout layout{p.num_classes(), p.dim()};
  const auto n_c = static_cast<std::int64_t>(p.num_classes());

  FlowNetwork net;
  net.node_count = layout.node_count();
  net.source = layout.source();
  net.sink = layout.sink();
  net.required_flow = n_c * static_cast<std::int64_t>(p.k);
  net.edges.reserve(layout.edge_count());
  for (std::size_t a = 0; a < p.num_classes(); ++a) {
    net.add_edge(layout.source(), layout.class_node(a), static_cast<std::int64_t>(p.k), 0);
  }
  for (std::size_t a = 0; a < p.num_classes(); ++a) {
    for (std::size_t q = 0; q < p.dim(); ++q) {
      net.add_edge(layout.class_node(a), layout.bit_node(q), 1, -sc.unary_at(a, q));
    }
  }
  for (std::size_t q = 0; q < p.dim(); ++q) {
    for (std::int64_t r = 0; r < n_c; ++r) {
      net.add_edge(layout.bit_node(q), layout.sink(), 1, 2 * r * sc.pair_penalty[q]);
    }
  }
  return net;
}

AssignmentSolution solve_assignment(const AssignmentProblem& p, std::int64_t scale,
                                    McfAlgorithm algorithm) {
  p.validate();
  AssignmentSolution out;
  if (p.k == p.dim()) {
    // Every class must take every bit.
    std::vector<std::uint32_t> all(p.dim());
    std::iota(all.begin(), all.end(), 0u);
    out.codes.assign(p.num_classes(), HashCode(p.dim(), all));
  } else {
    const FlowNetwork net = build_flow_network(p, scale);
    const FlowSolution flow = solve_mcf(net, algorithm);
    if (flow.status != FlowStatus::optimal) {
      throw InvalidInput("code assignment network has no feasible flow");
    }
    const FlowLayout layout{p.num_classes(), p.dim()};
    out.codes.reserve(p.num_classes());
    for (std::size_t a = 0; a < p.num_classes(); ++a) {
      std::vector<std::uint32_t> bits;
      for (std::size_t q = 0; q < p.dim(); ++q) {
        if (flow.flow_per_edge[layout.class_bit_edge(a, q)] > 0) {
          bits.push_back(static_cast<std::uint32_t>(q));
        }
      }
      out.codes.emplace_back(p.dim(), std::move(bits));
    }
    out.scaled_cost = flow.total_cost;
  }
  if (p.k == p.dim()) out.scaled_cost = scaled_assignment_objective(p, out.codes, scale);
  out.objective = assignment_objective(p, out.codes);
  return out;
}

AssignmentSolution brute_force_assignment(const AssignmentProblem& p, std::int64_t scale) {
  p.validate();
  const auto combos = all_combinations(p.dim(), p.k);
  const std::size_t n_c = p.num_classes();
  std::vector<std::size_t> choice(n_c, 0);
  std::vector<HashCode> codes(n_c, HashCode(p.dim(), combos[0]));

  AssignmentSolution best;
  bool have_best = false;
  while (true) {
    for (std::size_t a = 0; a < n_c; ++a) codes[a] = HashCode(p.dim(), combos[choice[a]]);
    const std::int64_t cost = scaled_assignment_objective(p, codes, scale);
    if (!have_best || cost < best.scaled_cost) {
      best.codes = codes;
      best.scaled_cost = cost;
      have_best = true;
    }
    std::size_t a = n_c;
    while (a > 0 && choice[a - 1] + 1 == combos.size()) {
      choice[a - 1] = 0;
      --a;
    }
    if (a == 0) break;
    ++choice[a - 1];
  }
  best.objective = assignment_objective(p, best.codes);
  return best;
}

double assignment_objective(const AssignmentProblem& p, std::span<const HashCode> codes) {
  check_codes(p, codes);
  double unary = 0.0;
  for (std::size_t a = 0; a < codes.size(); ++a) {
    for (auto q : codes[a].bits()) unary -= p.means(a, q);
  }
  double pairwise = 0.0;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t j = 0; j < codes.size(); ++j) {
      if (i == j) continue;
      for (auto q : codes[i].bits()) {
        if (codes[j].contains(q)) pairwise += p.lambda[q];
      }
    }
  }
  return unary + pairwise;
}

std::int64_t scaled_assignment_objective(const AssignmentProblem& p, std::span<const HashCode> codes,
                                         std::int64_t scale) {
  check_codes(p, codes);
  const ScaledCosts sc = scale_costs(p, scale);
  std::int64_t total = 0;
  for (std::size_t a = 0; a < codes.size(); ++a) {
    for (auto q : codes[a].bits()) total = add_checked(total, -sc.unary_at(a, q));
  }
  for (std::size_t i = 0; i < codes.size(); ++i) {
    for (std::size_t j = 0; j < codes.size(); ++j) {
      if (i == j) continue;
      for (auto q : codes[i].bits()) {
        if (codes[j].contains(q)) total = add_checked(total, sc.pair_penalty[q]);
      }
    }
  }
  return total;
}

std::vector<std::int64_t> configuration_flow(const AssignmentProblem& p,
                                             std::span<const HashCode> codes) {
  check_codes(p, codes);
  const FlowLayout layout{p.num_classes(), p.dim()};
  std::vector<std::int64_t> flow(layout.edge_count(), 0);
  std::vector<std::size_t> load(p.dim(), 0);
  for (std::size_t a = 0; a < p.num_classes(); ++a) {
    flow[layout.source_edge(a)] = static_cast<std::int64_t>(p.k);
    for (auto q : codes[a].bits()) {
      flow[layout.class_bit_edge(a, q)] = 1;
      ++load[q];
    }
  }
  for (std::size_t q = 0; q < p.dim(); ++q) {
    for (std::size_t r = 0; r < load[q]; ++r) flow[layout.sink_edge(q, r)] = 1;
  }
  return flow;
}

double eval_objective_g(const EmbeddingSet& e, std::span<const HashCode> item_codes,
                        std::span<const double> lambda) {
  if (item_codes.size() != e.size()) throw InvalidInput("need one code per item");
  if (lambda.size() != e.dim()) throw InvalidInput("lambda must have length d");
  const std::size_t d = e.dim();
  double unary = 0.0;
  // count[c][q]: items of class c whose code sets bit q.
  std::vector<std::vector<double>> count(e.num_classes(), std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto& h = item_codes[i];
    if (h.dim() != d) throw InvalidInput("item code has wrong dimension");
    const auto f = e.embedding(i);
    for (auto q : h.bits()) {
      unary -= f[q];
      count[static_cast<std::size_t>(e.labels()[i])][q] += 1.0;
    }
  }
  // Pairs (i, j) in different classes sharing bit q:
  // (sum_c count)^2 - sum_c count^2.
  double pairwise = 0.0;
  for (std::size_t q = 0; q < d; ++q) {
    double total = 0.0;
    double same = 0.0;
    for (const auto& row : count) {
      total += row[q];
      same += row[q] * row[q];
    }
    pairwise += lambda[q] * (total * total - same);
  }
  return unary + pairwise;
}

double eval_bound_gap_M(const EmbeddingSet& e, std::size_t k) {
  if (k < 1 || k > e.dim()) throw InvalidInput("bound gap needs 1 <= k <= d");
  const Matrix means = class_means(e);
  std::vector<double> dev(e.dim());
  double gap = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto f = e.embedding(i);
    const auto c = means.row(static_cast<std::size_t>(e.labels()[i]));
    for (std::size_t q = 0; q < dev.size(); ++q) dev[q] = c[q] - f[q];
    std::nth_element(dev.begin(), dev.begin() + static_cast<std::ptrdiff_t>(k - 1), dev.end(),
                     std::greater<>());
    for (std::size_t j = 0; j < k; ++j) gap += dev[j];
  }
  // Non-negative in exact arithmetic; only rounding noise can push it below 0.
  const double tolerance = 1e-9 * (1.0 + static_cast<double>(e.size() * k));
  if (gap < -tolerance) throw std::logic_error("bound gap came out negative");
  return std::max(gap, 0.0);
}

double eval_upper_bound(const EmbeddingSet& e, std::span<const HashCode> item_codes,
                        std::span<const double> lambda, std::size_t k) {
  if (item_codes.size() != e.size()) throw InvalidInput("need one code per item");
  const Matrix means = class_means(e);
  // Pairwise term is shared with g; reuse it by evaluating g on the means.
  Matrix mean_rows(e.size(), e.dim());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto c = means.row(static_cast<std::size_t>(e.labels()[i]));
    std::copy(c.begin(), c.end(), mean_rows.row(i).begin());
  }
  const EmbeddingSet at_means(std::move(mean_rows), std::vector<int>(e.labels().begin(), e.labels().end()));
  return eval_objective_g(at_means, item_codes, lambda) + eval_bound_gap_M(e, k);
}

std::vector<HashCode> expand_class_codes(std::span<const HashCode> class_codes,
                                         std::span<const int> labels) {
  std::vector<HashCode> out;
  out.reserve(labels.size());
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_codes.size()) {
      throw InvalidInput("label " + std::to_string(y) + " has no class code");
    }
    out.push_back(class_codes[static_cast<std::size_t>(y)]);
  }
  return out;
}

std::vector<HashCode> group_item_codes(std::span<const HashCode> item_codes,
                                       std::span<const int> labels, std::size_t num_classes) {
  if (item_codes.size() != labels.size()) throw InvalidInput("need one code per label");
  std::vector<HashCode> out(num_classes);
  std::vector<bool> seen(num_classes, false);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) throw InvalidInput("label out of range");
    const auto c = static_cast<std::size_t>(y);
    if (!seen[c]) {
      out[c] = item_codes[i];
      seen[c] = true;
    } else if (!(out[c] == item_codes[i])) {
      throw InvalidInput("items of class " + std::to_string(c) + " carry different codes");
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw InvalidInput("some class has no items");
  }
  return out;
}

std::vector<double> default_lambda(const Matrix& means) {
  double total = 0.0;
  for (double x : means.values()) total += std::fabs(x);
  const double avg = means.empty() ? 0.0 : total / static_cast<double>(means.values().size());
  return std::vector<double>(means.cols(), 0.5 * avg);
}

}  // namespace qhash
