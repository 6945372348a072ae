#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qhash/core.hpp"
#include "qhash/mincostflow.hpp"

namespace qhash {

inline constexpr std::int64_t kDefaultCostScale = 1'000'000;

/// Class-level code assignment: choose one k-sparse code z_i per class mean
/// c_i minimizing  sum_i -c_i^T z_i + sum_{i != j} z_i^T diag(lambda) z_j.
struct AssignmentProblem {
  Matrix means;                // n_c x d
  std::vector<double> lambda;  // length d, >= 0
  std::size_t k = 1;

  std::size_t num_classes() const { return means.rows(); }
  std::size_t dim() const { return means.cols(); }
  void validate() const;
};

struct AssignmentSolution {
  std::vector<HashCode> codes;  // one per class
  double objective = 0.0;       // real-valued objective of `codes`
  std::int64_t scaled_cost = 0; // objective under the integer-scaled costs
};

/// Indices of the k largest coordinates, ties to the lower index.
HashCode topk_hash(std::span<const double> embedding, std::size_t k);

/// Integer costs the solver sees: unary(p, q) = round(c_p[q] * scale) and
/// pair_penalty[q] = round(lambda_q * scale), rounded half to even.
struct ScaledCosts {
  std::size_t dim = 0;
  std::vector<std::int64_t> unary;  // row-major n_c x d
  std::vector<std::int64_t> pair_penalty;

  std::int64_t unary_at(std::size_t p, std::size_t q) const { return unary[p * dim + q]; }
};
ScaledCosts scale_costs(const AssignmentProblem& p, std::int64_t scale);

/// Edge layout of the network built by build_flow_network.
struct FlowLayout {
  std::size_t num_classes;
  std::size_t dim;

  std::size_t source() const { return 0; }
  std::size_t class_node(std::size_t p) const { return 1 + p; }
  std::size_t bit_node(std::size_t q) const { return 1 + num_classes + q; }
  std::size_t sink() const { return 1 + num_classes + dim; }
  std::size_t node_count() const { return 2 + num_classes + dim; }

  std::size_t source_edge(std::size_t p) const { return p; }
  std::size_t class_bit_edge(std::size_t p, std::size_t q) const { return num_classes + p * dim + q; }
  /// The r-th parallel edge from bit node q to the sink, r in [0, n_c).
  std::size_t sink_edge(std::size_t q, std::size_t r) const {
    return num_classes + num_classes * dim + q * num_classes + r;
  }
  std::size_t edge_count() const { return num_classes + 2 * num_classes * dim; }
};

/// s -> class p (cap k, cost 0); class p -> bit q (cap 1, cost -C[p][q]);
/// bit q -> t through n_c parallel edges r = 0..n_c-1 (cap 1, cost 2 r L[q]),
/// with C, L the scaled costs. Required flow n_c * k.
FlowNetwork build_flow_network(const AssignmentProblem& p, std::int64_t scale = kDefaultCostScale);

/// Exact minimizer of the class-level objective under the scaled costs.
/// Cost scaling is the default: its running time grows close to linearly in
/// n_c, where successive shortest paths pays one Dijkstra per unit of flow.
AssignmentSolution solve_assignment(const AssignmentProblem& p,
                                    std::int64_t scale = kDefaultCostScale,
                                    McfAlgorithm algorithm = McfAlgorithm::cost_scaling);

/// Exhaustive search over all C(d,k)^n_c configurations. Small inputs only.
AssignmentSolution brute_force_assignment(const AssignmentProblem& p,
                                          std::int64_t scale = kDefaultCostScale);

/// Real-valued class-level objective evaluated pair by pair.
double assignment_objective(const AssignmentProblem& p, std::span<const HashCode> codes);
/// The same objective in the scaled integer costs.
std::int64_t scaled_assignment_objective(const AssignmentProblem& p, std::span<const HashCode> codes,
                                         std::int64_t scale = kDefaultCostScale);

/// The flow a configuration induces on build_flow_network's graph: k on each
/// source edge, z_p[q] on class->bit edges and the first y_q sink edges of
/// bit q saturated, where y_q counts the classes using bit q.
std::vector<std::int64_t> configuration_flow(const AssignmentProblem& p,
                                             std::span<const HashCode> codes);

/// Per-item objective: sum_i -f_i^T h_i + sum_i sum_{j: y_j != y_i} h_i^T diag(lambda) h_j.
double eval_objective_g(const EmbeddingSet& e, std::span<const HashCode> item_codes,
                        std::span<const double> lambda);

/// Bound gap: sum over items of the k largest entries of (c_{y_i} - f_i).
/// Always >= 0.
double eval_bound_gap_M(const EmbeddingSet& e, std::size_t k);

/// Upper bound on eval_objective_g: the class-mean unary term plus the
/// pairwise term plus the bound gap.
double eval_upper_bound(const EmbeddingSet& e, std::span<const HashCode> item_codes,
                        std::span<const double> lambda, std::size_t k);

std::vector<HashCode> expand_class_codes(std::span<const HashCode> class_codes,
                                         std::span<const int> labels);
/// Inverse of expand_class_codes. Throws if items of one class disagree.
std::vector<HashCode> group_item_codes(std::span<const HashCode> item_codes,
                                       std::span<const int> labels, std::size_t num_classes);

/// Uniform lambda_q = 0.5 * mean |c_i[q]| over all entries of `means`.
std::vector<double> default_lambda(const Matrix& means);

}  // namespace qhash
