#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace qhash {

struct FlowEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  std::int64_t capacity = 0;
  std::int64_t cost = 0;

  friend bool operator==(const FlowEdge&, const FlowEdge&) = default;
};

/// Directed multigraph with integer capacities and costs. Parallel edges are
/// kept distinct; edge order is significant (flows are reported per edge).
struct FlowNetwork {
  std::size_t node_count = 0;
  std::vector<FlowEdge> edges;
  std::size_t source = 0;
  std::size_t sink = 0;
  std::int64_t required_flow = 0;

  std::size_t add_edge(std::size_t from, std::size_t to, std::int64_t capacity, std::int64_t cost);
  /// Throws InvalidInput on self-loops, negative capacities, bad node ids or a
  /// required flow larger than the source's total out-capacity.
  void validate() const;

  friend bool operator==(const FlowNetwork&, const FlowNetwork&) = default;
};

enum class FlowStatus { optimal, infeasible };

struct FlowSolution {
  std::vector<std::int64_t> flow_per_edge;
  std::int64_t total_cost = 0;
  FlowStatus status = FlowStatus::infeasible;

  friend bool operator==(const FlowSolution&, const FlowSolution&) = default;
};

enum class McfAlgorithm {
  // Successive shortest augmenting paths with node potentials: Bellman-Ford
  // seeds the potentials (costs may be negative), Dijkstra on reduced costs
  // finds each augmenting path. Networks with a negative-cost cycle are
  // handled by pre-saturating every negative edge and routing the resulting
  // imbalances through a super source/sink. Runs one Dijkstra per unit of
  // flow on unit-capacity networks.
  successive_shortest_paths,
  // Goldberg-Tarjan cost scaling: a max-flow gives a feasible flow, then
  // epsilon-scaled push-relabel refines it to optimality. Falls back to
  // successive shortest paths when scaled prices could overflow.
  cost_scaling,
};

/// Minimum-cost flow of exactly `required_flow` units from source to sink,
/// optimal over all feasible flows (circulations included). Deterministic
/// for a fixed algorithm; the two algorithms agree on total cost but may
/// return different optimal flows.
///
/// Throws OverflowError when cost magnitudes could overflow 64-bit
/// accumulation, InvalidInput when the network is malformed.
FlowSolution solve_mcf(const FlowNetwork& net,
                       McfAlgorithm algorithm = McfAlgorithm::successive_shortest_paths);

struct FeasibilityReport {
  bool feasible = true;
  std::vector<std::string> violations;
};

/// Checks capacity bounds, conservation at interior nodes and that the net
/// out-flow of the source equals required_flow. Never throws on a bad flow;
/// every violation is listed.
FeasibilityReport check_feasibility(const FlowNetwork& net, std::span<const std::int64_t> flow);

/// Sum of cost * flow with overflow detection.
std::int64_t flow_cost(const FlowNetwork& net, std::span<const std::int64_t> flow);

// Text fixtures: a header `# nodes=N source=S sink=T flow=F` followed by one
// `from to cap cost` line per edge.
void write_network(std::ostream& os, const FlowNetwork& net);
FlowNetwork read_network(std::istream& is);

}  // namespace qhash
