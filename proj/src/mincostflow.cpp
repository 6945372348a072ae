#include "qhash/mincostflow.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "qhash/core.hpp"

namespace qhash {

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;
// Largest |cost| * path-length product the potentials may reach.
constexpr std::int64_t kCostBudget = std::int64_t{1} << 60;

std::int64_t checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) throw OverflowError("flow cost accumulation overflowed");
  return r;
}

std::int64_t checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) throw OverflowError("flow cost accumulation overflowed");
  return r;
}

// Residual graph stored as paired arcs: arc 2e is forward, 2e+1 its reverse.
class ResidualGraph {
 public:
  explicit ResidualGraph(std::size_t nodes) : nodes_(nodes) {}

  std::size_t add(std::size_t from, std::size_t to, std::int64_t cap, std::int64_t cost) {
    const std::size_t id = head_.size();
    head_.push_back(to);
    head_.push_back(from);
    residual_.push_back(cap);
    residual_.push_back(0);
    cost_.push_back(cost);
    cost_.push_back(-cost);
    return id;
  }

  void finalize() {
    offsets_.assign(nodes_ + 1, 0);
    for (std::size_t a = 0; a < head_.size(); ++a) ++offsets_[tail(a) + 1];
    for (std::size_t v = 0; v < nodes_; ++v) offsets_[v + 1] += offsets_[v];
    adjacency_.resize(head_.size());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t a = 0; a < head_.size(); ++a) adjacency_[fill[tail(a)]++] = a;
  }

  std::size_t nodes() const { return nodes_; }
  std::size_t arcs() const { return head_.size(); }
  std::size_t head(std::size_t a) const { return head_[a]; }
  std::size_t tail(std::size_t a) const { return head_[a ^ 1]; }
  std::int64_t residual(std::size_t a) const { return residual_[a]; }
  std::int64_t cost(std::size_t a) const { return cost_[a]; }
  std::span<const std::size_t> out(std::size_t v) const {
    return std::span<const std::size_t>(adjacency_).subspan(offsets_[v], offsets_[v + 1] - offsets_[v]);
  }

  void push(std::size_t a, std::int64_t amount) {
    residual_[a] -= amount;
    residual_[a ^ 1] += amount;
  }

 private:
  std::size_t nodes_;
  std::vector<std::size_t> head_;
  std::vector<std::int64_t> residual_;
  std::vector<std::int64_t> cost_;
  std::vector<std::size_t> offsets_;
  std::vector<std::size_t> adjacency_;
};

bool has_negative_cycle(const FlowNetwork& net) {
  const bool any_negative = std::any_of(net.edges.begin(), net.edges.end(),
                                        [](const FlowEdge& e) { return e.cost < 0 && e.capacity > 0; });
  if (!any_negative) return false;
  // Virtual root connected to every node with cost 0.
  std::vector<std::int64_t> dist(net.node_count, 0);
  for (std::size_t pass = 0; pass < net.node_count; ++pass) {
    bool changed = false;
    for (const auto& e : net.edges) {
      if (e.capacity == 0) continue;
      if (dist[e.from] + e.cost < dist[e.to]) {
        dist[e.to] = dist[e.from] + e.cost;
        changed = true;
      }
    }
    if (!changed) return false;
  }
  return true;
}

std::vector<std::int64_t> bellman_ford(const ResidualGraph& g, std::size_t root) {
  std::vector<std::int64_t> dist(g.nodes(), kInf);
  dist[root] = 0;
  for (std::size_t pass = 0; pass < g.nodes(); ++pass) {
    bool changed = false;
    for (std::size_t a = 0; a < g.arcs(); ++a) {
      if (g.residual(a) <= 0) continue;
      const std::size_t u = g.tail(a);
      if (dist[u] == kInf) continue;
      const std::int64_t nd = dist[u] + g.cost(a);
      if (nd < dist[g.head(a)]) {
        dist[g.head(a)] = nd;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (auto& d : dist) {
    if (d == kInf) d = 0;
  }
  return dist;
}

}  // namespace

std::size_t FlowNetwork::add_edge(std::size_t from, std::size_t to, std::int64_t capacity,
                                  std::int64_t cost) {
  edges.push_back({from, to, capacity, cost});
  return edges.size() - 1;
}

void FlowNetwork::validate() const {
  if (source >= node_count || sink >= node_count) throw InvalidInput("source/sink out of range");
  if (source == sink) throw InvalidInput("source and sink must differ");
  if (required_flow < 0) throw InvalidInput("required flow must be non-negative");
  std::int64_t source_capacity = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.from >= node_count || e.to >= node_count) {
      throw InvalidInput("edge " + std::to_string(i) + " references a node out of range");
    }
    if (e.from == e.to) throw InvalidInput("edge " + std::to_string(i) + " is a self-loop");
    if (e.capacity < 0) throw InvalidInput("edge " + std::to_string(i) + " has negative capacity");
    if (e.from == source) source_capacity = checked_add(source_capacity, e.capacity);
  }
  if (required_flow > source_capacity) {
    throw InvalidInput("required flow exceeds the total capacity out of the source");
  }
}

namespace {

FlowSolution solution_from(const FlowNetwork& net, const ResidualGraph& g) {
  FlowSolution solution;
  solution.status = FlowStatus::optimal;
  solution.flow_per_edge.resize(net.edges.size());
  for (std::size_t i = 0; i < net.edges.size(); ++i) {
    solution.flow_per_edge[i] = g.residual(2 * i + 1);
  }
  solution.total_cost = flow_cost(net, solution.flow_per_edge);
  return solution;
}

FlowSolution infeasible(const FlowNetwork& net) {
  FlowSolution solution;
  solution.status = FlowStatus::infeasible;
  solution.flow_per_edge.assign(net.edges.size(), 0);
  return solution;
}

FlowSolution solve_ssp(const FlowNetwork& net) {
  const auto n = static_cast<std::int64_t>(net.node_count + 2);
  for (const auto& e : net.edges) {
    if (e.cost > kCostBudget / n || e.cost < -kCostBudget / n) {
      throw OverflowError("edge cost magnitude exceeds the solver's safe integer budget");
    }
  }

  const std::size_t super_source = net.node_count;
  const std::size_t super_sink = net.node_count + 1;
  ResidualGraph g(net.node_count + 2);

  const bool saturate = has_negative_cycle(net);
  std::vector<std::int64_t> excess(net.node_count, 0);
  excess[net.source] += net.required_flow;
  excess[net.sink] -= net.required_flow;
  for (const auto& e : net.edges) {
    g.add(e.from, e.to, e.capacity, e.cost);
  }
  if (saturate) {
    for (std::size_t i = 0; i < net.edges.size(); ++i) {
      const auto& e = net.edges[i];
      if (e.cost < 0 && e.capacity > 0) {
        g.push(2 * i, e.capacity);
        excess[e.to] = checked_add(excess[e.to], e.capacity);
        excess[e.from] = checked_add(excess[e.from], -e.capacity);
      }
    }
  }
  std::int64_t demand = 0;
  for (std::size_t v = 0; v < net.node_count; ++v) {
    if (excess[v] > 0) {
      g.add(super_source, v, excess[v], 0);
      demand = checked_add(demand, excess[v]);
    } else if (excess[v] < 0) {
      g.add(v, super_sink, -excess[v], 0);
    }
  }
  g.finalize();

  std::vector<std::int64_t> potential = bellman_ford(g, super_source);
  std::vector<std::int64_t> dist(g.nodes());
  std::vector<std::size_t> parent_arc(g.nodes());
  std::vector<bool> done(g.nodes());
  using Entry = std::pair<std::int64_t, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> heap;

  std::int64_t routed = 0;
  bool feasible = true;
  while (routed < demand) {
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(done.begin(), done.end(), false);
    heap = {};
    dist[super_source] = 0;
    heap.emplace(0, super_source);
    while (!heap.empty()) {
      const auto [d, u] = heap.top();
      heap.pop();
      if (done[u]) continue;
      done[u] = true;
      if (u == super_sink) break;
      for (std::size_t a : g.out(u)) {
        if (g.residual(a) <= 0) continue;
        const std::size_t v = g.head(a);
        if (done[v]) continue;
        const std::int64_t nd = d + g.cost(a) + potential[u] - potential[v];
        if (nd < dist[v]) {
          dist[v] = nd;
          parent_arc[v] = a;
          heap.emplace(nd, v);
        }
      }
    }
    if (!done[super_sink]) {
      feasible = false;
      break;
    }
    const std::int64_t reach = dist[super_sink];
    for (std::size_t v = 0; v < g.nodes(); ++v) potential[v] += std::min(dist[v], reach);

    std::int64_t amount = demand - routed;
    for (std::size_t v = super_sink; v != super_source; v = g.tail(parent_arc[v])) {
      amount = std::min(amount, g.residual(parent_arc[v]));
    }
    for (std::size_t v = super_sink; v != super_source; v = g.tail(parent_arc[v])) {
      g.push(parent_arc[v], amount);
    }
    routed += amount;
  }

  if (!feasible) return infeasible(net);
  return solution_from(net, g);
}

// Blocking-flow max-flow, stopping once `limit` units reach the sink.
class Dinic {
 public:
  Dinic(ResidualGraph& g, std::size_t source, std::size_t sink)
      : g_(g), source_(source), sink_(sink), level_(g.nodes()), next_(g.nodes()) {}

  std::int64_t run(std::int64_t limit) {
    std::int64_t total = 0;
    while (total < limit && bfs()) {
      std::fill(next_.begin(), next_.end(), 0);
      while (total < limit) {
        const std::int64_t pushed = dfs(source_, limit - total);
        if (pushed == 0) break;
        total += pushed;
      }
    }
    return total;
  }

 private:
  bool bfs() {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> q;
    level_[source_] = 0;
    q.push(source_);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t a : g_.out(u)) {
        const std::size_t v = g_.head(a);
        if (g_.residual(a) > 0 && level_[v] < 0) {
          level_[v] = level_[u] + 1;
          q.push(v);
        }
      }
    }
    return level_[sink_] >= 0;
  }

  std::int64_t dfs(std::size_t u, std::int64_t limit) {
    if (u == sink_) return limit;
    const auto arcs = g_.out(u);
    for (; next_[u] < arcs.size(); ++next_[u]) {
      const std::size_t a = arcs[next_[u]];
      const std::size_t v = g_.head(a);
      if (g_.residual(a) <= 0 || level_[v] != level_[u] + 1) continue;
      const std::int64_t pushed = dfs(v, std::min(limit, g_.residual(a)));
      if (pushed > 0) {
        g_.push(a, pushed);
        return pushed;
      }
    }
    return 0;
  }

  ResidualGraph& g_;
  std::size_t source_;
  std::size_t sink_;
  std::vector<int> level_;
  std::vector<std::size_t> next_;
};

constexpr std::int64_t kScalingFactor = 8;

// Prices stay within a few multiples of n * max|scaled cost| over all
// refinements; keep that well inside int64.
bool cost_scaling_fits(const FlowNetwork& net) {
  std::int64_t max_cost = 0;
  for (const auto& e : net.edges) max_cost = std::max(max_cost, e.cost < 0 ? -e.cost : e.cost);
  const auto n = static_cast<std::int64_t>(net.node_count + 1);
  std::int64_t bound = 0;
  return !__builtin_mul_overflow(max_cost, n * n * 16, &bound) && bound < (std::int64_t{1} << 62);
}

// Epsilon-scaling push-relabel on a feasible flow already stored in g.
void refine_to_optimal(ResidualGraph& g) {
  const std::size_t n = g.nodes();
  const auto multiplier = static_cast<std::int64_t>(n + 1);
  std::vector<std::int64_t> cost(g.arcs());
  std::int64_t eps = 0;
  for (std::size_t a = 0; a < g.arcs(); ++a) {
    cost[a] = g.cost(a) * multiplier;
    eps = std::max(eps, cost[a]);
  }
  std::vector<std::int64_t> price(n, 0);
  std::vector<std::int64_t> excess(n, 0);
  std::vector<std::size_t> current(n, 0);
  std::vector<bool> queued(n, false);
  std::queue<std::size_t> active;

  auto reduced = [&](std::size_t a) { return cost[a] + price[g.tail(a)] - price[g.head(a)]; };

  // With costs scaled by n + 1, a 1-optimal flow is optimal.
  while (eps > 1) {
    eps = std::max<std::int64_t>(1, eps / kScalingFactor);
    for (std::size_t a = 0; a < g.arcs(); ++a) {
      const std::int64_t r = g.residual(a);
      if (r > 0 && reduced(a) < 0) {
        g.push(a, r);
        excess[g.tail(a)] -= r;
        excess[g.head(a)] += r;
      }
    }
    for (std::size_t v = 0; v < n; ++v) {
      current[v] = 0;
      if (excess[v] > 0) {
        queued[v] = true;
        active.push(v);
      }
    }
    while (!active.empty()) {
      const std::size_t v = active.front();
      active.pop();
      queued[v] = false;
      const auto arcs = g.out(v);
      while (excess[v] > 0) {
        if (current[v] == arcs.size()) {
          std::int64_t best = std::numeric_limits<std::int64_t>::min();
          for (std::size_t a : arcs) {
            if (g.residual(a) > 0) best = std::max(best, price[g.head(a)] - cost[a]);
          }
          if (best == std::numeric_limits<std::int64_t>::min()) {
            throw std::logic_error("cost scaling: node with excess has no residual arc");
          }
          price[v] = best - eps;
          current[v] = 0;
          continue;
        }
        const std::size_t a = arcs[current[v]];
        if (g.residual(a) > 0 && reduced(a) < 0) {
          const std::size_t w = g.head(a);
          const std::int64_t amount = std::min(excess[v], g.residual(a));
          g.push(a, amount);
          excess[v] -= amount;
          excess[w] += amount;
          if (excess[w] > 0 && !queued[w]) {
            queued[w] = true;
            active.push(w);
          }
          if (g.residual(a) == 0) ++current[v];
        } else {
          ++current[v];
        }
      }
    }
  }
}

FlowSolution solve_cost_scaling(const FlowNetwork& net) {
  ResidualGraph g(net.node_count);
  for (const auto& e : net.edges) g.add(e.from, e.to, e.capacity, e.cost);
  g.finalize();
  if (Dinic(g, net.source, net.sink).run(net.required_flow) < net.required_flow) return infeasible(net);
  refine_to_optimal(g);
  return solution_from(net, g);
}

}  // namespace

FlowSolution solve_mcf(const FlowNetwork& net, McfAlgorithm algorithm) {
  net.validate();
  if (algorithm == McfAlgorithm::cost_scaling && cost_scaling_fits(net)) return solve_cost_scaling(net);
  return solve_ssp(net);
}

FeasibilityReport check_feasibility(const FlowNetwork& net, std::span<const std::int64_t> flow) {
  FeasibilityReport report;
  auto fail = [&report](std::string msg) {
    report.feasible = false;
    report.violations.push_back(std::move(msg));
  };
  if (flow.size() != net.edges.size()) {
    fail("flow has " + std::to_string(flow.size()) + " entries for " +
         std::to_string(net.edges.size()) + " edges");
    return report;
  }
  std::vector<std::int64_t> balance(net.node_count, 0);  // out minus in
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const auto& e = net.edges[i];
    if (flow[i] < 0 || flow[i] > e.capacity) {
      fail("capacity violated on edge " + std::to_string(i) + ": flow " + std::to_string(flow[i]) +
           " not in [0, " + std::to_string(e.capacity) + "]");
    }
    if (e.from < net.node_count && e.to < net.node_count) {
      balance[e.from] += flow[i];
      balance[e.to] -= flow[i];
    }
  }
  for (std::size_t v = 0; v < net.node_count; ++v) {
    if (v == net.source || v == net.sink) continue;
    if (balance[v] != 0) {
      fail("conservation violated at node " + std::to_string(v) + ": net out-flow " +
           std::to_string(balance[v]));
    }
  }
  if (net.source < net.node_count && balance[net.source] != net.required_flow) {
    fail("source net out-flow " + std::to_string(balance[net.source]) + " != required " +
         std::to_string(net.required_flow));
  }
  if (net.sink < net.node_count && balance[net.sink] != -net.required_flow) {
    fail("sink net in-flow " + std::to_string(-balance[net.sink]) + " != required " +
         std::to_string(net.required_flow));
  }
  return report;
}

std::int64_t flow_cost(const FlowNetwork& net, std::span<const std::int64_t> flow) {
  if (flow.size() != net.edges.size()) throw InvalidInput("flow length does not match edge count");
  std::int64_t total = 0;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    total = checked_add(total, checked_mul(flow[i], net.edges[i].cost));
  }
  return total;
}

void write_network(std::ostream& os, const FlowNetwork& net) {
  os << "# nodes=" << net.node_count << " source=" << net.source << " sink=" << net.sink
     << " flow=" << net.required_flow << '\n';
  for (const auto& e : net.edges) {
    os << e.from << ' ' << e.to << ' ' << e.capacity << ' ' << e.cost << '\n';
  }
}

FlowNetwork read_network(std::istream& is) {
  FlowNetwork net;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = line.substr(1);
      for (char& c : body) {
        if (c == '=') c = ' ';
      }
      std::istringstream hs(body);
      std::string key;
      long long value = 0;
      while (hs >> key >> value) {
        if (key == "nodes") net.node_count = static_cast<std::size_t>(value);
        else if (key == "source") net.source = static_cast<std::size_t>(value);
        else if (key == "sink") net.sink = static_cast<std::size_t>(value);
        else if (key == "flow") net.required_flow = value;
        else throw InvalidInput("line " + std::to_string(line_no) + ": unknown header key '" + key + "'");
      }
      header = true;
      continue;
    }
    std::istringstream ls(line);
    long long from, to, cap, cost;
    if (!(ls >> from >> to >> cap >> cost) || from < 0 || to < 0) {
      throw InvalidInput("line " + std::to_string(line_no) + ": expected 'from to cap cost'");
    }
    net.add_edge(static_cast<std::size_t>(from), static_cast<std::size_t>(to), cap, cost);
  }
  if (!header) throw InvalidInput("network dump is missing its '# nodes=...' header");
  net.validate();
  return net;
}

}  // namespace qhash
