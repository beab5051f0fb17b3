#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace sbmsel {

// One undirected multi-edge, canonical orientation u < v.
struct Edge {
  std::int32_t u = 0;
  std::int32_t v = 0;
  std::int64_t mult = 1;
};

// Immutable sparse undirected multigraph. Self-loops are never stored; the
// count of dropped self-loop lines is kept for diagnostics. Invariants:
// edges sorted by (u, v) with u < v and unique; sum(degrees) == 2*m.
struct Graph {
  std::int32_t n = 0;
  std::int64_t m = 0;  // total edge count, counting multiplicity
  std::vector<Edge> edges;
  std::vector<std::int64_t> degrees;      // d_u = sum_v a_uv
  std::vector<std::string> node_names;    // dense id -> original token
  std::int64_t self_loops_dropped = 0;

  // CSR adjacency over directed slots (two per undirected edge). For slot s
  // owned by u: adj_node[s] is the neighbor, adj_mult[s] the multiplicity,
  // adj_reverse[s] the slot of the opposite direction, adj_edge[s] the index
  // into edges.
  std::vector<std::int64_t> adj_offset;   // n + 1
  std::vector<std::int32_t> adj_node;
  std::vector<std::int64_t> adj_mult;
  std::vector<std::int64_t> adj_reverse;
  std::vector<std::int64_t> adj_edge;

  // Degree classes: nodes grouped by distinct degree value (ascending).
  std::vector<std::int64_t> degree_values;  // distinct degrees, size l
  std::vector<std::int32_t> degree_class;   // per node, index into degree_values
  std::vector<std::int64_t> class_offset;   // l + 1
  std::vector<std::int32_t> class_nodes;    // node ids grouped by class

  std::int64_t degree_class_count() const {
    return static_cast<std::int64_t>(degree_values.size());
  }
};

// Normalizes (swaps to u < v, drops self-loops, merges duplicates by summing
// multiplicity) and builds all derived structure. Node names default to the
// decimal index when `names` is empty.
Graph build_graph(std::int32_t n, std::vector<Edge> edges,
                  std::vector<std::string> names = {});

struct LoadOptions {
  // Duplicate (u, v) lines sum their multiplicities when true; otherwise a
  // duplicate is a hard error.
  bool sum_duplicates = true;
};

// Reads "u v" or "u v w" lines; tokens are arbitrary node names mapped to
// dense ids in first-appearance order, '#' starts a comment line, w must be a
// positive integer. Self-loop lines are dropped and counted. Throws
// std::runtime_error with the offending line number on malformed input.
Graph load_edge_list(std::istream& in, const LoadOptions& options = {});

// Writes the canonical edge list using original node names; multiplicity is
// emitted as a third column when it exceeds 1. load_edge_list on the output
// reproduces the Graph exactly.
void write_edge_list(const Graph& graph, std::ostream& out);

// A labeling of nodes into k blocks plus the counts every estimator needs.
// block_edge_counts is k*k row-major with the diagonal holding twice the
// within-block edge count, so all entries sum to 2*m.
struct BlockAssignment {
  std::vector<std::int32_t> labels;  // per node, in [0, k)
  std::int32_t k = 0;
  std::vector<std::int64_t> block_sizes;        // n_r
  std::vector<std::int64_t> block_edge_counts;  // m_rs
  std::vector<double> block_mean_degrees;       // (1/n_r) sum of d_u, 0 if empty

  std::int64_t m_rs(std::int32_t r, std::int32_t s) const {
    return block_edge_counts[static_cast<std::size_t>(r) * k + s];
  }
};

// Exact counts for the given labeling. Throws std::invalid_argument on label
// out of [0, k) or length mismatch.
BlockAssignment block_statistics(const Graph& graph,
                                 std::span<const std::int32_t> labels,
                                 std::int32_t k);

}  // namespace sbmsel
