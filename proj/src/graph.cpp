#include "sbmsel/graph.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>

namespace sbmsel {

namespace {

[[noreturn]] void fail_line(std::int64_t line_no, const std::string& what) {
  std::ostringstream os;
  os << "edge list line " << line_no << ": " << what;
  throw std::runtime_error(os.str());
}

}  // namespace

Graph build_graph(std::int32_t n, std::vector<Edge> edges,
                  std::vector<std::string> names) {
  if (n < 0) throw std::invalid_argument("node count must be nonnegative");
  Graph g;
  g.n = n;

  for (auto& e : edges) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) {
      throw std::invalid_argument("edge endpoint out of range");
    }
    if (e.mult <= 0) throw std::invalid_argument("edge multiplicity must be positive");
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  std::erase_if(edges, [&g](const Edge& e) {
    if (e.u == e.v) {
      ++g.self_loops_dropped;
      return true;
    }
    return false;
  });
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    return a.u != b.u ? a.u < b.u : a.v < b.v;
  });
  // merge duplicates in place
  std::size_t out = 0;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (out > 0 && edges[out - 1].u == edges[i].u && edges[out - 1].v == edges[i].v) {
      edges[out - 1].mult += edges[i].mult;
    } else {
      edges[out++] = edges[i];
    }
  }
  edges.resize(out);
  g.edges = std::move(edges);

  g.degrees.assign(n, 0);
  for (const Edge& e : g.edges) {
    g.m += e.mult;
    g.degrees[e.u] += e.mult;
    g.degrees[e.v] += e.mult;
  }

  if (names.empty()) {
    g.node_names.resize(n);
    for (std::int32_t u = 0; u < n; ++u) g.node_names[u] = std::to_string(u);
  } else {
    if (static_cast<std::int32_t>(names.size()) != n) {
      throw std::invalid_argument("name table size does not match node count");
    }
    g.node_names = std::move(names);
  }

  // CSR adjacency: count, place, then link reverse slots.
  g.adj_offset.assign(n + 1, 0);
  for (const Edge& e : g.edges) {
    ++g.adj_offset[e.u + 1];
    ++g.adj_offset[e.v + 1];
  }
  for (std::int32_t u = 0; u < n; ++u) g.adj_offset[u + 1] += g.adj_offset[u];
  const std::size_t slots = g.edges.size() * 2;
  g.adj_node.resize(slots);
  g.adj_mult.resize(slots);
  g.adj_reverse.resize(slots);
  g.adj_edge.resize(slots);
  std::vector<std::int64_t> cursor(g.adj_offset.begin(), g.adj_offset.end() - 1);
  for (std::size_t ei = 0; ei < g.edges.size(); ++ei) {
    const Edge& e = g.edges[ei];
    std::int64_t su = cursor[e.u]++;
    std::int64_t sv = cursor[e.v]++;
    g.adj_node[su] = e.v;
    g.adj_node[sv] = e.u;
    g.adj_mult[su] = e.mult;
    g.adj_mult[sv] = e.mult;
    g.adj_reverse[su] = sv;
    g.adj_reverse[sv] = su;
    g.adj_edge[su] = static_cast<std::int64_t>(ei);
    g.adj_edge[sv] = static_cast<std::int64_t>(ei);
  }

  // Degree classes (ascending degree value, nodes in id order within a class).
  std::map<std::int64_t, std::int32_t> value_to_class;
  for (std::int32_t u = 0; u < n; ++u) value_to_class.emplace(g.degrees[u], 0);
  g.degree_values.reserve(value_to_class.size());
  for (auto& [value, idx] : value_to_class) {
    idx = static_cast<std::int32_t>(g.degree_values.size());
    g.degree_values.push_back(value);
  }
  g.degree_class.resize(n);
  const std::size_t l = g.degree_values.size();
  g.class_offset.assign(l + 1, 0);
  for (std::int32_t u = 0; u < n; ++u) {
    g.degree_class[u] = value_to_class[g.degrees[u]];
    ++g.class_offset[g.degree_class[u] + 1];
  }
  for (std::size_t c = 0; c < l; ++c) g.class_offset[c + 1] += g.class_offset[c];
  g.class_nodes.resize(n);
  std::vector<std::int64_t> ccur(g.class_offset.begin(), g.class_offset.end() - 1);
  for (std::int32_t u = 0; u < n; ++u) {
    g.class_nodes[ccur[g.degree_class[u]]++] = u;
  }
  return g;
}

Graph load_edge_list(std::istream& in, const LoadOptions& options) {
  std::unordered_map<std::string, std::int32_t> ids;
  std::vector<std::string> names;
  std::vector<Edge> edges;
  std::int64_t self_loops = 0;

  auto intern = [&](const std::string& token) {
    auto [it, inserted] = ids.emplace(token, static_cast<std::int32_t>(names.size()));
    if (inserted) names.push_back(token);
    return it->second;
  };

  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string a, b, c, extra;
    if (!(ls >> a)) continue;           // blank line
    if (a.front() == '#') continue;     // comment line
    if (!(ls >> b)) fail_line(line_no, "expected two node tokens");
    std::int64_t mult = 1;
    if (ls >> c) {
      std::size_t pos = 0;
      try {
        mult = std::stoll(c, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos != c.size()) fail_line(line_no, "multiplicity is not an integer: " + c);
      if (mult <= 0) fail_line(line_no, "multiplicity must be positive");
      if (ls >> extra) fail_line(line_no, "unexpected trailing field: " + extra);
    }
    std::int32_t u = intern(a);
    std::int32_t v = intern(b);
    if (u == v) {
      ++self_loops;
      continue;
    }
    edges.push_back({std::min(u, v), std::max(u, v), mult});
  }

  if (!options.sum_duplicates) {
    auto sorted = edges;
    std::sort(sorted.begin(), sorted.end(), [](const Edge& a, const Edge& b) {
      return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
      if (sorted[i].u == sorted[i - 1].u && sorted[i].v == sorted[i - 1].v) {
        throw std::runtime_error("duplicate edge with sum_duplicates disabled");
      }
    }
  }

  const auto n = static_cast<std::int32_t>(names.size());
  Graph g = build_graph(n, std::move(edges), std::move(names));
  g.self_loops_dropped += self_loops;
  return g;
}

void write_edge_list(const Graph& graph, std::ostream& out) {
  for (const Edge& e : graph.edges) {
    out << graph.node_names[e.u] << ' ' << graph.node_names[e.v];
    if (e.mult > 1) out << ' ' << e.mult;
    out << '\n';
  }
}

BlockAssignment block_statistics(const Graph& graph,
                                 std::span<const std::int32_t> labels,
                                 std::int32_t k) {
  if (k <= 0) throw std::invalid_argument("block count must be positive");
  if (static_cast<std::int32_t>(labels.size()) != graph.n) {
    throw std::invalid_argument("label vector length does not match node count");
  }
  BlockAssignment a;
  a.k = k;
  a.labels.assign(labels.begin(), labels.end());
  a.block_sizes.assign(k, 0);
  a.block_edge_counts.assign(static_cast<std::size_t>(k) * k, 0);
  a.block_mean_degrees.assign(k, 0.0);

  for (std::int32_t u = 0; u < graph.n; ++u) {
    std::int32_t r = labels[u];
    if (r < 0 || r >= k) {
      throw std::invalid_argument("block label out of range at node " +
                                  std::to_string(u));
    }
    ++a.block_sizes[r];
    a.block_mean_degrees[r] += static_cast<double>(graph.degrees[u]);
  }
  for (std::int32_t r = 0; r < k; ++r) {
    if (a.block_sizes[r] > 0) {
      a.block_mean_degrees[r] /= static_cast<double>(a.block_sizes[r]);
    }
  }
  for (const Edge& e : graph.edges) {
    std::int32_t r = labels[e.u];
    std::int32_t s = labels[e.v];
    a.block_edge_counts[static_cast<std::size_t>(r) * k + s] += e.mult;
    a.block_edge_counts[static_cast<std::size_t>(s) * k + r] += e.mult;
  }
  return a;
}

}  // namespace sbmsel
