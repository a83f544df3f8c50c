#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "qgcn/matrix.hpp"
#include "qgcn/rng.hpp"

namespace qgcn {

// Bipartite interaction graph. Node order is global: users 0..M-1 then items
// M..M+N-1; every table in the system follows it.
struct InteractionSet {
  int num_users = 0;
  int num_items = 0;
  std::vector<std::vector<int>> items_of_user;  // sorted, deduplicated
  std::vector<std::vector<int>> users_of_item;  // sorted, deduplicated
  std::int64_t num_edges = 0;

  int num_nodes() const { return num_users + num_items; }

  bool has_edge(int u, int i) const {
    const auto& v = items_of_user[u];
    return std::binary_search(v.begin(), v.end(), i);
  }

  std::vector<std::pair<int, int>> edge_list() const {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(std::size_t(num_edges));
    for (int u = 0; u < num_users; ++u)
      for (int i : items_of_user[u]) edges.emplace_back(u, i);
    return edges;
  }
};

inline InteractionSet build_interactions(int num_users, int num_items,
                                         const std::vector<std::pair<int, int>>& edges) {
  InteractionSet g;
  g.num_users = num_users;
  g.num_items = num_items;
  g.items_of_user.assign(num_users, {});
  g.users_of_item.assign(num_items, {});
  for (auto [u, i] : edges) {
    if (u < 0 || u >= num_users || i < 0 || i >= num_items)
      throw std::invalid_argument("build_interactions: edge (" + std::to_string(u) +
                                  "," + std::to_string(i) + ") out of range");
    g.items_of_user[u].push_back(i);
    g.users_of_item[i].push_back(u);
  }
  auto sort_dedup = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  };
  g.num_edges = 0;
  for (auto& v : g.items_of_user) {
    sort_dedup(v);
    g.num_edges += std::int64_t(v.size());
  }
  for (auto& v : g.users_of_item) sort_dedup(v);
  return g;
}

// Symmetric-normalized adjacency D^{-1/2} A D^{-1/2} in CSR form. Stored
// values are 1/sqrt(deg(row)*deg(col)); the diagonal is zero and nonzeros
// live only in the off-diagonal user-item blocks. Isolated nodes keep empty
// rows, so propagation from them is the zero vector.
struct NormalizedAdjacency {
  int num_nodes = 0;
  std::vector<std::int64_t> row_offsets;  // size num_nodes + 1
  std::vector<int> col_indices;
  std::vector<double> values;

  std::int64_t nnz() const { return std::int64_t(values.size()); }
};

inline NormalizedAdjacency build_normalized_adjacency(const InteractionSet& g) {
  NormalizedAdjacency adj;
  const int M = g.num_users;
  adj.num_nodes = g.num_nodes();
  adj.row_offsets.assign(std::size_t(adj.num_nodes) + 1, 0);
  adj.col_indices.reserve(std::size_t(2 * g.num_edges));
  adj.values.reserve(std::size_t(2 * g.num_edges));
  std::int64_t offset = 0;
  for (int u = 0; u < M; ++u) {
    adj.row_offsets[u] = offset;
    const double du = double(g.items_of_user[u].size());
    for (int i : g.items_of_user[u]) {
      const double di = double(g.users_of_item[i].size());
      adj.col_indices.push_back(M + i);
      adj.values.push_back(1.0 / std::sqrt(du * di));
      ++offset;
    }
  }
  for (int i = 0; i < g.num_items; ++i) {
    adj.row_offsets[std::size_t(M) + i] = offset;
    const double di = double(g.users_of_item[i].size());
    for (int u : g.users_of_item[i]) {
      const double du = double(g.items_of_user[u].size());
      adj.col_indices.push_back(u);
      adj.values.push_back(1.0 / std::sqrt(di * du));
      ++offset;
    }
  }
  adj.row_offsets[adj.num_nodes] = offset;
  return adj;
}

// out[row] = sum over stored entries of value * table[col]. Columns are
// independent, so one pass covers all quaternion component blocks at once.
inline RealMatrix spmv(const NormalizedAdjacency& adj, const RealMatrix& table) {
  if (table.rows() != adj.num_nodes)
    throw std::invalid_argument("spmv: table row count does not match node count");
  RealMatrix out(table.rows(), table.cols());
  const int cols = table.cols();
  for (int r = 0; r < adj.num_nodes; ++r) {
    double* dst = out.row(r);
    for (std::int64_t e = adj.row_offsets[r]; e < adj.row_offsets[r + 1]; ++e) {
      const double v = adj.values[std::size_t(e)];
      const double* src = table.row(adj.col_indices[std::size_t(e)]);
      for (int c = 0; c < cols; ++c) dst[c] += v * src[c];
    }
  }
  return out;
}

// Adds floor(ratio * E) previously unobserved edges, sampled uniformly
// without replacement. Rejection sampling over (u, i) pairs; observed pairs
// are a vanishing fraction at recommendation densities.
inline InteractionSet inject_edges(const InteractionSet& g, double ratio,
                                   std::uint64_t seed) {
  if (ratio < 0.0) throw std::invalid_argument("inject_edges: ratio must be >= 0");
  const std::int64_t target = std::int64_t(ratio * double(g.num_edges));
  const std::int64_t unobserved =
      std::int64_t(g.num_users) * g.num_items - g.num_edges;
  if (target > unobserved)
    throw std::invalid_argument("inject_edges: not enough unobserved pairs");
  auto edges = g.edge_list();
  Rng rng(seed);
  std::unordered_set<std::int64_t> added;
  added.reserve(std::size_t(target) * 2);
  while (std::int64_t(added.size()) < target) {
    const int u = int(rng.next_below(std::uint64_t(g.num_users)));
    const int i = int(rng.next_below(std::uint64_t(g.num_items)));
    const std::int64_t key = std::int64_t(u) * g.num_items + i;
    if (g.has_edge(u, i) || added.count(key)) continue;
    added.insert(key);
    edges.emplace_back(u, i);
  }
  return build_interactions(g.num_users, g.num_items, edges);
}

// Removes floor(ratio * E) existing edges uniformly without replacement.
inline InteractionSet discard_edges(const InteractionSet& g, double ratio,
                                    std::uint64_t seed) {
  if (ratio < 0.0 || ratio >= 1.0)
    throw std::invalid_argument("discard_edges: ratio must be in [0, 1)");
  const std::int64_t drop = std::int64_t(ratio * double(g.num_edges));
  auto edges = g.edge_list();
  Rng rng(seed);
  // partial Fisher-Yates: the first `drop` slots end up holding the removals
  for (std::int64_t t = 0; t < drop; ++t) {
    const std::int64_t j =
        t + std::int64_t(rng.next_below(std::uint64_t(edges.size()) - t));
    std::swap(edges[std::size_t(t)], edges[std::size_t(j)]);
  }
  edges.erase(edges.begin(), edges.begin() + drop);
  return build_interactions(g.num_users, g.num_items, edges);
}

}  // namespace qgcn
