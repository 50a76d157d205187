#include "topo/graph.hpp"

#include <algorithm>
#include <deque>
#include <queue>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace topo {

namespace {

uint64_t pair_key(int u, int v) {
  const uint64_t a = static_cast<uint64_t>(std::min(u, v));
  const uint64_t b = static_cast<uint64_t>(std::max(u, v));
  return (a << 32) | b;
}

// Induced subgraph over `keep` (old node ids, any order). Preserves features,
// labels and domain; target is dropped unless `keep_target`.
Graph induced_subgraph(const Graph& g, std::vector<int> keep, std::vector<int>* old_to_new,
                       bool keep_target = false) {
  std::sort(keep.begin(), keep.end());
  std::vector<int> remap(static_cast<size_t>(g.n), -1);
  for (size_t i = 0; i < keep.size(); ++i) remap[static_cast<size_t>(keep[i])] = static_cast<int>(i);

  Graph out;
  out.n = static_cast<int>(keep.size());
  out.domain = g.domain;
  if (keep_target) out.target = g.target;
  if (g.has_node_feats()) {
    out.node_feat_dim = g.node_feat_dim;
    out.node_feats = std::vector<float>();
    out.node_feats->reserve(keep.size() * static_cast<size_t>(g.node_feat_dim));
    for (int v : keep)
      for (int c = 0; c < g.node_feat_dim; ++c)
        out.node_feats->push_back((*g.node_feats)[static_cast<size_t>(v) * g.node_feat_dim + c]);
  }
  if (g.node_labels.has_value()) {
    out.node_labels = std::vector<int>();
    out.node_labels->reserve(keep.size());
    for (int v : keep) out.node_labels->push_back((*g.node_labels)[static_cast<size_t>(v)]);
  }
  const bool ef = g.has_edge_feats();
  if (ef) {
    out.edge_feat_dim = g.edge_feat_dim;
    out.edge_feats = std::vector<float>();
  }
  for (size_t e = 0; e < g.edges.size(); ++e) {
    const int u = remap[static_cast<size_t>(g.edges[e].first)];
    const int v = remap[static_cast<size_t>(g.edges[e].second)];
    if (u < 0 || v < 0) continue;
    out.edges.emplace_back(u, v);
    if (ef)
      for (int c = 0; c < g.edge_feat_dim; ++c)
        out.edge_feats->push_back((*g.edge_feats)[e * static_cast<size_t>(g.edge_feat_dim) + c]);
  }
  if (old_to_new != nullptr) *old_to_new = std::move(remap);
  return out;
}

// Fisher-Yates prefix: k distinct picks from `pool`.
std::vector<int> sample_without_replacement(std::vector<int> pool, size_t k, Rng& rng) {
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size() - i - 1)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

std::vector<std::vector<int>> Graph::adjacency() const {
  std::vector<std::vector<int>> adj(static_cast<size_t>(n));
  for (const auto& [u, v] : edges) {
    adj[static_cast<size_t>(u)].push_back(v);
    adj[static_cast<size_t>(v)].push_back(u);
  }
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  return adj;
}

void Graph::validate() const {
  if (n < 0) throw std::invalid_argument("graph: negative node count");
  std::unordered_set<uint64_t> seen;
  seen.reserve(edges.size() * 2);
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw std::invalid_argument("graph: edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") outside node range [0, " + std::to_string(n) + ")");
    if (u == v) throw std::invalid_argument("graph: self-loop at node " + std::to_string(u));
    if (!seen.insert(pair_key(u, v)).second)
      throw std::invalid_argument("graph: duplicate undirected edge (" + std::to_string(u) + ", " +
                                  std::to_string(v) + ")");
  }
  if (node_feats.has_value()) {
    if (node_feat_dim <= 0) throw std::invalid_argument("graph: node features with dim <= 0");
    if (node_feats->size() != static_cast<size_t>(n) * node_feat_dim)
      throw std::invalid_argument("graph: node feature matrix has " +
                                  std::to_string(node_feats->size()) + " values, want " +
                                  std::to_string(static_cast<size_t>(n) * node_feat_dim));
  }
  if (edge_feats.has_value()) {
    if (edge_feat_dim <= 0) throw std::invalid_argument("graph: edge features with dim <= 0");
    if (edge_feats->size() != edges.size() * static_cast<size_t>(edge_feat_dim))
      throw std::invalid_argument("graph: edge feature matrix has " +
                                  std::to_string(edge_feats->size()) + " values, want " +
                                  std::to_string(edges.size() * static_cast<size_t>(edge_feat_dim)));
  }
  if (node_labels.has_value() && node_labels->size() != static_cast<size_t>(n))
    throw std::invalid_argument("graph: " + std::to_string(node_labels->size()) +
                                " node labels for " + std::to_string(n) + " nodes");
}

// ---- generators -------------------------------------------------------------

Graph generate_tree(Rng& rng, const TreeGenConfig& cfg) {
  const int max_depth = static_cast<int>(rng.uniform_int(cfg.min_depth, cfg.max_depth));
  const double branch_prob = rng.uniform(cfg.branch_prob_lo, cfg.branch_prob_hi);
  Graph g;
  g.domain = "tree";
  g.n = 1;
  int realized = 0;
  std::vector<int> frontier{0};
  for (int depth = 1; depth <= max_depth && !frontier.empty(); ++depth) {
    std::vector<int> next;
    for (int parent : frontier) {
      for (int slot = 0; slot < 2; ++slot) {
        if (rng.flip(branch_prob)) {
          const int child = g.n++;
          g.edges.emplace_back(parent, child);
          next.push_back(child);
        }
      }
    }
    if (!next.empty()) realized = depth;
    frontier = std::move(next);
  }
  g.target = static_cast<double>(realized);
  return g;
}

Graph generate_er_fixed(Rng& rng, int n, double p) {
  Graph g;
  g.domain = "er";
  g.n = n;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.flip(p)) g.edges.emplace_back(u, v);
  g.target = p;
  return g;
}

Graph generate_er(Rng& rng, const ErGenConfig& cfg) {
  const int n = static_cast<int>(rng.uniform_int(cfg.min_nodes, cfg.max_nodes));
  const double p = rng.uniform(cfg.p_lo, cfg.p_hi);
  return generate_er_fixed(rng, n, p);
}

Graph generate_community_fixed(Rng& rng, const CommunityGenConfig& cfg, double p_inter) {
  Graph g;
  g.domain = "community";
  g.n = cfg.communities * cfg.nodes_per_community;
  for (int u = 0; u < g.n; ++u) {
    for (int v = u + 1; v < g.n; ++v) {
      const bool same = (u / cfg.nodes_per_community) == (v / cfg.nodes_per_community);
      if (rng.flip(same ? cfg.p_intra : p_inter)) g.edges.emplace_back(u, v);
    }
  }
  g.target = p_inter;
  return g;
}

Graph generate_community(Rng& rng, const CommunityGenConfig& cfg) {
  const double p_inter = rng.uniform(cfg.p_inter_lo, cfg.p_inter_hi);
  return generate_community_fixed(rng, cfg, p_inter);
}

// ---- exploration samplers -----------------------------------------------------

namespace {

std::vector<int> walk_sampler(const std::vector<std::vector<int>>& adj, int start, int k,
                              double restart_prob, Rng& rng) {
  std::vector<char> visited(adj.size(), 0);
  std::vector<int> order{start};
  visited[static_cast<size_t>(start)] = 1;
  int current = start;
  long long steps = 0;
  const long long step_cap = 1000000;
  while (static_cast<int>(order.size()) < k && steps < step_cap) {
    ++steps;
    if (restart_prob > 0.0 && rng.flip(restart_prob)) {
      current = start;
      continue;
    }
    const auto& nb = adj[static_cast<size_t>(current)];
    if (nb.empty()) break;
    current = nb[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(nb.size() - 1)))];
    if (!visited[static_cast<size_t>(current)]) {
      visited[static_cast<size_t>(current)] = 1;
      order.push_back(current);
    }
  }
  // Pathological stall: finish the sample by BFS from the visited frontier.
  for (size_t i = 0; i < order.size() && static_cast<int>(order.size()) < k; ++i)
    for (int v : adj[static_cast<size_t>(order[i])])
      if (!visited[static_cast<size_t>(v)] && static_cast<int>(order.size()) < k) {
        visited[static_cast<size_t>(v)] = 1;
        order.push_back(v);
      }
  return order;
}

std::vector<int> snowball_sampler(const std::vector<std::vector<int>>& adj, int start, int k) {
  std::vector<char> visited(adj.size(), 0);
  std::vector<int> order{start};
  visited[static_cast<size_t>(start)] = 1;
  std::deque<int> queue{start};
  while (!queue.empty() && static_cast<int>(order.size()) < k) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : adj[static_cast<size_t>(u)]) {
      if (visited[static_cast<size_t>(v)]) continue;
      visited[static_cast<size_t>(v)] = 1;
      order.push_back(v);
      queue.push_back(v);
      if (static_cast<int>(order.size()) == k) break;
    }
  }
  return order;
}

std::vector<int> forest_fire_sampler(const std::vector<std::vector<int>>& adj, int start, int k,
                                     double burn_prob, Rng& rng) {
  std::vector<char> visited(adj.size(), 0);
  std::vector<int> order{start};
  visited[static_cast<size_t>(start)] = 1;
  std::deque<int> queue{start};
  while (static_cast<int>(order.size()) < k) {
    if (queue.empty()) {
      // Re-ignite at an unvisited neighbor of the burned set.
      std::vector<int> frontier;
      for (int u : order)
        for (int v : adj[static_cast<size_t>(u)])
          if (!visited[static_cast<size_t>(v)]) frontier.push_back(v);
      if (frontier.empty()) break;
      std::sort(frontier.begin(), frontier.end());
      frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());
      const int pick =
          frontier[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(frontier.size() - 1)))];
      visited[static_cast<size_t>(pick)] = 1;
      order.push_back(pick);
      queue.push_back(pick);
      continue;
    }
    const int u = queue.front();
    queue.pop_front();
    for (int v : adj[static_cast<size_t>(u)]) {
      if (visited[static_cast<size_t>(v)] || static_cast<int>(order.size()) >= k) continue;
      if (rng.flip(burn_prob)) {
        visited[static_cast<size_t>(v)] = 1;
        order.push_back(v);
        queue.push_back(v);
      }
    }
  }
  return order;
}

}  // namespace

std::pair<std::vector<int>, std::vector<int>> connected_components(const Graph& g) {
  const auto adj = g.adjacency();
  std::vector<int> label(static_cast<size_t>(g.n), -1);
  std::vector<int> sizes;
  for (int s = 0; s < g.n; ++s) {
    if (label[static_cast<size_t>(s)] >= 0) continue;
    const int comp = static_cast<int>(sizes.size());
    int count = 0;
    std::deque<int> queue{s};
    label[static_cast<size_t>(s)] = comp;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      ++count;
      for (int v : adj[static_cast<size_t>(u)]) {
        if (label[static_cast<size_t>(v)] < 0) {
          label[static_cast<size_t>(v)] = comp;
          queue.push_back(v);
        }
      }
    }
    sizes.push_back(count);
  }
  return {label, sizes};
}

Graph explore_sample_with(const Graph& source, Rng& rng, SamplerKind kind, int target_nodes,
                          std::optional<int> start_at, std::vector<int>* out_nodes) {
  const auto [label, sizes] = connected_components(source);
  std::vector<int> candidates;
  for (int v = 0; v < source.n; ++v)
    if (sizes[static_cast<size_t>(label[static_cast<size_t>(v)])] >= target_nodes)
      candidates.push_back(v);
  if (candidates.empty()) {
    const int largest = sizes.empty() ? 0 : *std::max_element(sizes.begin(), sizes.end());
    throw std::runtime_error("explore_sample: largest component has " + std::to_string(largest) +
                             " nodes, need " + std::to_string(target_nodes));
  }
  int start;
  if (start_at.has_value()) {
    start = *start_at;
    if (start < 0 || start >= source.n ||
        sizes[static_cast<size_t>(label[static_cast<size_t>(start)])] < target_nodes)
      throw std::runtime_error("explore_sample: start node's component is smaller than " +
                               std::to_string(target_nodes));
  } else {
    start = candidates[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(candidates.size() - 1)))];
  }
  const auto adj = source.adjacency();
  std::vector<int> picked;
  switch (kind) {
    case SamplerKind::RandomWalk:
      picked = walk_sampler(adj, start, target_nodes, 0.0, rng);
      break;
    case SamplerKind::RandomWalkRestart:
      picked = walk_sampler(adj, start, target_nodes, 0.1, rng);
      break;
    case SamplerKind::Snowball:
      picked = snowball_sampler(adj, start, target_nodes);
      break;
    case SamplerKind::ForestFire:
      picked = forest_fire_sampler(adj, start, target_nodes, 0.4, rng);
      break;
  }
  if (out_nodes != nullptr) {
    *out_nodes = picked;
    std::sort(out_nodes->begin(), out_nodes->end());
  }
  return induced_subgraph(source, picked, nullptr);
}

Graph explore_sample(const Graph& source, Rng& rng, int min_nodes, int max_nodes) {
  const int target = static_cast<int>(rng.uniform_int(min_nodes, max_nodes));
  const auto kind = static_cast<SamplerKind>(rng.uniform_int(0, 3));
  return explore_sample_with(source, rng, kind, target);
}

EgoNet ego_network(const Graph& g, int center, int hops, std::optional<int> fanout_cap, Rng& rng) {
  if (center < 0 || center >= g.n)
    throw std::invalid_argument("ego_network: center " + std::to_string(center) +
                                " outside [0, " + std::to_string(g.n) + ")");
  if (hops < 1) throw std::invalid_argument("ego_network: hops must be >= 1");
  const auto adj = g.adjacency();
  std::vector<char> visited(static_cast<size_t>(g.n), 0);
  visited[static_cast<size_t>(center)] = 1;
  std::vector<int> kept{center};
  std::deque<std::pair<int, int>> queue{{center, 0}};
  while (!queue.empty()) {
    const auto [u, depth] = queue.front();
    queue.pop_front();
    if (depth == hops) continue;
    std::vector<int> fresh;
    for (int v : adj[static_cast<size_t>(u)])
      if (!visited[static_cast<size_t>(v)]) fresh.push_back(v);
    if (fanout_cap.has_value() && static_cast<int>(fresh.size()) > *fanout_cap) {
      fresh = sample_without_replacement(std::move(fresh), static_cast<size_t>(*fanout_cap), rng);
      std::sort(fresh.begin(), fresh.end());
    }
    for (int v : fresh) {
      visited[static_cast<size_t>(v)] = 1;
      kept.push_back(v);
      queue.emplace_back(v, depth + 1);
    }
  }
  std::vector<int> remap;
  Graph sub = induced_subgraph(g, kept, &remap);
  return EgoNet{std::move(sub), remap[static_cast<size_t>(center)]};
}

// ---- batching -----------------------------------------------------------------

GraphBatch batch_graphs(const std::vector<Graph>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("batch_graphs: empty list");
  const bool nf = graphs.front().has_node_feats();
  const bool ef = graphs.front().has_edge_feats();
  const int nfd = graphs.front().node_feat_dim;
  const int efd = graphs.front().edge_feat_dim;
  for (const Graph& g : graphs) {
    if (g.has_node_feats() != nf || (nf && g.node_feat_dim != nfd))
      throw std::invalid_argument("batch_graphs: mixed node feature presence or width");
    if (g.has_edge_feats() != ef || (ef && g.edge_feat_dim != efd))
      throw std::invalid_argument("batch_graphs: mixed edge feature presence or width");
  }

  GraphBatch b;
  b.graphs = graphs;
  b.node_feat_dim = nf ? nfd : 0;
  b.edge_feat_dim = ef ? efd : 0;
  int offset = 0;
  int undirected = 0;
  for (size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    b.node_offset.push_back(offset);
    for (int v = 0; v < g.n; ++v) b.node_to_graph.push_back(static_cast<int>(gi));
    if (nf) b.node_feats.insert(b.node_feats.end(), g.node_feats->begin(), g.node_feats->end());
    for (size_t e = 0; e < g.edges.size(); ++e) {
      const int u = offset + g.edges[e].first;
      const int v = offset + g.edges[e].second;
      b.edge_src.push_back(u);
      b.edge_dst.push_back(v);
      b.edge_src.push_back(v);
      b.edge_dst.push_back(u);
      b.edge_to_graph.push_back(static_cast<int>(gi));
      b.edge_to_graph.push_back(static_cast<int>(gi));
      const int m = static_cast<int>(b.edge_src.size());
      b.reverse_edge.push_back(m - 1);
      b.reverse_edge.push_back(m - 2);
      b.undirected_id.push_back(undirected);
      b.undirected_id.push_back(undirected);
      ++undirected;
      if (ef)
        for (int rep = 0; rep < 2; ++rep)
          for (int c = 0; c < efd; ++c)
            b.edge_feats.push_back((*g.edge_feats)[e * static_cast<size_t>(efd) + c]);
    }
    offset += g.n;
  }
  b.total_nodes = offset;
  b.total_edges = static_cast<int>(b.edge_src.size());
  b.num_undirected = undirected;
  return b;
}

std::vector<Graph> unbatch(const GraphBatch& b) {
  std::vector<Graph> out;
  out.reserve(b.graphs.size());
  for (size_t gi = 0; gi < b.graphs.size(); ++gi) {
    const Graph& src = b.graphs[gi];
    Graph g;
    g.n = src.n;
    g.domain = src.domain;
    g.target = src.target;
    g.node_labels = src.node_labels;
    const int off = b.node_offset[gi];
    if (b.node_feat_dim > 0) {
      g.node_feat_dim = b.node_feat_dim;
      g.node_feats = std::vector<float>(
          b.node_feats.begin() + static_cast<size_t>(off) * b.node_feat_dim,
          b.node_feats.begin() + (static_cast<size_t>(off) + g.n) * b.node_feat_dim);
    }
    if (b.edge_feat_dim > 0) {
      g.edge_feat_dim = b.edge_feat_dim;
      g.edge_feats = std::vector<float>();
    }
    for (int e = 0; e < b.total_edges; ++e) {
      if (b.edge_to_graph[static_cast<size_t>(e)] != static_cast<int>(gi)) continue;
      const int u = b.edge_src[static_cast<size_t>(e)] - off;
      const int v = b.edge_dst[static_cast<size_t>(e)] - off;
      if (u > v) continue;  // keep one orientation
      g.edges.emplace_back(u, v);
      if (b.edge_feat_dim > 0)
        for (int c = 0; c < b.edge_feat_dim; ++c)
          g.edge_feats->push_back(
              b.edge_feats[static_cast<size_t>(e) * b.edge_feat_dim + c]);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ---- metrics --------------------------------------------------------------------

MetricRecord graph_metrics(const Graph& g) {
  MetricRecord m;
  m.nodes = g.n;
  m.edges = g.num_edges();
  if (g.n > 1)
    m.density = 2.0 * static_cast<double>(m.edges) /
                (static_cast<double>(g.n) * (static_cast<double>(g.n) - 1.0));
  if (m.edges == 0) return m;  // diameter 0, clustering 0, transitivity 0

  const auto adj = g.adjacency();
  const auto [label, sizes] = connected_components(g);
  const int largest =
      static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

  // Diameter by BFS from every node of the largest component.
  int diameter = 0;
  std::vector<int> dist(static_cast<size_t>(g.n));
  for (int s = 0; s < g.n; ++s) {
    if (label[static_cast<size_t>(s)] != largest) continue;
    std::fill(dist.begin(), dist.end(), -1);
    dist[static_cast<size_t>(s)] = 0;
    std::deque<int> queue{s};
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      diameter = std::max(diameter, dist[static_cast<size_t>(u)]);
      for (int v : adj[static_cast<size_t>(u)]) {
        if (dist[static_cast<size_t>(v)] < 0) {
          dist[static_cast<size_t>(v)] = dist[static_cast<size_t>(u)] + 1;
          queue.push_back(v);
        }
      }
    }
  }
  m.diameter = diameter;

  // Triangle counts per node via sorted-adjacency intersection.
  double clustering_sum = 0.0;
  long long closed = 0;
  long long triads = 0;
  for (int v = 0; v < g.n; ++v) {
    const auto& nb = adj[static_cast<size_t>(v)];
    const long long deg = static_cast<long long>(nb.size());
    if (deg < 2) continue;
    long long links = 0;
    for (size_t i = 0; i < nb.size(); ++i) {
      const auto& nbi = adj[static_cast<size_t>(nb[i])];
      for (size_t j = i + 1; j < nb.size(); ++j)
        if (std::binary_search(nbi.begin(), nbi.end(), nb[j])) ++links;
    }
    const long long pairs = deg * (deg - 1) / 2;
    clustering_sum += static_cast<double>(links) / static_cast<double>(pairs);
    closed += links;
    triads += pairs;
  }
  m.avg_clustering = g.n > 0 ? clustering_sum / static_cast<double>(g.n) : 0.0;
  m.transitivity = triads > 0 ? static_cast<double>(closed) / static_cast<double>(triads) : 0.0;
  return m;
}

}  // namespace topo
