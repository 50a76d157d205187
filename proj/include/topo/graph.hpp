#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "topo/rng.hpp"

namespace topo {

/// Undirected simple graph. Each edge (u, v) with u != v is stored once.
/// Feature matrices are flat row-major with the row counts n and |E|.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<float>> node_feats;  // n x node_feat_dim
  int node_feat_dim = 0;
  std::optional<std::vector<float>> edge_feats;  // |E| x edge_feat_dim
  int edge_feat_dim = 0;
  std::optional<double> target;
  std::optional<std::vector<int>> node_labels;
  std::string domain;

  int num_edges() const { return static_cast<int>(edges.size()); }
  bool has_node_feats() const { return node_feats.has_value(); }
  bool has_edge_feats() const { return edge_feats.has_value(); }

  /// Sorted adjacency lists.
  std::vector<std::vector<int>> adjacency() const;

  /// Throws std::invalid_argument on the first violated invariant.
  void validate() const;
};

/// Disjoint union of graphs. The directed edge index stores both
/// orientations of every undirected edge, consecutively per pair.
struct GraphBatch {
  std::vector<Graph> graphs;
  std::vector<int> node_offset;     // per graph
  std::vector<int> node_to_graph;   // length N
  std::vector<int> edge_src;        // length M (directed)
  std::vector<int> edge_dst;        // length M
  std::vector<int> edge_to_graph;   // length M
  std::vector<int> reverse_edge;    // index of the opposite orientation
  std::vector<int> undirected_id;   // shared id of the undirected pair
  std::vector<float> node_feats;    // N x node_feat_dim when present
  int node_feat_dim = 0;
  std::vector<float> edge_feats;    // M x edge_feat_dim (copied per direction)
  int edge_feat_dim = 0;
  int total_nodes = 0;
  int total_edges = 0;              // directed
  int num_undirected = 0;

  int size() const { return static_cast<int>(graphs.size()); }
  /// Directed edge count of one member graph.
  int edges_of(int graph_index) const { return 2 * graphs[static_cast<size_t>(graph_index)].num_edges(); }
};

/// Graph-level summary statistics.
struct MetricRecord {
  int nodes = 0;
  int edges = 0;  // undirected
  double density = 0.0;
  int diameter = 0;
  double avg_clustering = 0.0;
  double transitivity = 0.0;
};

// ---- generators -----------------------------------------------------------

struct TreeGenConfig {
  int min_depth = 3;
  int max_depth = 7;
  double branch_prob_lo = 0.45;
  double branch_prob_hi = 0.9;
};

/// Random rooted tree grown level by level: every frontier node fills each of
/// its two child slots with probability branch_prob. Target is the realized
/// depth (root at depth 0).
Graph generate_tree(Rng& rng, const TreeGenConfig& cfg = {});

struct ErGenConfig {
  int min_nodes = 12;
  int max_nodes = 48;
  double p_lo = 0.05;
  double p_hi = 0.5;
};

/// Erdos-Renyi graph; target is the sampled edge probability.
Graph generate_er(Rng& rng, const ErGenConfig& cfg = {});
Graph generate_er_fixed(Rng& rng, int n, double p);

struct CommunityGenConfig {
  int communities = 4;
  int nodes_per_community = 12;
  double p_intra = 0.3;
  double p_inter_lo = 0.01;
  double p_inter_hi = 0.15;
};

/// Planted-community graph; target is the sampled inter-community probability.
Graph generate_community(Rng& rng, const CommunityGenConfig& cfg = {});
Graph generate_community_fixed(Rng& rng, const CommunityGenConfig& cfg, double p_inter);

// ---- subgraph extraction ----------------------------------------------------

enum class SamplerKind { RandomWalk, RandomWalkRestart, Snowball, ForestFire };

/// Cuts a connected subgraph of uniformly chosen size in [min_nodes,
/// max_nodes] out of `source`, using one exploration sampler chosen uniformly
/// from {random walk, random walk with restart (0.1), BFS snowball, forest
/// fire (0.4)}. Nodes are renumbered 0..k-1.
Graph explore_sample(const Graph& source, Rng& rng, int min_nodes = 24, int max_nodes = 96);

/// Same, with the sampler pinned and optionally the start node; out_nodes,
/// when given, receives the sampled node's original ids (sorted; position =
/// new id).
Graph explore_sample_with(const Graph& source, Rng& rng, SamplerKind kind, int target_nodes,
                          std::optional<int> start = std::nullopt,
                          std::vector<int>* out_nodes = nullptr);

struct EgoNet {
  Graph graph;
  int center = 0;
};

/// Induced subgraph of all nodes within `hops` of `center`. When fanout_cap
/// is set, each expanded node keeps at most that many uniformly sampled
/// unvisited neighbors. Features and labels are carried over.
EgoNet ego_network(const Graph& g, int center, int hops, std::optional<int> fanout_cap, Rng& rng);

// ---- batching and metrics ---------------------------------------------------

GraphBatch batch_graphs(const std::vector<Graph>& graphs);
/// Inverse of batch_graphs, up to node renumbering by offset.
std::vector<Graph> unbatch(const GraphBatch& batch);

MetricRecord graph_metrics(const Graph& g);

/// Connected components as a label per node plus component sizes.
std::pair<std::vector<int>, std::vector<int>> connected_components(const Graph& g);

}  // namespace topo
