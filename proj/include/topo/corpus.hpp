#pragma once

#include <string>
#include <vector>

#include "topo/graph.hpp"

namespace topo {

/// Writes one graph per line:
/// {"n": int, "edges": [[u,v],...], "node_feats": [[...],...]|null,
///  "edge_feats": [[...],...]|null, "y": number|null,
///  "node_labels": [...]|null, "domain": "..."}
void save_corpus(const std::vector<Graph>& graphs, const std::string& path);

/// Parses and validates a corpus file; throws with the 1-based line number on
/// the first violation.
std::vector<Graph> load_corpus(const std::string& path);

std::string graph_to_json_line(const Graph& g);
Graph graph_from_json_line(const std::string& line);

}  // namespace topo
