#include "topo/corpus.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace topo {

using nlohmann::json;

std::string graph_to_json_line(const Graph& g) {
  json j;
  j["n"] = g.n;
  json edges = json::array();
  for (const auto& [u, v] : g.edges) edges.push_back(json::array({u, v}));
  j["edges"] = std::move(edges);
  if (g.has_node_feats()) {
    json rows = json::array();
    for (int v = 0; v < g.n; ++v) {
      json row = json::array();
      for (int c = 0; c < g.node_feat_dim; ++c)
        row.push_back(static_cast<double>((*g.node_feats)[static_cast<size_t>(v) * g.node_feat_dim + c]));
      rows.push_back(std::move(row));
    }
    j["node_feats"] = std::move(rows);
  } else {
    j["node_feats"] = nullptr;
  }
  if (g.has_edge_feats()) {
    json rows = json::array();
    for (size_t e = 0; e < g.edges.size(); ++e) {
      json row = json::array();
      for (int c = 0; c < g.edge_feat_dim; ++c)
        row.push_back(static_cast<double>((*g.edge_feats)[e * static_cast<size_t>(g.edge_feat_dim) + c]));
      rows.push_back(std::move(row));
    }
    j["edge_feats"] = std::move(rows);
  } else {
    j["edge_feats"] = nullptr;
  }
  if (g.target.has_value())
    j["y"] = *g.target;
  else
    j["y"] = nullptr;
  if (g.node_labels.has_value())
    j["node_labels"] = *g.node_labels;
  else
    j["node_labels"] = nullptr;
  j["domain"] = g.domain;
  return j.dump();
}

Graph graph_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  Graph g;
  g.n = j.at("n").get<int>();
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw std::invalid_argument("edge entry is not a pair");
    g.edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  if (j.contains("node_feats") && !j["node_feats"].is_null()) {
    const auto& rows = j["node_feats"];
    g.node_feats = std::vector<float>();
    g.node_feat_dim = rows.empty() ? 0 : static_cast<int>(rows[0].size());
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != g.node_feat_dim)
        throw std::invalid_argument("ragged node feature rows");
      for (const auto& x : row) g.node_feats->push_back(x.get<float>());
    }
  }
  if (j.contains("edge_feats") && !j["edge_feats"].is_null()) {
    const auto& rows = j["edge_feats"];
    g.edge_feats = std::vector<float>();
    g.edge_feat_dim = rows.empty() ? 0 : static_cast<int>(rows[0].size());
    for (const auto& row : rows) {
      if (static_cast<int>(row.size()) != g.edge_feat_dim)
        throw std::invalid_argument("ragged edge feature rows");
      for (const auto& x : row) g.edge_feats->push_back(x.get<float>());
    }
  }
  if (j.contains("y") && !j["y"].is_null()) g.target = j["y"].get<double>();
  if (j.contains("node_labels") && !j["node_labels"].is_null())
    g.node_labels = j["node_labels"].get<std::vector<int>>();
  if (j.contains("domain") && !j["domain"].is_null()) g.domain = j["domain"].get<std::string>();
  g.validate();
  return g;
}

void save_corpus(const std::vector<Graph>& graphs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  for (const Graph& g : graphs) out << graph_to_json_line(g) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::vector<Graph> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path);
  std::vector<Graph> graphs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      graphs.push_back(graph_from_json_line(line));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return graphs;
}

}  // namespace topo
