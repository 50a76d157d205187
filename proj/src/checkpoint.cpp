#include "topo/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace topo {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'T', 'O', 'P', 'C', 'K', 'P', 'T', '0'};
constexpr int kFormatVersion = 1;

std::string readout_name(Readout r) { return r == Readout::Mean ? "mean" : "sum"; }
Readout readout_from(const std::string& s) {
  if (s == "mean") return Readout::Mean;
  if (s == "sum") return Readout::Sum;
  throw std::runtime_error("checkpoint: unknown readout " + s);
}

std::string output_kind_name(OutputKind k) {
  switch (k) {
    case OutputKind::Projection: return "projection";
    case OutputKind::TaskGraph: return "task_graph";
    case OutputKind::TaskNode: return "task_node";
    case OutputKind::TaskEdge: return "task_edge";
    case OutputKind::None: return "none";
  }
  return "?";
}

OutputKind output_kind_from(const std::string& s) {
  if (s == "projection") return OutputKind::Projection;
  if (s == "task_graph") return OutputKind::TaskGraph;
  if (s == "task_node") return OutputKind::TaskNode;
  if (s == "task_edge") return OutputKind::TaskEdge;
  if (s == "none") return OutputKind::None;
  throw std::runtime_error("checkpoint: unknown output head " + s);
}

json encoder_to_json(const EncoderConfig& c) {
  return json{{"num_layers", c.num_layers},
              {"hidden_dim", c.hidden_dim},
              {"projection_dim", c.projection_dim},
              {"readout", readout_name(c.readout)},
              {"batch_norm", c.batch_norm},
              {"epsilon_learnable", c.epsilon_learnable}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.hidden_dim = j.at("hidden_dim").get<int>();
  c.projection_dim = j.at("projection_dim").get<int>();
  c.readout = readout_from(j.at("readout").get<std::string>());
  c.batch_norm = j.at("batch_norm").get<bool>();
  c.epsilon_learnable = j.at("epsilon_learnable").get<bool>();
  return c;
}

json params_to_json(const std::vector<ParamRef>& refs) {
  json arr = json::array();
  for (const ParamRef& p : refs)
    arr.push_back(json{{"name", p.name}, {"shape", p.tensor->shape()}});
  return arr;
}

void append_payload(std::string& payload, const std::vector<ParamRef>& refs) {
  for (const ParamRef& p : refs) {
    const size_t bytes = static_cast<size_t>(p.tensor->numel()) * sizeof(float);
    const size_t at = payload.size();
    payload.resize(at + bytes);
    std::memcpy(payload.data() + at, p.tensor->data(), bytes);
  }
}

void read_into(const std::string& payload, size_t& offset, const json& listed,
               std::vector<ParamRef> refs, const char* what) {
  std::unordered_map<std::string, ParamRef> by_name;
  for (ParamRef& p : refs) by_name.emplace(p.name, p);
  if (listed.size() != refs.size())
    throw std::runtime_error(std::string("checkpoint: ") + what + " lists " +
                             std::to_string(listed.size()) + " arrays, model has " +
                             std::to_string(refs.size()));
  for (const auto& entry : listed) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int>>();
    const auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: unknown array " + name);
    Tensor& t = *it->second.tensor;
    if (t.shape() != shape)
      throw std::runtime_error("checkpoint: array " + name + " has shape " + shape_str(shape) +
                               ", model wants " + shape_str(t.shape()));
    const size_t bytes = static_cast<size_t>(t.numel()) * sizeof(float);
    if (offset + bytes > payload.size())
      throw std::runtime_error("checkpoint: truncated payload at " + name);
    std::memcpy(t.data(), payload.data() + offset, bytes);
    offset += bytes;
  }
}

}  // namespace

std::string fnv1a_hex(const void* data, size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  uint64_t h = 1469598103934665603ULL;
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string fnv1a_hex(const std::string& s) { return fnv1a_hex(s.data(), s.size()); }

void save_checkpoint(const std::string& path, Model& model, ViewLearner* view,
                     CheckpointMeta meta) {
  json header;
  header["format_version"] = kFormatVersion;
  header["encoder"] = encoder_to_json(model.config);
  header["input_head"] = json{
      {"kind", model.input_head.kind == InputKind::ConstantEmbedding ? "constant" : "feature_mlp"},
      {"node_dim", model.input_head.node_dim},
      {"edge_dim", model.input_head.edge_dim}};
  header["output_head"] = json{{"kind", output_kind_name(model.output_head.kind)},
                               {"num_classes", model.output_head.num_classes}};
  const auto model_refs = model.state_arrays();
  header["params"] = params_to_json(model_refs);
  header["has_view"] = view != nullptr;
  std::string payload;
  append_payload(payload, model_refs);
  if (view != nullptr) {
    const auto view_refs = view->state_arrays();
    header["view_params"] = params_to_json(view_refs);
    append_payload(payload, view_refs);
  }
  header["pretrain"] = json{{"method", meta.pretrain_method}, {"corpus_digest", meta.corpus_digest}};
  header["seed"] = meta.seed;
  header["config_hash"] = meta.config_hash;

  const std::string id_input = header.dump() + payload;
  meta.checkpoint_id = fnv1a_hex(id_input);
  header["checkpoint_id"] = meta.checkpoint_id;

  const std::string head = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const uint32_t len = static_cast<uint32_t>(head.size());
  char lenbuf[4] = {static_cast<char>(len & 0xff), static_cast<char>((len >> 8) & 0xff),
                    static_cast<char>((len >> 16) & 0xff), static_cast<char>((len >> 24) & 0xff)};
  out.write(lenbuf, 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  unsigned char lenbuf[4];
  in.read(reinterpret_cast<char*>(lenbuf), 4);
  if (!in) throw std::runtime_error("checkpoint: truncated header length");
  const uint32_t len = static_cast<uint32_t>(lenbuf[0]) | (static_cast<uint32_t>(lenbuf[1]) << 8) |
                       (static_cast<uint32_t>(lenbuf[2]) << 16) |
                       (static_cast<uint32_t>(lenbuf[3]) << 24);
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const json header = json::parse(head);
  const int version = header.at("format_version").get<int>();
  if (version != kFormatVersion)
    throw std::runtime_error("checkpoint: unsupported format_version " + std::to_string(version));

  LoadedCheckpoint lc;
  const EncoderConfig cfg = encoder_from_json(header.at("encoder"));
  const json& ih = header.at("input_head");
  const bool constant = ih.at("kind").get<std::string>() == "constant";
  const int node_dim = ih.at("node_dim").get<int>();
  const int edge_dim = ih.at("edge_dim").get<int>();
  lc.model = build_model(cfg, constant ? InputKind::ConstantEmbedding : InputKind::FeatureMlp, 0,
                         node_dim, edge_dim);
  const json& oh = header.at("output_head");
  const OutputKind okind = output_kind_from(oh.at("kind").get<std::string>());
  Rng dummy(0);
  switch (okind) {
    case OutputKind::Projection: break;  // build_model default
    case OutputKind::TaskGraph: swap_output_head(lc.model, make_task_graph_head(cfg, dummy)); break;
    case OutputKind::TaskNode:
      swap_output_head(lc.model, make_task_node_head(cfg, oh.at("num_classes").get<int>(), dummy));
      break;
    case OutputKind::TaskEdge: swap_output_head(lc.model, make_task_edge_head(cfg, dummy)); break;
    case OutputKind::None: swap_output_head(lc.model, make_none_head()); break;
  }

  size_t offset = 0;
  read_into(payload, offset, header.at("params"), lc.model.state_arrays(), "model");
  if (header.at("has_view").get<bool>()) {
    lc.view = build_view_learner(cfg, 0);
    read_into(payload, offset, header.at("view_params"), lc.view->state_arrays(), "view");
  }
  if (offset != payload.size())
    throw std::runtime_error("checkpoint: payload has " + std::to_string(payload.size() - offset) +
                             " trailing bytes");

  lc.meta.format_version = version;
  lc.meta.pretrain_method = header.at("pretrain").at("method").get<std::string>();
  lc.meta.corpus_digest = header.at("pretrain").at("corpus_digest").get<std::string>();
  lc.meta.seed = header.at("seed").get<uint64_t>();
  lc.meta.config_hash = header.value("config_hash", "");
  lc.meta.checkpoint_id = header.value("checkpoint_id", "");
  return lc;
}

}  // namespace topo
