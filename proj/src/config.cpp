#include "topo/config.hpp"

#include <cmath>
#include <sstream>

#include "topo/checkpoint.hpp"
#include "topo/corpus.hpp"

namespace topo {

using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& into, std::vector<std::string>& errors) {
  if (!j.contains(key)) return;
  try {
    into = j.at(key).get<T>();
  } catch (const std::exception&) {
    errors.push_back(std::string(key) + ": wrong type");
  }
}

}  // namespace

ExperimentConfig experiment_from_json(const json& j, std::vector<std::string>& errors) {
  ExperimentConfig cfg;
  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    take(e, "num_layers", cfg.encoder.num_layers, errors);
    take(e, "hidden_dim", cfg.encoder.hidden_dim, errors);
    take(e, "projection_dim", cfg.encoder.projection_dim, errors);
    std::string readout = cfg.encoder.readout == Readout::Mean ? "mean" : "sum";
    take(e, "readout", readout, errors);
    if (readout == "mean")
      cfg.encoder.readout = Readout::Mean;
    else if (readout == "sum")
      cfg.encoder.readout = Readout::Sum;
    else
      errors.push_back("encoder.readout: must be mean or sum");
    take(e, "batch_norm", cfg.encoder.batch_norm, errors);
    take(e, "epsilon_learnable", cfg.encoder.epsilon_learnable, errors);
    if (cfg.encoder.num_layers < 1) errors.push_back("encoder.num_layers: must be >= 1");
    if (cfg.encoder.hidden_dim < 1) errors.push_back("encoder.hidden_dim: must be >= 1");
    if (cfg.encoder.projection_dim < 1) errors.push_back("encoder.projection_dim: must be >= 1");
  }
  if (j.contains("pretrain")) {
    const json& p = j["pretrain"];
    std::string method = method_name(cfg.pretrain.method);
    take(p, "method", method, errors);
    try {
      cfg.pretrain.method = method_from_name(method);
    } catch (const std::exception&) {
      errors.push_back("pretrain.method: must be adgcl, graphcl_edge, or graphcl_node");
    }
    take(p, "epochs", cfg.pretrain.epochs, errors);
    take(p, "batch_size", cfg.pretrain.batch_size, errors);
    take(p, "lr_encoder", cfg.pretrain.lr_encoder, errors);
    take(p, "lr_view", cfg.pretrain.lr_view, errors);
    take(p, "temperature", cfg.pretrain.temperature, errors);
    take(p, "drop_prob", cfg.pretrain.drop_prob, errors);
    take(p, "reg_weight", cfg.pretrain.reg_weight, errors);
    take(p, "concrete_temperature", cfg.pretrain.concrete_temperature, errors);
    for (const std::string& bad : cfg.pretrain.validate()) errors.push_back("pretrain." + bad);
  }
  if (j.contains("finetune")) {
    const json& f = j["finetune"];
    take(f, "runs", cfg.finetune.runs, errors);
    take(f, "epochs", cfg.finetune.epochs, errors);
    take(f, "lr", cfg.finetune.lr, errors);
    take(f, "batch_size", cfg.finetune.batch_size, errors);
    take(f, "train_fraction", cfg.finetune.train_fraction, errors);
    take(f, "freeze_encoder", cfg.finetune.freeze_encoder, errors);
    take(f, "threads", cfg.finetune.threads, errors);
    for (const std::string& bad : cfg.finetune.validate()) errors.push_back("finetune." + bad);
  }
  uint64_t seed = 0;
  take(j, "seed", seed, errors);
  cfg.pretrain.seed = seed;
  cfg.finetune.seed = seed;
  if (j.contains("corpus")) {
    if (!j["corpus"].is_array()) {
      errors.push_back("corpus: must be a list of {path, max_count}");
    } else {
      for (const auto& entry : j["corpus"]) {
        CorpusSource src;
        if (entry.is_string()) {
          src.path = entry.get<std::string>();
        } else if (entry.is_object() && entry.contains("path")) {
          src.path = entry["path"].get<std::string>();
          take(entry, "max_count", src.max_count, errors);
        } else {
          errors.push_back("corpus: entry without a path");
          continue;
        }
        cfg.corpus.push_back(std::move(src));
      }
    }
  }
  return cfg;
}

json experiment_to_json(const ExperimentConfig& cfg) {
  json j;
  j["encoder"] = {{"num_layers", cfg.encoder.num_layers},
                  {"hidden_dim", cfg.encoder.hidden_dim},
                  {"projection_dim", cfg.encoder.projection_dim},
                  {"readout", cfg.encoder.readout == Readout::Mean ? "mean" : "sum"},
                  {"batch_norm", cfg.encoder.batch_norm},
                  {"epsilon_learnable", cfg.encoder.epsilon_learnable}};
  j["pretrain"] = {{"method", method_name(cfg.pretrain.method)},
                   {"epochs", cfg.pretrain.epochs},
                   {"batch_size", cfg.pretrain.batch_size},
                   {"lr_encoder", cfg.pretrain.lr_encoder},
                   {"lr_view", cfg.pretrain.lr_view},
                   {"temperature", cfg.pretrain.temperature},
                   {"drop_prob", cfg.pretrain.drop_prob},
                   {"reg_weight", cfg.pretrain.reg_weight},
                   {"concrete_temperature", cfg.pretrain.concrete_temperature}};
  j["finetune"] = {{"runs", cfg.finetune.runs},
                   {"epochs", cfg.finetune.epochs},
                   {"lr", cfg.finetune.lr},
                   {"batch_size", cfg.finetune.batch_size},
                   {"train_fraction", cfg.finetune.train_fraction},
                   {"freeze_encoder", cfg.finetune.freeze_encoder},
                   {"threads", cfg.finetune.threads}};
  j["seed"] = cfg.pretrain.seed;
  json corpus = json::array();
  for (const CorpusSource& s : cfg.corpus)
    corpus.push_back({{"path", s.path}, {"max_count", s.max_count}});
  j["corpus"] = std::move(corpus);
  return j;
}

std::string config_hash(const json& j) { return fnv1a_hex(j.dump()); }

json run_result_to_json(const RunResult& r) {
  return json{{"dataset", r.dataset},
              {"task", r.task},
              {"metric", r.metric},
              {"direction", r.higher_better ? "higher" : "lower"},
              {"scores", r.scores},
              {"mean", r.mean},
              {"std", r.stddev},
              {"config_hash", r.config_hash},
              {"checkpoint_id", r.checkpoint_id}};
}

RunResult run_result_from_json(const json& j) {
  RunResult r;
  r.dataset = j.at("dataset").get<std::string>();
  r.task = j.at("task").get<std::string>();
  r.metric = j.at("metric").get<std::string>();
  r.higher_better = j.at("direction").get<std::string>() == "higher";
  r.scores = j.at("scores").get<std::vector<double>>();
  r.mean = j.at("mean").get<double>();
  r.stddev = j.at("std").get<double>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.checkpoint_id = j.at("checkpoint_id").get<std::string>();
  const double m = mean_of(r.scores);
  const double s = sample_std(r.scores);
  if (std::fabs(m - r.mean) > 1e-9 * std::max(1.0, std::fabs(m)) ||
      std::fabs(s - r.stddev) > 1e-9 * std::max(1.0, std::fabs(s)))
    throw std::runtime_error("run result: stored mean/std do not match the scores");
  return r;
}

std::string comparison_csv(const RunResult& baseline, const RunResult& model, double alpha) {
  if (baseline.metric != model.metric || baseline.higher_better != model.higher_better)
    throw std::invalid_argument("comparison: results use different metrics");
  const double p = welch_p_value(baseline.scores, model.scores);
  const bool directional = model.higher_better ? model.mean > baseline.mean
                                               : model.mean < baseline.mean;
  const bool better = directional && p < alpha;
  std::ostringstream os;
  os << "dataset,baseline_mean,model_mean,p_value,better\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g,%s\n",
                (model.dataset.empty() ? baseline.dataset : model.dataset).c_str(), baseline.mean,
                model.mean, p, better ? "true" : "false");
  os << buf;
  return os.str();
}

std::vector<Graph> load_composed_corpus(const std::vector<CorpusSource>& sources) {
  std::vector<Graph> all;
  for (const CorpusSource& s : sources) {
    std::vector<Graph> part = load_corpus(s.path);
    const size_t take_n = s.max_count < 0 ? part.size()
                                          : std::min(part.size(), static_cast<size_t>(s.max_count));
    for (size_t i = 0; i < take_n; ++i) all.push_back(std::move(part[i]));
  }
  return all;
}

std::string corpus_digest(const std::vector<CorpusSource>& sources,
                          const std::vector<size_t>& loaded_counts) {
  json j = json::array();
  for (size_t i = 0; i < sources.size(); ++i)
    j.push_back({{"path", sources[i].path},
                 {"max_count", sources[i].max_count},
                 {"loaded", i < loaded_counts.size() ? loaded_counts[i] : 0}});
  return fnv1a_hex(j.dump());
}

}  // namespace topo
