#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "topo/encoder.hpp"
#include "topo/pretrain.hpp"
#include "topo/transfer.hpp"

namespace topo {

/// One corpus slice: a JSON Lines file and an optional cap on how many graphs
/// to take from it (-1 = all). Leave-one-out ablations are expressed by
/// editing this list.
struct CorpusSource {
  std::string path;
  int max_count = -1;
};

/// Complete run description; every default is overridable from the file.
struct ExperimentConfig {
  EncoderConfig encoder;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  std::vector<CorpusSource> corpus;
};

/// Parses with defaults; appends one message per violated field.
ExperimentConfig experiment_from_json(const nlohmann::json& j, std::vector<std::string>& errors);

/// Canonical (defaults filled, keys sorted) form used for hashing.
nlohmann::json experiment_to_json(const ExperimentConfig& cfg);

/// Hash of a canonicalized JSON value; stable under key reordering.
std::string config_hash(const nlohmann::json& j);

nlohmann::json run_result_to_json(const RunResult& r);
RunResult run_result_from_json(const nlohmann::json& j);

/// Comparison CSV (header plus one row): dataset, baseline_mean, model_mean,
/// p_value, better. "better" means the model beats the baseline in the
/// metric's direction at p < alpha.
std::string comparison_csv(const RunResult& baseline, const RunResult& model,
                           double alpha = 0.01);

/// Concatenates the listed corpora in order, honoring max_count per source.
std::vector<Graph> load_composed_corpus(const std::vector<CorpusSource>& sources);

/// Digest of the corpus composition (paths, caps, loaded counts).
std::string corpus_digest(const std::vector<CorpusSource>& sources,
                          const std::vector<size_t>& loaded_counts);

}  // namespace topo
