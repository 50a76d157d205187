#pragma once

#include <optional>
#include <string>

#include "topo/encoder.hpp"

namespace topo {

/// Everything a checkpoint records beyond the parameter payload.
struct CheckpointMeta {
  int format_version = 1;
  std::string pretrain_method = "none";
  std::string corpus_digest;
  uint64_t seed = 0;
  std::string config_hash;
  std::string checkpoint_id;  // filled on save
};

struct LoadedCheckpoint {
  Model model;
  std::optional<ViewLearner> view;
  CheckpointMeta meta;
};

/// Single-file container: 8-byte magic, little-endian u32 header length, JSON
/// header, then raw little-endian f32 parameter payload in header order.
/// Numeric round-trip is bitwise at f32.
void save_checkpoint(const std::string& path, Model& model, ViewLearner* view,
                     CheckpointMeta meta);

LoadedCheckpoint load_checkpoint(const std::string& path);

/// FNV-1a 64-bit hex digest.
std::string fnv1a_hex(const void* data, size_t len);
std::string fnv1a_hex(const std::string& s);

}  // namespace topo
