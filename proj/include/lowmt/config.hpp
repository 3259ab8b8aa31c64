#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace lowmt {

// Architecture and regularization knobs of the translation model.
struct ModelConfig {
  int hidden_size = 1024;
  int embedding_size = 512;
  int encoder_depth = 1;
  int encoder_transition_depth = 1;
  int decoder_depth = 1;
  int decoder_transition_base = 2;
  int decoder_transition_high = 0;  // unused when decoder_depth == 1
  bool tie_decoder_embeddings = false;
  bool layer_norm = false;
  bool lexical_model = false;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  double dropout_hidden = 0.0;
  double dropout_embedding = 0.0;
  double dropout_source_word = 0.0;
  double dropout_target_word = 0.0;
  double label_smoothing = 0.0;
  double layer_norm_eps = 1e-5;

  void validate() const;
};

// Optimization-loop knobs.
struct TrainConfig {
  double learning_rate = 1e-4;
  int max_tokens_per_batch = 4000;
  int validation_interval = 100;
  int patience = 10;
  int max_updates = 5000;
  int beam_size = 5;
  int max_sentence_length = 200;
  double grad_clip_norm = 0.0;  // 0 disables clipping
  uint64_t seed = 1;

  void validate() const;
};

// One column of the configuration ladder (systems 2..9).
struct SystemPreset {
  int id = 2;
  std::string label;
  ModelConfig model;
  TrainConfig train;
  int bpe_merges = 30000;
  uint64_t bpe_frequency_threshold = 10;
  // Full-scale validation intervals per data condition; desk runs override.
  int validation_interval_small = 50;   // up to a few hundred thousand words
  int validation_interval_large = 1000; // near-full corpora
};

// Presets at the published full-training scale.
SystemPreset preset_by_id(int id);
std::vector<int> preset_ids();  // {2,3,4,5,6,7,8,9}

// Shrinks a preset to laptop scale: hidden 64, embedding 32, batch tokens
// and merge budget divided by 10, validation every 100 updates, 5000 update cap.
SystemPreset desk_scale(SystemPreset preset);

// -- key = value config files -----------------------------------------------------

using ConfigKv = std::map<std::string, std::string>;

ConfigKv preset_to_kv(const SystemPreset& preset);
SystemPreset preset_from_kv(const ConfigKv& kv);

// Model-architecture subset used by checkpoint headers.
ConfigKv model_config_to_kv(const ModelConfig& cfg);
ModelConfig model_config_from_kv(const ConfigKv& kv);

std::string format_config(const ConfigKv& kv);
ConfigKv parse_config(const std::string& text);

void save_config(const SystemPreset& preset, const std::string& path);
// `name` may be a preset name ("system2".."system9") or a config file path.
SystemPreset resolve_preset(const std::string& name);

}  // namespace lowmt
