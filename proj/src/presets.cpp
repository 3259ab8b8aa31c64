#include "lowmt/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lowmt {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string(what) + " must be >= 1");
  };
  positive(hidden_size, "hidden layer size");
  positive(embedding_size, "embedding size");
  positive(encoder_depth, "encoder depth");
  positive(encoder_transition_depth, "encoder recurrence transition depth");
  positive(decoder_depth, "decoder depth");
  if (decoder_transition_base < 2)
    throw std::invalid_argument(
        "dec. recurrence transition depth (base) must be >= 2: the attention "
        "readout is interleaved after the first transition");
  if (decoder_depth > 1 && decoder_transition_high < 1)
    throw std::invalid_argument(
        "dec. recurrence transition depth (high) must be >= 1 when decoder depth > 1");
  for (double rate : {dropout_hidden, dropout_embedding, dropout_source_word,
                      dropout_target_word}) {
    if (rate < 0.0 || rate > 1.0)
      throw std::invalid_argument("dropout rates must lie in [0, 1]");
  }
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw std::invalid_argument("label smoothing must lie in [0, 1)");
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (patience < 1) throw std::invalid_argument("early stopping patience must be >= 1");
  if (max_tokens_per_batch < 1)
    throw std::invalid_argument("minibatch size (# tokens) must be >= 1");
  if (validation_interval < 1)
    throw std::invalid_argument("validation interval must be >= 1");
  if (beam_size < 1) throw std::invalid_argument("beam size must be >= 1");
}

static SystemPreset baseline_system2() {
  SystemPreset p;
  p.id = 2;
  p.label = "baseline";
  p.model = ModelConfig{};
  p.model.hidden_size = 1024;
  p.model.embedding_size = 512;
  p.model.encoder_depth = 1;
  p.model.encoder_transition_depth = 1;
  p.model.decoder_depth = 1;
  p.model.decoder_transition_base = 2;
  p.model.decoder_transition_high = 0;
  p.train = TrainConfig{};
  p.train.learning_rate = 0.0001;
  p.train.max_tokens_per_batch = 4000;
  p.train.patience = 10;
  p.train.beam_size = 5;
  p.train.max_sentence_length = 200;
  p.train.max_updates = 1000000;
  p.bpe_merges = 30000;
  p.bpe_frequency_threshold = 10;
  p.validation_interval_small = 50;
  p.validation_interval_large = 1000;
  p.train.validation_interval = p.validation_interval_small;
  return p;
}

SystemPreset preset_by_id(int id) {
  SystemPreset p = baseline_system2();
  if (id < 2 || id > 9)
    throw std::invalid_argument("unknown system preset id " + std::to_string(id) +
                                " (expected 2..9)");
  if (id >= 3) {
    p.id = 3;
    p.label = "+ deep recurrence, tied embeddings, layer norm, dropout, label smoothing";
    p.model.encoder_depth = 2;
    p.model.encoder_transition_depth = 2;
    p.model.decoder_depth = 2;
    p.model.decoder_transition_base = 4;
    p.model.decoder_transition_high = 2;
    p.model.tie_decoder_embeddings = true;
    p.model.layer_norm = true;
    p.model.dropout_hidden = 0.2;
    p.model.dropout_embedding = 0.2;
    p.model.dropout_source_word = 0.1;
    p.model.label_smoothing = 0.1;
    p.validation_interval_small = 100;
    p.validation_interval_large = 2000;
  }
  if (id >= 4) {
    p.id = 4;
    p.label = "+ reduced BPE vocabulary";
    p.bpe_merges = 2000;
  }
  if (id >= 5) {
    p.id = 5;
    p.label = "+ reduced batch size";
    p.train.max_tokens_per_batch = 1000;
    p.validation_interval_small = 400;
    p.validation_interval_large = 8000;
  }
  if (id == 6) {
    p.id = 6;
    p.label = "+ lexical model";
    p.model.lexical_model = true;
  }
  if (id >= 7) {
    p.id = 7;
    p.label = "+ aggressive word dropout";
    p.model.lexical_model = false;
    p.model.dropout_hidden = 0.5;
    p.model.dropout_embedding = 0.5;
    p.model.dropout_source_word = 0.3;
    p.model.dropout_target_word = 0.3;
  }
  if (id >= 8) {
    p.id = 8;
    p.label = "+ tuned learning rate, depth, label smoothing";
    p.train.learning_rate = 0.0005;
    p.model.encoder_depth = 1;
    p.model.decoder_depth = 1;
    p.model.decoder_transition_base = 2;
    p.model.decoder_transition_high = 0;
    p.model.label_smoothing = 0.2;
  }
  if (id >= 9) {
    p.id = 9;
    p.label = "+ lexical model";
    p.model.lexical_model = true;
  }
  p.train.validation_interval = p.validation_interval_small;
  return p;
}

std::vector<int> preset_ids() { return {2, 3, 4, 5, 6, 7, 8, 9}; }

SystemPreset desk_scale(SystemPreset p) {
  p.model.hidden_size = 64;
  p.model.embedding_size = 32;
  p.train.max_tokens_per_batch = std::max(1000, p.train.max_tokens_per_batch / 2);
  p.bpe_merges = std::max(80, p.bpe_merges / 50);
  p.train.validation_interval = 100;
  p.train.max_updates = 5000;
  return p;
}

// -- key = value serialization -------------------------------------------------

static std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

static std::string format_rate(double v) { return v == 0.0 ? "-" : format_number(v); }
static std::string format_flag(bool v) { return v ? "yes" : "-"; }

ConfigKv preset_to_kv(const SystemPreset& p) {
  ConfigKv kv;
  kv["system id"] = std::to_string(p.id);
  kv["label"] = p.label;
  kv["hidden layer size"] = std::to_string(p.model.hidden_size);
  kv["embedding size"] = std::to_string(p.model.embedding_size);
  kv["encoder depth"] = std::to_string(p.model.encoder_depth);
  kv["encoder recurrence transition depth"] = std::to_string(p.model.encoder_transition_depth);
  kv["decoder depth"] = std::to_string(p.model.decoder_depth);
  kv["dec. recurrence transition depth (base)"] =
      std::to_string(p.model.decoder_transition_base);
  kv["dec. recurrence transition depth (high)"] =
      p.model.decoder_transition_high == 0 ? "-" : std::to_string(p.model.decoder_transition_high);
  kv["tie decoder embeddings"] = format_flag(p.model.tie_decoder_embeddings);
  kv["layer normalization"] = format_flag(p.model.layer_norm);
  kv["lexical model"] = format_flag(p.model.lexical_model);
  kv["hidden dropout"] = format_rate(p.model.dropout_hidden);
  kv["embedding dropout"] = format_rate(p.model.dropout_embedding);
  kv["source word dropout"] = format_rate(p.model.dropout_source_word);
  kv["target word dropout"] = format_rate(p.model.dropout_target_word);
  kv["label smoothing"] = format_rate(p.model.label_smoothing);
  kv["maximum sentence length"] = std::to_string(p.train.max_sentence_length);
  kv["minibatch size (# tokens)"] = std::to_string(p.train.max_tokens_per_batch);
  kv["learning rate"] = format_number(p.train.learning_rate);
  kv["optimizer"] = "adam";
  kv["early stopping patience"] = std::to_string(p.train.patience);
  kv["validation interval"] = std::to_string(p.train.validation_interval);
  kv["validation interval (small data)"] = std::to_string(p.validation_interval_small);
  kv["validation interval (large data)"] = std::to_string(p.validation_interval_large);
  kv["beam size"] = std::to_string(p.train.beam_size);
  kv["bpe merge operations"] = std::to_string(p.bpe_merges);
  kv["bpe frequency threshold"] = std::to_string(p.bpe_frequency_threshold);
  kv["max updates"] = std::to_string(p.train.max_updates);
  kv["gradient clip norm"] = format_rate(p.train.grad_clip_norm);
  kv["seed"] = std::to_string(p.train.seed);
  return kv;
}

static double parse_rate(const std::string& v) { return v == "-" ? 0.0 : std::stod(v); }
static bool parse_flag(const std::string& v) { return v == "yes" || v == "true" || v == "1"; }

SystemPreset preset_from_kv(const ConfigKv& kv) {
  SystemPreset p = baseline_system2();
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  if (auto* v = get("system id")) p.id = std::stoi(*v);
  if (auto* v = get("label")) p.label = *v;
  if (auto* v = get("hidden layer size")) p.model.hidden_size = std::stoi(*v);
  if (auto* v = get("embedding size")) p.model.embedding_size = std::stoi(*v);
  if (auto* v = get("encoder depth")) p.model.encoder_depth = std::stoi(*v);
  if (auto* v = get("encoder recurrence transition depth"))
    p.model.encoder_transition_depth = std::stoi(*v);
  if (auto* v = get("decoder depth")) p.model.decoder_depth = std::stoi(*v);
  if (auto* v = get("dec. recurrence transition depth (base)"))
    p.model.decoder_transition_base = std::stoi(*v);
  if (auto* v = get("dec. recurrence transition depth (high)"))
    p.model.decoder_transition_high = *v == "-" ? 0 : std::stoi(*v);
  if (auto* v = get("tie decoder embeddings")) p.model.tie_decoder_embeddings = parse_flag(*v);
  if (auto* v = get("layer normalization")) p.model.layer_norm = parse_flag(*v);
  if (auto* v = get("lexical model")) p.model.lexical_model = parse_flag(*v);
  if (auto* v = get("hidden dropout")) p.model.dropout_hidden = parse_rate(*v);
  if (auto* v = get("embedding dropout")) p.model.dropout_embedding = parse_rate(*v);
  if (auto* v = get("source word dropout")) p.model.dropout_source_word = parse_rate(*v);
  if (auto* v = get("target word dropout")) p.model.dropout_target_word = parse_rate(*v);
  if (auto* v = get("label smoothing")) p.model.label_smoothing = parse_rate(*v);
  if (auto* v = get("maximum sentence length")) p.train.max_sentence_length = std::stoi(*v);
  if (auto* v = get("minibatch size (# tokens)")) p.train.max_tokens_per_batch = std::stoi(*v);
  if (auto* v = get("learning rate")) p.train.learning_rate = std::stod(*v);
  if (auto* v = get("early stopping patience")) p.train.patience = std::stoi(*v);
  if (auto* v = get("validation interval")) p.train.validation_interval = std::stoi(*v);
  if (auto* v = get("validation interval (small data)"))
    p.validation_interval_small = std::stoi(*v);
  if (auto* v = get("validation interval (large data)"))
    p.validation_interval_large = std::stoi(*v);
  if (auto* v = get("beam size")) p.train.beam_size = std::stoi(*v);
  if (auto* v = get("bpe merge operations")) p.bpe_merges = std::stoi(*v);
  if (auto* v = get("bpe frequency threshold")) p.bpe_frequency_threshold = std::stoull(*v);
  if (auto* v = get("max updates")) p.train.max_updates = std::stoi(*v);
  if (auto* v = get("gradient clip norm")) p.train.grad_clip_norm = parse_rate(*v);
  if (auto* v = get("seed")) p.train.seed = std::stoull(*v);
  return p;
}

ConfigKv model_config_to_kv(const ModelConfig& m) {
  ConfigKv kv;
  kv["hidden layer size"] = std::to_string(m.hidden_size);
  kv["embedding size"] = std::to_string(m.embedding_size);
  kv["encoder depth"] = std::to_string(m.encoder_depth);
  kv["encoder recurrence transition depth"] = std::to_string(m.encoder_transition_depth);
  kv["decoder depth"] = std::to_string(m.decoder_depth);
  kv["dec. recurrence transition depth (base)"] = std::to_string(m.decoder_transition_base);
  kv["dec. recurrence transition depth (high)"] =
      m.decoder_transition_high == 0 ? "-" : std::to_string(m.decoder_transition_high);
  kv["tie decoder embeddings"] = format_flag(m.tie_decoder_embeddings);
  kv["layer normalization"] = format_flag(m.layer_norm);
  kv["lexical model"] = format_flag(m.lexical_model);
  kv["hidden dropout"] = format_rate(m.dropout_hidden);
  kv["embedding dropout"] = format_rate(m.dropout_embedding);
  kv["source word dropout"] = format_rate(m.dropout_source_word);
  kv["target word dropout"] = format_rate(m.dropout_target_word);
  kv["label smoothing"] = format_rate(m.label_smoothing);
  kv["source vocabulary size"] = std::to_string(m.src_vocab_size);
  kv["target vocabulary size"] = std::to_string(m.tgt_vocab_size);
  return kv;
}

ModelConfig model_config_from_kv(const ConfigKv& kv) {
  ModelConfig m;
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw std::runtime_error(std::string("model config is missing key: ") + key);
    return it->second;
  };
  m.hidden_size = std::stoi(get("hidden layer size"));
  m.embedding_size = std::stoi(get("embedding size"));
  m.encoder_depth = std::stoi(get("encoder depth"));
  m.encoder_transition_depth = std::stoi(get("encoder recurrence transition depth"));
  m.decoder_depth = std::stoi(get("decoder depth"));
  m.decoder_transition_base = std::stoi(get("dec. recurrence transition depth (base)"));
  const std::string& high = get("dec. recurrence transition depth (high)");
  m.decoder_transition_high = high == "-" ? 0 : std::stoi(high);
  m.tie_decoder_embeddings = parse_flag(get("tie decoder embeddings"));
  m.layer_norm = parse_flag(get("layer normalization"));
  m.lexical_model = parse_flag(get("lexical model"));
  m.dropout_hidden = parse_rate(get("hidden dropout"));
  m.dropout_embedding = parse_rate(get("embedding dropout"));
  m.dropout_source_word = parse_rate(get("source word dropout"));
  m.dropout_target_word = parse_rate(get("target word dropout"));
  m.label_smoothing = parse_rate(get("label smoothing"));
  m.src_vocab_size = std::stoi(get("source vocabulary size"));
  m.tgt_vocab_size = std::stoi(get("target vocabulary size"));
  return m;
}

std::string format_config(const ConfigKv& kv) {
  std::string out;
  for (const auto& [key, value] : kv) out += key + " = " + value + "\n";
  return out;
}

ConfigKv parse_config(const std::string& text) {
  ConfigKv kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t start = line.find_first_not_of(" \t");
    if (start == std::string::npos || line[start] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               " has no '=': " + line);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      size_t b = s.find_last_not_of(" \t");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + " has empty key");
    kv[key] = value;
  }
  return kv;
}

void save_config(const SystemPreset& preset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << format_config(preset_to_kv(preset));
}

SystemPreset resolve_preset(const std::string& name) {
  if (name.size() == 7 && name.rfind("system", 0) == 0 && name[6] >= '2' && name[6] <= '9')
    return preset_by_id(name[6] - '0');
  std::ifstream in(name, std::ios::binary);
  if (!in) throw std::runtime_error("not a preset name and not a readable config file: " + name);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return preset_from_kv(parse_config(buffer.str()));
}

}  // namespace lowmt
