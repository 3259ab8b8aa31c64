#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "lowmt/config.hpp"
#include "lowmt/model.hpp"

namespace lowmt {

struct CheckpointError : std::runtime_error {
  explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

// Binary checkpoint: magic, format version, canonical key-value config text,
// both token dictionaries, then one record per tensor with a row-major
// little-endian IEEE-754 32-bit payload.
struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  TokenDict src_dict;
  TokenDict tgt_dict;
};

namespace ckpt_detail {

constexpr char kMagic[8] = {'L', 'O', 'W', 'M', 'T', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

inline void write_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4))
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

inline void write_f32(std::ostream& out, float v) {
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32(out, bits);
}

inline float read_f32(std::istream& in, const char* what) {
  uint32_t bits = read_u32(in, what);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  uint32_t len = read_u32(in, what);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len))
    throw CheckpointError(std::string("truncated checkpoint while reading ") + what);
  return s;
}

inline void write_dict(std::ostream& out, const TokenDict& dict) {
  write_u32(out, static_cast<uint32_t>(dict.id_to_token.size()));
  for (const auto& tok : dict.id_to_token) write_string(out, tok);
}

inline TokenDict read_dict(std::istream& in) {
  uint32_t n = read_u32(in, "dictionary size");
  std::vector<std::pair<std::string, uint64_t>> types;
  TokenDict dict;
  dict.id_to_token.reserve(n);
  for (uint32_t i = 0; i < n; ++i) dict.id_to_token.push_back(read_string(in, "dictionary"));
  for (size_t i = 0; i < dict.id_to_token.size(); ++i)
    dict.token_to_id.emplace(dict.id_to_token[i], static_cast<int32_t>(i));
  return dict;
}

}  // namespace ckpt_detail

template <typename Scalar>
void save_checkpoint(ModelParams<Scalar>& params, const ModelConfig& config,
                     const TokenDict& src_dict, const TokenDict& tgt_dict,
                     const std::string& path) {
  namespace d = ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out.write(d::kMagic, 8);
  d::write_u32(out, d::kVersion);
  d::write_string(out, format_config(model_config_to_kv(config)));
  d::write_dict(out, src_dict);
  d::write_dict(out, tgt_dict);

  d::write_u32(out, static_cast<uint32_t>(params.tensor_count()));
  params.visit([&](const std::string& name, MatX<Scalar>& m) {
    d::write_string(out, name);
    out.put(0);  // dtype 0 = float32
    d::write_u32(out, static_cast<uint32_t>(m.rows()));
    d::write_u32(out, static_cast<uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        d::write_f32(out, static_cast<float>(m(r, c)));
  });
  if (!out) throw CheckpointError("write failed for checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  namespace d = ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, d::kMagic, 8) != 0)
    throw CheckpointError("not a checkpoint file (bad magic): " + path);
  uint32_t version = d::read_u32(in, "format version");
  if (version != d::kVersion)
    throw CheckpointError("unsupported checkpoint format version " + std::to_string(version) +
                          " (expected " + std::to_string(d::kVersion) + ")");

  Checkpoint ck;
  ck.config = model_config_from_kv(parse_config(d::read_string(in, "config block")));
  ck.src_dict = d::read_dict(in);
  ck.tgt_dict = d::read_dict(in);
  ck.params = allocate_params<float>(ck.config);

  uint32_t count = d::read_u32(in, "tensor count");
  if (count != ck.params.tensor_count())
    throw CheckpointError("checkpoint stores " + std::to_string(count) + " tensors but config implies " +
                          std::to_string(ck.params.tensor_count()));
  ck.params.visit([&](const std::string& name, MatX<float>& m) {
    std::string stored = d::read_string(in, "tensor name");
    if (stored != name)
      throw CheckpointError("tensor order mismatch: expected " + name + ", found " + stored);
    int dtype = in.get();
    if (dtype != 0) throw CheckpointError("tensor " + name + ": unsupported dtype");
    uint32_t rows = d::read_u32(in, "tensor rows");
    uint32_t cols = d::read_u32(in, "tensor cols");
    if (rows != static_cast<uint32_t>(m.rows()) || cols != static_cast<uint32_t>(m.cols()))
      throw CheckpointError("tensor " + name + ": expected shape " +
                            shape_str(m.rows(), m.cols()) + ", found " +
                            shape_str(rows, cols));
    for (uint32_t r = 0; r < rows; ++r)
      for (uint32_t c = 0; c < cols; ++c) m(r, c) = d::read_f32(in, name.c_str());
  });
  return ck;
}

// Precision converters between training (float) and verification (double) modes.
template <typename To, typename From>
ModelParams<To> cast_params(ModelParams<From>& params) {
  ModelParams<To> out;
  out.tied = params.tied;
  out.layer_norm = params.layer_norm;
  out.lexical = params.lexical;
  std::vector<MatX<From>*> src;
  params.visit([&](const std::string&, MatX<From>& m) { src.push_back(&m); });

  // Rebuild the structural skeleton by copying shapes through a visit of the
  // source, then assigning casts in order.
  out.encoder.resize(params.encoder.size());
  for (size_t l = 0; l < params.encoder.size(); ++l) {
    out.encoder[l].forward.resize(params.encoder[l].forward.size());
    out.encoder[l].backward.resize(params.encoder[l].backward.size());
    for (size_t t = 0; t < params.encoder[l].forward.size(); ++t) {
      out.encoder[l].forward[t].has_input = params.encoder[l].forward[t].has_input;
      out.encoder[l].forward[t].layer_norm = params.encoder[l].forward[t].layer_norm;
      out.encoder[l].backward[t].has_input = params.encoder[l].backward[t].has_input;
      out.encoder[l].backward[t].layer_norm = params.encoder[l].backward[t].layer_norm;
    }
  }
  out.decoder_base.resize(params.decoder_base.size());
  for (size_t t = 0; t < params.decoder_base.size(); ++t) {
    out.decoder_base[t].has_input = params.decoder_base[t].has_input;
    out.decoder_base[t].layer_norm = params.decoder_base[t].layer_norm;
  }
  out.decoder_high.resize(params.decoder_high.size());
  for (size_t l = 0; l < params.decoder_high.size(); ++l) {
    out.decoder_high[l].resize(params.decoder_high[l].size());
    for (size_t t = 0; t < params.decoder_high[l].size(); ++t) {
      out.decoder_high[l][t].has_input = params.decoder_high[l][t].has_input;
      out.decoder_high[l][t].layer_norm = params.decoder_high[l][t].layer_norm;
    }
  }
  std::vector<MatX<To>*> dst;
  out.visit([&](const std::string&, MatX<To>& m) { dst.push_back(&m); });
  if (src.size() != dst.size())
    throw CheckpointError("cast_params: structural mismatch");
  for (size_t i = 0; i < src.size(); ++i) *dst[i] = src[i]->template cast<To>();
  return out;
}

}  // namespace lowmt
