// Copyright 2026 the semrank authors
// SPDX-License-Identifier: Apache-2.0

#include "semrank/weights_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

#include "semrank/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "weight container assumes a little-endian host");

namespace semrank {

namespace {
constexpr char kMagic[8] = {'S', 'R', 'N', 'K', 'W', 'T', 'S', '1'};
constexpr std::uint32_t kFormatVersion = 1;

using TensorRef = std::pair<std::string, const std::vector<float>*>;
using MutTensorRef = std::pair<std::string, std::vector<float>*>;

template <typename W, typename Ref>
std::vector<Ref> tensor_table(W& w) {
  std::vector<Ref> refs;
  refs.push_back({"tok_emb", &w.tok_emb});
  refs.push_back({"pos_emb", &w.pos_emb});
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    refs.push_back({p + "wq", &l.wq});
    refs.push_back({p + "wk", &l.wk});
    refs.push_back({p + "wv", &l.wv});
    refs.push_back({p + "wo", &l.wo});
    refs.push_back({p + "ln1_gain", &l.ln1_gain});
    refs.push_back({p + "ln2_gain", &l.ln2_gain});
    refs.push_back({p + "w_mlp_in", &l.w_mlp_in});
    refs.push_back({p + "w_mlp_out", &l.w_mlp_out});
  }
  refs.push_back({"ln_f_gain", &w.ln_f_gain});
  refs.push_back({"w_vocab", &w.w_vocab});
  for (auto& h : w.heads) {
    refs.push_back({"heads." + h.name + ".w", &h.w});
    refs.push_back({"heads." + h.name + ".b", &h.b});
  }
  return refs;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json heads = nlohmann::json::array();
  for (const auto& h : c.head_specs) {
    heads.push_back({{"name", h.name}, {"arity", h.arity}});
  }
  return {{"n_layers", c.n_layers}, {"d_model", c.d_model},
          {"n_heads", c.n_heads},   {"d_ff", c.d_ff},
          {"vocab_size", c.vocab_size}, {"max_seq", c.max_seq},
          {"yes_token_id", c.yes_token_id}, {"no_token_id", c.no_token_id},
          {"head_specs", heads}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.n_layers = j.at("n_layers").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.n_heads = j.at("n_heads").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq = j.at("max_seq").get<int>();
  c.yes_token_id = j.at("yes_token_id").get<int>();
  c.no_token_id = j.at("no_token_id").get<int>();
  c.head_specs.clear();
  for (const auto& h : j.at("head_specs")) {
    c.head_specs.push_back({h.at("name").get<std::string>(),
                            h.at("arity").get<int>()});
  }
  return c;
}
}  // namespace

void save_weights(const ModelWeights& w, const std::string& path) {
  w.check_shapes();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open for write: " + path);

  auto refs = tensor_table<const ModelWeights, TensorRef>(w);
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : refs) {
    tensors.push_back({{"name", name},
                       {"shape", nlohmann::json::array({t->size()})},
                       {"offset", offset}});
    offset += t->size() * sizeof(float);
  }
  nlohmann::json manifest = {{"config", config_to_json(w.config)},
                             {"model_version", w.version},
                             {"tensors", tensors}};
  const std::string manifest_text = manifest.dump();

  out.write(kMagic, sizeof(kMagic));
  const std::uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const std::uint64_t manifest_len = manifest_text.size();
  out.write(reinterpret_cast<const char*>(&manifest_len), sizeof(manifest_len));
  out.write(manifest_text.data(),
            static_cast<std::streamsize>(manifest_text.size()));
  for (const auto& [name, t] : refs) {
    out.write(reinterpret_cast<const char*>(t->data()),
              static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw Error(ErrorCode::Io, "write failed: " + path);
}

ModelWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open: " + path);

  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::Io, "bad magic in weight file: " + path);
  }
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kFormatVersion) {
    throw Error(ErrorCode::Io, "unsupported weight format version");
  }
  std::uint64_t manifest_len = 0;
  in.read(reinterpret_cast<char*>(&manifest_len), sizeof(manifest_len));
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw Error(ErrorCode::Io, "truncated manifest: " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, std::string("manifest parse error: ") + e.what());
  }

  ModelWeights w;
  w.config = config_from_json(manifest.at("config"));
  w.config.validate();
  w.version = manifest.at("model_version").get<std::string>();
  w.layers.resize(static_cast<std::size_t>(w.config.n_layers));
  for (const auto& spec : w.config.head_specs) {
    w.heads.push_back({spec.name, spec.arity, {}, {}});
  }

  auto refs = tensor_table<ModelWeights, MutTensorRef>(w);
  std::size_t next = 0;
  for (const auto& entry : manifest.at("tensors")) {
    const auto name = entry.at("name").get<std::string>();
    if (next >= refs.size() || refs[next].first != name) {
      throw Error(ErrorCode::Io, "unexpected tensor in manifest: " + name);
    }
    std::uint64_t n_values = 1;
    for (const auto& dim : entry.at("shape")) {
      n_values *= dim.get<std::uint64_t>();
    }
    auto* t = refs[next].second;
    t->resize(n_values);
    in.read(reinterpret_cast<char*>(t->data()),
            static_cast<std::streamsize>(n_values * sizeof(float)));
    if (!in) throw Error(ErrorCode::Io, "truncated tensor data: " + name);
    ++next;
  }
  if (next != refs.size()) {
    throw Error(ErrorCode::Io, "weight file missing tensors");
  }
  w.check_shapes();
  return w;
}

}  // namespace semrank
