#include "revlab/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <stdexcept>

namespace revlab {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'R', 'L', 'L', 'B'};

void put_u32_le(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64_le(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32_le(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint truncated while reading version");
  return b[0] | (uint32_t{b[1]} << 8) | (uint32_t{b[2]} << 16) | (uint32_t{b[3]} << 24);
}

uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint truncated while reading header length");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t{b[i]} << (8 * i);
  return v;
}

json config_to_json(const ModelConfig& c) {
  return json{{"num_layers", c.num_layers}, {"num_heads", c.num_heads},
              {"embed_dim", c.embed_dim},   {"mlp_dim", c.mlp_dim},
              {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
              {"rope_base", c.rope_base}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.mlp_dim = j.at("mlp_dim").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.max_seq_len = j.at("max_seq_len").get<int>();
  c.rope_base = j.at("rope_base").get<float>();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  auto refs = tensor_refs(model);
  json dir = json::array();
  uint64_t offset = 0;
  for (const auto& r : refs) {
    dir.push_back({{"name", r.name},
                   {"shape", {r.rows, r.cols}},
                   {"offset", offset}});
    offset += static_cast<uint64_t>(r.rows) * r.cols * sizeof(float);
  }
  json header{{"model_config", config_to_json(model.config)}, {"tensors", dir}};
  std::string header_bytes = header.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32_le(os, kCheckpointVersion);
  put_u64_le(os, header_bytes.size());
  os.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& r : refs)
    os.write(reinterpret_cast<const char*>(r.data),
             static_cast<std::streamsize>(r.rows * r.cols * sizeof(float)));
  if (!os) throw std::runtime_error("write failure on checkpoint: " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4)) throw std::runtime_error("checkpoint truncated: no magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint magic mismatch: not a RLLB file");
  uint32_t version = get_u32_le(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  uint64_t header_len = get_u64_le(is);
  std::string header_bytes(header_len, '\0');
  if (!is.read(header_bytes.data(), static_cast<std::streamsize>(header_len)))
    throw std::runtime_error("checkpoint truncated inside header");

  json header = json::parse(header_bytes);
  ModelConfig config = config_from_json(header.at("model_config"));
  validate(config);
  Model model = init_model<float>(config, 0);
  auto refs = tensor_refs(model);
  const auto& dir = header.at("tensors");
  if (dir.size() != refs.size())
    throw std::runtime_error("checkpoint tensor directory has " +
                             std::to_string(dir.size()) + " entries, expected " +
                             std::to_string(refs.size()));
  uint64_t expect_offset = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& entry = dir[i];
    if (entry.at("name").get<std::string>() != refs[i].name)
      throw std::runtime_error("checkpoint tensor order mismatch at " + refs[i].name);
    auto shape = entry.at("shape");
    if (shape[0].get<int64_t>() != refs[i].rows || shape[1].get<int64_t>() != refs[i].cols)
      throw std::runtime_error("checkpoint shape mismatch for " + refs[i].name);
    if (entry.at("offset").get<uint64_t>() != expect_offset)
      throw std::runtime_error("checkpoint offsets not gap-free at " + refs[i].name);
    expect_offset += static_cast<uint64_t>(refs[i].rows) * refs[i].cols * sizeof(float);
  }
  for (auto& r : refs) {
    if (!is.read(reinterpret_cast<char*>(r.data),
                 static_cast<std::streamsize>(r.rows * r.cols * sizeof(float))))
      throw std::runtime_error("checkpoint truncated inside tensor " + r.name);
  }
  return model;
}

}  // namespace revlab
