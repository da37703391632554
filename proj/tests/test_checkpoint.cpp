#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "revlab/checkpoint.hpp"

using namespace revlab;
namespace fs = std::filesystem;

namespace {

ModelConfig micro() {
  ModelConfig c;
  c.num_layers = 2;
  c.num_heads = 2;
  c.embed_dim = 16;
  c.mlp_dim = 32;
  c.max_seq_len = 20;
  return c;
}

struct TempFile {
  fs::path path;
  explicit TempFile(const char* stem)
      : path(fs::temp_directory_path() / (std::string(stem) + ".rllb")) {}
  ~TempFile() {
    std::error_code ec;
    fs::remove(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("checkpoint round-trips bit-exact") {
  Model model = init_model<float>(micro(), 61);
  model.embed(3, 5) = 0.123456f;  // make sure we are not comparing two inits
  model.layers[1].wo(7, 7) = -9.75f;

  TempFile f("roundtrip");
  save_checkpoint(model, f.path.string());
  const Model back = load_checkpoint(f.path.string());

  CHECK(back.config.num_layers == model.config.num_layers);
  CHECK(back.config.num_heads == model.config.num_heads);
  CHECK(back.config.embed_dim == model.config.embed_dim);
  CHECK(back.config.mlp_dim == model.config.mlp_dim);
  CHECK(back.config.vocab_size == model.config.vocab_size);
  CHECK(back.config.max_seq_len == model.config.max_seq_len);
  CHECK(back.config.rope_base == model.config.rope_base);

  auto ra = tensor_refs(model);
  auto rb = tensor_refs(back);
  REQUIRE(ra.size() == rb.size());
  for (size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].name == rb[i].name);
    REQUIRE(ra[i].rows * ra[i].cols == rb[i].rows * rb[i].cols);
    for (int64_t j = 0; j < ra[i].rows * ra[i].cols; ++j)
      CHECK(ra[i].data[j] == rb[i].data[j]);
  }
}

TEST_CASE("header carries the gap-free tensor directory in order") {
  Model model = init_model<float>(micro(), 62);
  TempFile f("header");
  save_checkpoint(model, f.path.string());

  const std::string bytes = slurp(f.path);
  REQUIRE(bytes.size() > 16);
  CHECK(bytes.substr(0, 4) == "RLLB");
  uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i)
    header_len |= uint64_t{static_cast<unsigned char>(bytes[8 + i])} << (8 * i);
  const nlohmann::json header = nlohmann::json::parse(bytes.substr(16, header_len));

  auto refs = tensor_refs(model);
  const auto& dir = header.at("tensors");
  REQUIRE(dir.size() == refs.size());
  uint64_t expect = 0;
  for (size_t i = 0; i < refs.size(); ++i) {
    CHECK(dir[i].at("name").get<std::string>() == refs[i].name);
    CHECK(dir[i].at("shape")[0].get<int64_t>() == refs[i].rows);
    CHECK(dir[i].at("shape")[1].get<int64_t>() == refs[i].cols);
    CHECK(dir[i].at("offset").get<uint64_t>() == expect);
    expect += static_cast<uint64_t>(refs[i].rows) * refs[i].cols * 4;
  }
  // payload is exactly prefix + header + packed fp32 data
  CHECK(bytes.size() == 16 + header_len + expect);
  CHECK(header.at("model_config").at("embed_dim").get<int>() == 16);
}

TEST_CASE("corrupted magic and version are rejected by name") {
  Model model = init_model<float>(micro(), 63);
  TempFile f("magic");
  save_checkpoint(model, f.path.string());
  std::string bytes = slurp(f.path);

  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  spit(f.path, bad);
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path.string()), doctest::Contains("magic"),
                       std::runtime_error);

  bad = bytes;
  bad[4] = 99;  // little-endian version field
  spit(f.path, bad);
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path.string()), doctest::Contains("version 99"),
                       std::runtime_error);
}

TEST_CASE("truncations are diagnosed by region") {
  Model model = init_model<float>(micro(), 64);
  TempFile f("trunc");
  save_checkpoint(model, f.path.string());
  const std::string bytes = slurp(f.path);

  spit(f.path, bytes.substr(0, 2));
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path.string()), doctest::Contains("no magic"),
                       std::runtime_error);

  spit(f.path, bytes.substr(0, 30));  // inside the JSON header
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path.string()), doctest::Contains("inside header"),
                       std::runtime_error);

  spit(f.path, bytes.substr(0, bytes.size() - 10));  // inside the last tensor
  CHECK_THROWS_WITH_AS(load_checkpoint(f.path.string()), doctest::Contains("inside tensor"),
                       std::runtime_error);
}

TEST_CASE("missing paths fail loudly") {
  CHECK_THROWS_WITH_AS(load_checkpoint("/nonexistent/nowhere.rllb"),
                       doctest::Contains("cannot open"), std::runtime_error);
  Model model = init_model<float>(micro(), 65);
  CHECK_THROWS_WITH_AS(save_checkpoint(model, "/nonexistent/nowhere.rllb"),
                       doctest::Contains("cannot open"), std::runtime_error);
}
