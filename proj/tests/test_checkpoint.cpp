#include <algorithm>
#include <cstring>
#include <filesystem>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"
#include "mwdcnn/checkpoint.hpp"
#include "support.hpp"

using namespace mwdcnn;

namespace {

ModelConfig toy(std::uint64_t seed = 3) {
  ModelConfig c;
  c.in_channels = 3;
  c.base_channels = 4;
  c.seed = seed;
  c.temperature = 0.7;
  return c;
}

CheckpointErrc error_of(const std::vector<std::uint8_t>& bytes) {
  try {
    decode_checkpoint<float>(bytes);
  } catch (const CheckpointError& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return CheckpointErrc::io;
}

std::uint32_t header_length(const std::vector<std::uint8_t>& bytes) {
  return std::uint32_t(bytes[8]) | (std::uint32_t(bytes[9]) << 8) | (std::uint32_t(bytes[10]) << 16) |
         (std::uint32_t(bytes[11]) << 24);
}

nlohmann::json header_of(const std::vector<std::uint8_t>& bytes) {
  return nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_length(bytes));
}

std::vector<std::uint8_t> with_header(const std::vector<std::uint8_t>& bytes, const nlohmann::json& header) {
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 4; ++i) out.push_back(std::uint8_t(text.size() >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), bytes.begin() + 12 + header_length(bytes), bytes.end());
  return out;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / ("mwdcnn_ckpt_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("round trip reproduces parameters, optimizer state and outputs bit for bit") {
  auto model = Mwdcnn<float>::create(toy());
  auto state = AdamState<float>::for_parameters(model.parameters());
  for (std::size_t i = 0; i < state.m.size(); ++i) {
    state.m[i] = testing::random_values<float>(state.m[i].size(), i);
    state.v[i] = testing::random_values<float>(state.v[i].size(), i + 100, 0.0, 1.0);
  }
  state.step = 17;
  TempDir dir;
  const auto path = dir.path / "model.mwdc";
  save_checkpoint(path, model, &state, 4);
  CHECK_FALSE(std::filesystem::exists(dir.path / "model.mwdc.tmp"));

  const auto loaded = load_checkpoint<float>(path);
  CHECK(loaded.model.config() == model.config());
  CHECK(loaded.epoch == 4);
  const auto a = model.parameters(), b = loaded.model.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(std::memcmp(a[i].second.data().data(), b[i].second.data().data(), a[i].second.numel() * sizeof(float)) == 0);
  }
  REQUIRE(loaded.optimizer.has_value());
  CHECK(loaded.optimizer->step == 17);
  CHECK(loaded.optimizer->m == state.m);
  CHECK(loaded.optimizer->v == state.v);
  CHECK(loaded.optimizer->beta1 == state.beta1);

  const auto probe = testing::random_tensor<float>({2, 3, 16, 16}, 9, false, 0.0, 1.0);
  CHECK(std::ranges::equal(model.forward(probe).data(), loaded.model.forward(probe).data()));
  CHECK(peek_checkpoint_config(path) == model.config());
}

TEST_CASE("double precision checkpoints without optimizer state") {
  auto model = Mwdcnn<double>::create(toy(8));
  const auto bytes = encode_checkpoint<double>(model, nullptr);
  const auto loaded = decode_checkpoint<double>(bytes);
  CHECK_FALSE(loaded.optimizer.has_value());
  CHECK(loaded.model.config().precision == 64);
  const auto probe = testing::random_tensor<double>({1, 3, 8, 8}, 10);
  CHECK(std::ranges::equal(model.forward(probe).data(), loaded.model.forward(probe).data()));
  CHECK_THROWS_AS(decode_checkpoint<float>(bytes), CheckpointError);
}

TEST_CASE("manifest offsets tile the payload exactly") {
  const auto model = Mwdcnn<float>::create(toy());
  const auto state = AdamState<float>::for_parameters(model.parameters());
  const auto bytes = encode_checkpoint<float>(model, &state);
  const auto header = header_of(bytes);
  std::size_t cursor = 0;
  for (const auto& t : header["tensors"]) {
    CHECK(t["offset"].get<std::size_t>() == cursor);
    cursor += t["bytes"].get<std::size_t>();
  }
  CHECK(cursor == header["payload_bytes"].get<std::size_t>());
  CHECK(bytes.size() == 12 + header_length(bytes) + cursor);
  CHECK(header["tensors"].size() == 3 * model.parameters().size());
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "MWDC");
  CHECK(bytes[4] == 1);
}

TEST_CASE("corrupted files yield distinct errors") {
  const auto model = Mwdcnn<float>::create(toy());
  const auto good = encode_checkpoint<float>(model, nullptr);

  auto magic = good;
  std::memcpy(magic.data(), "XXXX", 4);
  CHECK(error_of(magic) == CheckpointErrc::bad_magic);

  auto truncated = good;
  truncated.pop_back();
  CHECK(error_of(truncated) == CheckpointErrc::truncated);
  CHECK(error_of({good.begin(), good.begin() + 10}) == CheckpointErrc::truncated);
  CHECK(error_of({good.begin(), good.begin() + 40}) == CheckpointErrc::truncated);

  auto version = good;
  version[4] = 2;
  CHECK(error_of(version) == CheckpointErrc::unsupported_version);

  auto garbage = good;
  garbage[12] = '!';
  CHECK(error_of(garbage) == CheckpointErrc::malformed_header);

  auto header = header_of(good);
  header["tensors"][0]["shape"] = {4, 3, 5, 4};
  CHECK(error_of(with_header(good, header)) == CheckpointErrc::manifest_mismatch);

  header = header_of(good);
  header["tensors"][1]["offset"] = header["tensors"][1]["offset"].get<std::size_t>() + 4;
  CHECK(error_of(with_header(good, header)) == CheckpointErrc::manifest_mismatch);

  header = header_of(good);
  header["tensors"][0]["name"] = "dcb.conv_in.kernel";
  CHECK(error_of(with_header(good, header)) == CheckpointErrc::manifest_mismatch);

  header = header_of(good);
  header["config"]["base_channels"] = 8;
  CHECK(error_of(with_header(good, header)) == CheckpointErrc::manifest_mismatch);

  header = header_of(good);
  header.erase("tensors");
  CHECK(error_of(with_header(good, header)) == CheckpointErrc::malformed_header);

  auto extra = good;
  extra.push_back(0);
  CHECK(error_of(extra) == CheckpointErrc::manifest_mismatch);
}

TEST_CASE("missing files report an io error") {
  try {
    load_checkpoint<float>("/nonexistent/dir/model.mwdc");
    FAIL("expected an exception");
  } catch (const CheckpointError& e) {
    CHECK(e.code() == CheckpointErrc::io);
    CHECK(std::string(e.what()).find("/nonexistent/dir/model.mwdc") != std::string::npos);
  }
  CHECK(to_string(CheckpointErrc::bad_magic) == "bad_magic");
}
