#include "mwdcnn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "mwdcnn/config.hpp"

namespace mwdcnn {
namespace {

constexpr char kMagic[4] = {'M', 'W', 'D', 'C'};
constexpr std::size_t kPreamble = 12;

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 4 ? "float32" : "float64";
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
         (std::uint32_t(p[3]) << 24);
}

template <typename T>
void put_values(std::vector<std::uint8_t>& out, std::span<const T> values) {
  for (const T v : values) {
    const auto bits = std::bit_cast<Bits<T>>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

template <typename T>
void get_values(const std::uint8_t* p, std::span<T> out) {
  for (auto& v : out) {
    Bits<T> bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= Bits<T>(p[i]) << (8 * i);
    v = std::bit_cast<T>(bits);
    p += sizeof(T);
  }
}

struct Blob {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t bytes = 0;
};

struct Parsed {
  nlohmann::json header;
  std::vector<Blob> blobs;
  const std::uint8_t* payload = nullptr;
};

[[noreturn]] void fail(CheckpointErrc code, const std::string& message) {
  throw CheckpointError(code, "checkpoint: " + message);
}

nlohmann::json parse_header(const std::vector<std::uint8_t>& bytes, std::size_t& payload_start) {
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(CheckpointErrc::bad_magic, "not a checkpoint file (magic bytes differ from MWDC)");
  }
  if (bytes.size() < kPreamble) fail(CheckpointErrc::truncated, "file ends inside the preamble");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion) {
    fail(CheckpointErrc::unsupported_version,
         "format version " + std::to_string(version) + " is not supported (expected " +
             std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t header_len = get_u32(bytes.data() + 8);
  if (bytes.size() - kPreamble < header_len) fail(CheckpointErrc::truncated, "file ends inside the header");
  payload_start = kPreamble + header_len;
  try {
    return nlohmann::json::parse(bytes.begin() + kPreamble, bytes.begin() + std::ptrdiff_t(payload_start));
  } catch (const nlohmann::json::exception& e) {
    fail(CheckpointErrc::malformed_header, std::string("header is not valid JSON: ") + e.what());
  }
}

Parsed parse(const std::vector<std::uint8_t>& bytes) {
  Parsed out;
  std::size_t payload_start = 0;
  out.header = parse_header(bytes, payload_start);
  std::size_t payload_bytes = 0;
  try {
    payload_bytes = out.header.at("payload_bytes").get<std::size_t>();
    for (const auto& t : out.header.at("tensors")) {
      out.blobs.push_back({t.at("name").get<std::string>(), t.at("shape").get<Shape>(),
                           t.at("offset").get<std::size_t>(), t.at("bytes").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(CheckpointErrc::malformed_header, std::string("header field missing or mistyped: ") + e.what());
  }
  const std::size_t available = bytes.size() - payload_start;
  if (available < payload_bytes) {
    fail(CheckpointErrc::truncated, "payload has " + std::to_string(available) + " of " +
                                        std::to_string(payload_bytes) + " bytes");
  }
  if (available > payload_bytes) {
    fail(CheckpointErrc::manifest_mismatch, std::to_string(available - payload_bytes) +
                                                " trailing bytes after the declared payload");
  }
  // Offsets must tile the payload exactly.
  std::vector<const Blob*> order;
  for (const auto& b : out.blobs) order.push_back(&b);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->offset < b->offset; });
  std::size_t cursor = 0;
  for (const Blob* b : order) {
    if (b->offset != cursor) {
      fail(CheckpointErrc::manifest_mismatch, "tensor '" + b->name + "' does not start where the previous one ends");
    }
    cursor += b->bytes;
  }
  if (cursor != payload_bytes) {
    fail(CheckpointErrc::manifest_mismatch, "manifest does not cover the payload exactly");
  }
  out.payload = bytes.data() + payload_start;
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(CheckpointErrc::io, path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(CheckpointErrc::io, path.string() + ": read failed");
  return bytes;
}

}  // namespace

std::string to_string(CheckpointErrc code) {
  switch (code) {
    case CheckpointErrc::io: return "io";
    case CheckpointErrc::bad_magic: return "bad_magic";
    case CheckpointErrc::unsupported_version: return "unsupported_version";
    case CheckpointErrc::truncated: return "truncated";
    case CheckpointErrc::malformed_header: return "malformed_header";
    case CheckpointErrc::manifest_mismatch: return "manifest_mismatch";
  }
  return "unknown";
}

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Mwdcnn<T>& model, const AdamState<T>* optimizer,
                                            std::size_t epoch) {
  const auto params = model.parameters();
  std::vector<std::uint8_t> payload;
  auto manifest = nlohmann::json::array();
  auto add = [&](const std::string& name, const Shape& shape, std::span<const T> values) {
    manifest.push_back({{"name", name}, {"shape", shape}, {"offset", payload.size()},
                        {"bytes", values.size() * sizeof(T)}});
    put_values(payload, values);
  };
  for (const auto& [name, p] : params) add(name, p.shape(), p.data());
  nlohmann::json adam = nullptr;
  if (optimizer) {
    if (optimizer->m.size() != params.size() || optimizer->v.size() != params.size()) {
      throw std::invalid_argument("encode_checkpoint: optimizer state does not match the model");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      add("adam.m." + params[i].first, params[i].second.shape(), optimizer->m[i]);
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      add("adam.v." + params[i].first, params[i].second.shape(), optimizer->v[i]);
    }
    adam = {{"step", optimizer->step},
            {"beta1", double(optimizer->beta1)},
            {"beta2", double(optimizer->beta2)},
            {"eps", double(optimizer->eps)}};
  }
  const nlohmann::json header = {
      {"format", "mwdcnn-checkpoint"},
      {"dtype", dtype_name<T>()},
      {"config", model.config()},
      {"epoch", epoch},
      {"optimizer", adam},
      {"payload_bytes", payload.size()},
      {"tensors", manifest},
  };
  const std::string text = header.dump(1);
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

template <typename T>
Checkpoint<T> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  const Parsed parsed = parse(bytes);
  ModelConfig config;
  std::string dtype;
  std::size_t epoch = 0;
  try {
    config = parsed.header.at("config").get<ModelConfig>();
    dtype = parsed.header.at("dtype").get<std::string>();
    epoch = parsed.header.value("epoch", std::size_t(0));
  } catch (const nlohmann::json::exception& e) {
    fail(CheckpointErrc::malformed_header, std::string("bad config block: ") + e.what());
  }
  if (dtype != dtype_name<T>()) {
    fail(CheckpointErrc::manifest_mismatch,
         "stored element type " + dtype + " differs from requested " + dtype_name<T>());
  }
  Checkpoint<T> out{[&] {
    try {
      return Mwdcnn<T>::create(config);
    } catch (const std::invalid_argument& e) {
      fail(CheckpointErrc::malformed_header, std::string("stored config is invalid: ") + e.what());
    }
  }(), std::nullopt, epoch};

  std::map<std::string, const Blob*> by_name;
  for (const auto& b : parsed.blobs) {
    if (!by_name.emplace(b.name, &b).second) {
      fail(CheckpointErrc::manifest_mismatch, "tensor '" + b.name + "' listed twice");
    }
  }
  std::size_t used = 0;
  auto restore = [&](const std::string& name, const Shape& shape, std::span<T> dest) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) fail(CheckpointErrc::manifest_mismatch, "tensor '" + name + "' is missing");
    const Blob& b = *it->second;
    if (b.shape != shape || b.bytes != dest.size() * sizeof(T)) {
      fail(CheckpointErrc::manifest_mismatch, "tensor '" + name + "' has shape " +
                                                  shape_string(b.shape) + ", model expects " +
                                                  shape_string(shape));
    }
    get_values(parsed.payload + b.offset, dest);
    ++used;
  };

  const auto params = out.model.parameters();
  for (auto [name, p] : params) restore(name, p.shape(), p.mutable_data());

  const auto& adam = parsed.header.contains("optimizer") ? parsed.header["optimizer"] : nlohmann::json();
  if (!adam.is_null()) {
    AdamState<T> state = AdamState<T>::for_parameters(params);
    try {
      state.step = adam.at("step").get<std::uint64_t>();
      state.beta1 = static_cast<T>(adam.at("beta1").get<double>());
      state.beta2 = static_cast<T>(adam.at("beta2").get<double>());
      state.eps = static_cast<T>(adam.at("eps").get<double>());
    } catch (const nlohmann::json::exception& e) {
      fail(CheckpointErrc::malformed_header, std::string("bad optimizer block: ") + e.what());
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      restore("adam.m." + params[i].first, params[i].second.shape(), state.m[i]);
      restore("adam.v." + params[i].first, params[i].second.shape(), state.v[i]);
    }
    out.optimizer = std::move(state);
  }
  if (used != parsed.blobs.size()) {
    fail(CheckpointErrc::manifest_mismatch,
         std::to_string(parsed.blobs.size() - used) + " stored tensors do not belong to the model");
  }
  return out;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Mwdcnn<T>& model,
                     const AdamState<T>* optimizer, std::size_t epoch) {
  const auto bytes = encode_checkpoint(model, optimizer, epoch);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(CheckpointErrc::io, tmp.string() + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) fail(CheckpointErrc::io, tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(CheckpointErrc::io, path.string() + ": " + ec.message());
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint<T>(read_file(path));
}

ModelConfig peek_checkpoint_config(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::size_t payload_start = 0;
  const auto header = parse_header(bytes, payload_start);
  try {
    return header.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    fail(CheckpointErrc::malformed_header, std::string("bad config block: ") + e.what());
  }
}

#define MWDCNN_INSTANTIATE_CHECKPOINT(T)                                                          \
  template std::vector<std::uint8_t> encode_checkpoint(const Mwdcnn<T>&, const AdamState<T>*,     \
                                                       std::size_t);                              \
  template Checkpoint<T> decode_checkpoint<T>(const std::vector<std::uint8_t>&);                  \
  template void save_checkpoint(const std::filesystem::path&, const Mwdcnn<T>&,                   \
                                const AdamState<T>*, std::size_t);                                \
  template Checkpoint<T> load_checkpoint<T>(const std::filesystem::path&);

MWDCNN_INSTANTIATE_CHECKPOINT(float)
MWDCNN_INSTANTIATE_CHECKPOINT(double)

#undef MWDCNN_INSTANTIATE_CHECKPOINT

}  // namespace mwdcnn
