#pragma once

// Checkpoint files.
//
//   bytes 0-3   "MWDC"
//   bytes 4-7   format version, u32 little-endian (currently 1)
//   bytes 8-11  header length in bytes, u32 little-endian
//   header      UTF-8 JSON: model config, element type, payload size, and a
//               manifest of {name, shape, offset, bytes} per tensor
//   payload     raw little-endian IEEE-754 blobs in manifest order: model
//               parameters, then Adam first moments ("adam.m.<name>"), then
//               second moments ("adam.v.<name>") when optimizer state is saved

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwdcnn/model.hpp"
#include "mwdcnn/training.hpp"

namespace mwdcnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrc {
  io,
  bad_magic,
  unsupported_version,
  truncated,
  malformed_header,
  manifest_mismatch,
};

std::string to_string(CheckpointErrc code);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}
  CheckpointErrc code() const { return code_; }

 private:
  CheckpointErrc code_;
};

template <typename T>
struct Checkpoint {
  Mwdcnn<T> model;
  std::optional<AdamState<T>> optimizer;
  /// Epoch the checkpoint was written after (0 when unknown).
  std::size_t epoch = 0;
};

template <typename T>
std::vector<std::uint8_t> encode_checkpoint(const Mwdcnn<T>& model, const AdamState<T>* optimizer,
                                            std::size_t epoch = 0);

template <typename T>
Checkpoint<T> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

/// Writes to a sibling temporary file and renames it into place.
template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Mwdcnn<T>& model,
                     const AdamState<T>* optimizer = nullptr, std::size_t epoch = 0);

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// Reads only the header: the stored config (with its precision).
ModelConfig peek_checkpoint_config(const std::filesystem::path& path);

}  // namespace mwdcnn
