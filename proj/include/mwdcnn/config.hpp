#pragma once

// Run configuration: a plain `key = value` text file ('#' starts a comment)
// covering the model, the training plan and the data recipe. Command-line
// flags are applied on top through the same setters.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "mwdcnn/data.hpp"
#include "mwdcnn/model.hpp"
#include "mwdcnn/training.hpp"

namespace mwdcnn {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  ModelConfig model;
  TrainPlan plan;
  std::string data_dir;
  std::string out_dir = "runs/default";
  double sigma = 25.0;
  bool blind = false;
  double blind_min = 0.0;
  double blind_max = 55.0;
  std::size_t patches_per_image = 512;
  std::size_t patch_size = 48;

  /// The seed shared by model initialization, patch sampling and training.
  std::uint64_t seed() const { return plan.seed; }
  void set_seed(std::uint64_t seed);

  NoiseRecipe noise() const;
  /// Throws ConfigError naming the first invalid field.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

RunConfig parse_config(const std::string& text, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Text form accepted by parse_config; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& config);

void to_json(nlohmann::json& out, const ModelConfig& config);
void from_json(const nlohmann::json& in, ModelConfig& config);
nlohmann::json to_json(const RunConfig& config);

}  // namespace mwdcnn
