#include "mwdcnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace mwdcnn {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::logic_error&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::string real_text(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"in_channels", [](RunConfig& c, auto& k, auto& v) { c.model.in_channels = parse_unsigned(k, v); }},
      {"base_channels", [](RunConfig& c, auto& k, auto& v) { c.model.base_channels = parse_unsigned(k, v); }},
      {"kernel_size", [](RunConfig& c, auto& k, auto& v) { c.model.kernel_size = parse_unsigned(k, v); }},
      {"dyn_kernels", [](RunConfig& c, auto& k, auto& v) { c.model.dyn_kernels = parse_unsigned(k, v); }},
      {"fe_growth", [](RunConfig& c, auto& k, auto& v) { c.model.fe_growth = parse_unsigned(k, v); }},
      {"precision", [](RunConfig& c, auto& k, auto& v) { c.model.precision = int(parse_unsigned(k, v)); }},
      {"temperature", [](RunConfig& c, auto& k, auto& v) { c.model.temperature = parse_real(k, v); }},
      {"additive_fusion", [](RunConfig& c, auto& k, auto& v) { c.model.additive_fusion = parse_bool(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.set_seed(parse_unsigned(k, v)); }},
      {"batch_size", [](RunConfig& c, auto& k, auto& v) { c.plan.batch_size = parse_unsigned(k, v); }},
      {"epochs", [](RunConfig& c, auto& k, auto& v) { c.plan.epochs = parse_unsigned(k, v); }},
      {"max_iterations", [](RunConfig& c, auto& k, auto& v) { c.plan.max_iterations = parse_unsigned(k, v); }},
      {"lr_schedule",
       [](RunConfig& c, auto& k, auto& v) {
         try {
           c.plan.schedule = LrSchedule::parse(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"loss",
       [](RunConfig& c, auto& k, auto& v) {
         try {
           c.plan.loss = parse_loss(v);
         } catch (const std::invalid_argument& e) {
           throw ConfigError(k + ": " + e.what());
         }
       }},
      {"charbonnier_eps", [](RunConfig& c, auto& k, auto& v) { c.plan.charbonnier_eps = parse_real(k, v); }},
      {"per_pixel_loss", [](RunConfig& c, auto& k, auto& v) { c.plan.per_pixel_loss = parse_bool(k, v); }},
      {"resample_noise", [](RunConfig& c, auto& k, auto& v) { c.plan.resample_noise = parse_bool(k, v); }},
      {"data_dir", [](RunConfig& c, auto&, auto& v) { c.data_dir = v; }},
      {"out_dir", [](RunConfig& c, auto&, auto& v) { c.out_dir = v; }},
      {"sigma", [](RunConfig& c, auto& k, auto& v) { c.sigma = parse_real(k, v); }},
      {"blind", [](RunConfig& c, auto& k, auto& v) { c.blind = parse_bool(k, v); }},
      {"blind_min", [](RunConfig& c, auto& k, auto& v) { c.blind_min = parse_real(k, v); }},
      {"blind_max", [](RunConfig& c, auto& k, auto& v) { c.blind_max = parse_real(k, v); }},
      {"patches_per_image", [](RunConfig& c, auto& k, auto& v) { c.patches_per_image = parse_unsigned(k, v); }},
      {"patch_size", [](RunConfig& c, auto& k, auto& v) { c.patch_size = parse_unsigned(k, v); }},
  };
  return table;
}

}  // namespace

void RunConfig::set_seed(std::uint64_t seed) {
  model.seed = seed;
  plan.seed = seed;
}

NoiseRecipe RunConfig::noise() const {
  return blind ? NoiseRecipe::blind(blind_min, blind_max) : NoiseRecipe::fixed_sigma(sigma);
}

void RunConfig::validate() const {
  try {
    model.validate();
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (model.seed != plan.seed) throw ConfigError("model and training seeds differ");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be non-negative");
  if (!(blind_min >= 0.0) || !(blind_max >= blind_min)) {
    throw ConfigError("blind range must satisfy 0 <= blind_min <= blind_max");
  }
  if (patch_size < 8 || patch_size % 2 != 0) {
    throw ConfigError("patch_size must be even and at least 8");
  }
  if (patches_per_image == 0) throw ConfigError("patches_per_image must be positive");
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw ConfigError("unknown setting '" + key + "'");
  it->second(config, key, value);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    try {
      apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open config file");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path.string());
}

std::string format_config(const RunConfig& c) {
  std::ostringstream out;
  out << "# model\n"
      << "in_channels = " << c.model.in_channels << '\n'
      << "base_channels = " << c.model.base_channels << '\n'
      << "kernel_size = " << c.model.kernel_size << '\n'
      << "dyn_kernels = " << c.model.dyn_kernels << '\n'
      << "fe_growth = " << c.model.fe_growth << '\n'
      << "precision = " << c.model.precision << '\n'
      << "temperature = " << real_text(c.model.temperature) << '\n'
      << "additive_fusion = " << (c.model.additive_fusion ? "true" : "false") << '\n'
      << "seed = " << c.plan.seed << '\n'
      << "\n# training\n"
      << "batch_size = " << c.plan.batch_size << '\n'
      << "epochs = " << c.plan.epochs << '\n'
      << "max_iterations = " << c.plan.max_iterations << '\n'
      << "lr_schedule = " << c.plan.schedule.to_string() << '\n'
      << "loss = " << to_string(c.plan.loss) << '\n'
      << "charbonnier_eps = " << real_text(c.plan.charbonnier_eps) << '\n'
      << "per_pixel_loss = " << (c.plan.per_pixel_loss ? "true" : "false") << '\n'
      << "resample_noise = " << (c.plan.resample_noise ? "true" : "false") << '\n'
      << "\n# data\n"
      << "data_dir = " << c.data_dir << '\n'
      << "out_dir = " << c.out_dir << '\n'
      << "sigma = " << real_text(c.sigma) << '\n'
      << "blind = " << (c.blind ? "true" : "false") << '\n'
      << "blind_min = " << real_text(c.blind_min) << '\n'
      << "blind_max = " << real_text(c.blind_max) << '\n'
      << "patches_per_image = " << c.patches_per_image << '\n'
      << "patch_size = " << c.patch_size << '\n';
  return out.str();
}

void to_json(nlohmann::json& out, const ModelConfig& c) {
  out = {
      {"in_channels", c.in_channels},   {"base_channels", c.base_channels},
      {"kernel_size", c.kernel_size},   {"dyn_kernels", c.dyn_kernels},
      {"fe_growth", c.fe_growth},       {"precision", c.precision},
      {"seed", c.seed},                 {"temperature", c.temperature},
      {"additive_fusion", c.additive_fusion},
  };
}

void from_json(const nlohmann::json& in, ModelConfig& c) {
  in.at("in_channels").get_to(c.in_channels);
  in.at("base_channels").get_to(c.base_channels);
  in.at("kernel_size").get_to(c.kernel_size);
  in.at("dyn_kernels").get_to(c.dyn_kernels);
  in.at("fe_growth").get_to(c.fe_growth);
  in.at("precision").get_to(c.precision);
  in.at("seed").get_to(c.seed);
  in.at("temperature").get_to(c.temperature);
  in.at("additive_fusion").get_to(c.additive_fusion);
}

nlohmann::json to_json(const RunConfig& c) {
  return {
      {"model", c.model},
      {"train",
       {{"batch_size", c.plan.batch_size},
        {"epochs", c.plan.epochs},
        {"max_iterations", c.plan.max_iterations},
        {"lr_schedule", c.plan.schedule.to_string()},
        {"loss", to_string(c.plan.loss)},
        {"charbonnier_eps", c.plan.charbonnier_eps},
        {"per_pixel_loss", c.plan.per_pixel_loss},
        {"resample_noise", c.plan.resample_noise},
        {"seed", c.plan.seed}}},
      {"data",
       {{"data_dir", c.data_dir},
        {"sigma", c.sigma},
        {"blind", c.blind},
        {"blind_range", {c.blind_min, c.blind_max}},
        {"patches_per_image", c.patches_per_image},
        {"patch_size", c.patch_size}}},
      {"out_dir", c.out_dir},
      {"config_text", format_config(c)},
  };
}

}  // namespace mwdcnn
