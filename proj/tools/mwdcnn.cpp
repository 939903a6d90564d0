// mwdcnn command-line tool: train, denoise, eval, gradcheck, synth.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mwdcnn/checkpoint.hpp"
#include "mwdcnn/config.hpp"
#include "mwdcnn/gradsuite.hpp"
#include "mwdcnn/metrics.hpp"

#ifndef MWDCNN_VERSION
#define MWDCNN_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace mwdcnn;
using json = nlohmann::json;

namespace {

enum Exit { kOk = 0, kConfigError = 1, kDataError = 2, kNumericalError = 3 };

// Input-data failures that are not image decoding errors.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error(tmp.string() + ": write failed");
  }
  fs::rename(tmp, path);
}

struct RunManifest {
  fs::path path;
  json doc;

  RunManifest(fs::path file, const std::string& command, json config, std::uint64_t seed)
      : path(std::move(file)) {
    doc = {{"command", command}, {"version", MWDCNN_VERSION}, {"seed", seed},
           {"config", std::move(config)}, {"started", utc_now()}, {"finished", nullptr},
           {"status", "running"}, {"outputs", json::array()}};
    save();
  }
  void output(const fs::path& p) { doc["outputs"].push_back(p.string()); }
  void finish(const std::string& status) {
    doc["finished"] = utc_now();
    doc["status"] = status;
    save();
  }
  void save() const { write_atomic(path, doc.dump(2) + "\n"); }
};

// Shared run flags, applied on top of --config in a fixed order.
struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma;
  bool blind = false;
  std::optional<std::size_t> epochs, batch, base_channels, max_iterations, channels;
  std::optional<std::string> loss, out, data;
  std::optional<int> precision;
  std::vector<std::string> settings;

  void add_to(CLI::App& app) {
    app.add_option("--config", config, "Run configuration file");
    app.add_option("--seed", seed, "Seed for initialization, sampling and noise");
    app.add_option("--sigma", sigma, "Noise level on the 8-bit scale");
    app.add_flag("--blind", blind, "Train on noise levels drawn from the blind range");
    app.add_option("--epochs", epochs, "Training epochs");
    app.add_option("--batch", batch, "Batch size");
    app.add_option("--base-channels", base_channels, "Feature width");
    app.add_option("--channels", channels, "Image channels (1 or 3)");
    app.add_option("--loss", loss, "mse or charbonnier")->check(CLI::IsMember({"mse", "charbonnier"}));
    app.add_option("--out", out, "Output directory");
    app.add_option("--data", data, "Directory of training images");
    app.add_option("--precision", precision, "32 or 64")->check(CLI::IsMember({32, 64}));
    app.add_option("--max-iterations", max_iterations, "Stop after this many iterations");
    app.add_option("--set", settings, "Extra key=value configuration setting");
  }

  RunConfig resolve() const {
    RunConfig c = config.empty() ? RunConfig{} : load_config(config);
    if (seed) c.set_seed(*seed);
    if (sigma) c.sigma = *sigma;
    if (blind) c.blind = true;
    if (epochs) {
      c.plan.epochs = *epochs;
      // Stretch or cut the schedule so it still covers every epoch.
      auto& stages = c.plan.schedule.stages;
      while (stages.size() > 1 && stages[stages.size() - 2].last_epoch >= *epochs) stages.pop_back();
      stages.back().last_epoch = *epochs;
    }
    if (batch) c.plan.batch_size = *batch;
    if (base_channels) c.model.base_channels = *base_channels;
    if (channels) c.model.in_channels = *channels;
    if (loss) c.plan.loss = parse_loss(*loss);
    if (out) c.out_dir = *out;
    if (data) c.data_dir = *data;
    if (precision) c.model.precision = *precision;
    if (max_iterations) c.plan.max_iterations = *max_iterations;
    for (const auto& s : settings) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
      apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

// Matches the image to the model's channel count.
ImageBuffer for_model(ImageBuffer img, std::size_t channels, const std::string& origin) {
  if (img.channels == channels) return img;
  if (channels == 1) return to_gray(img);
  throw DataError(origin + ": model expects 3 channels but the image is gray");
}

struct NamedImages {
  std::vector<ImageBuffer> images;
  std::vector<std::string> names;
};

NamedImages load_dir(const std::string& dir, std::size_t channels) {
  if (dir.empty()) throw DataError("no data directory given (--data or data_dir)");
  if (!fs::is_directory(dir)) throw DataError(dir + ": not a directory");
  NamedImages out;
  for (const auto& p : list_images(dir)) {
    out.images.push_back(for_model(load_image(p), channels, p.string()));
    out.names.push_back(p.filename().string());
  }
  if (out.images.empty()) throw DataError(dir + ": no PNG/PGM/PPM images found");
  return out;
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * std::ptrdiff_t(n) - 2;
  i %= period;
  if (i < 0) i += period;
  return std::size_t(i < std::ptrdiff_t(n) ? i : period - i);
}

// Reflect-pads bottom and right so both sides are even and at least 8.
std::vector<double> padded_planar(const std::vector<double>& planar, std::size_t w, std::size_t h,
                                  std::size_t c, std::size_t pw, std::size_t ph) {
  std::vector<double> out(c * pw * ph);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ph; ++y)
      for (std::size_t x = 0; x < pw; ++x)
        out[(ch * ph + y) * pw + x] = planar[(ch * h + reflect(std::ptrdiff_t(y), h)) * w +
                                             reflect(std::ptrdiff_t(x), w)];
  return out;
}

std::size_t padded_size(std::size_t n) { return std::max<std::size_t>(8, n + n % 2); }

template <typename T>
std::vector<double> run_model(const Mwdcnn<T>& model, const std::vector<double>& noisy,
                              std::size_t w, std::size_t h, std::size_t c) {
  const std::size_t pw = padded_size(w), ph = padded_size(h);
  const auto padded = padded_planar(noisy, w, h, c, pw, ph);
  const auto out = model.forward(Tensor<T>::from({1, c, ph, pw}, std::vector<T>(padded.begin(), padded.end())));
  std::vector<double> cropped(c * w * h);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        cropped[(ch * h + y) * w + x] = double(out.data()[(ch * ph + y) * pw + x]);
  return cropped;
}

template <typename Fn>
auto with_model(const fs::path& checkpoint, Fn&& fn) {
  if (peek_checkpoint_config(checkpoint).precision == 64) return fn(load_checkpoint<double>(checkpoint).model);
  return fn(load_checkpoint<float>(checkpoint).model);
}

// ---- train

template <typename T>
void train_body(const RunConfig& cfg, const fs::path& out, RunManifest& manifest);

template <typename T>
int train_run(const RunConfig& cfg) {
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "checkpoints");
  RunManifest manifest(out / "manifest.json", "train", to_json(cfg), cfg.seed());
  try {
    train_body<T>(cfg, out, manifest);
  } catch (const NumericalError&) {
    manifest.finish("numerical_error");
    throw;
  } catch (...) {
    manifest.finish("failed");
    throw;
  }
  manifest.finish("ok");
  return kOk;
}

template <typename T>
void train_body(const RunConfig& cfg, const fs::path& out, RunManifest& manifest) {
  const auto data = load_dir(cfg.data_dir, cfg.model.in_channels);
  const auto dataset = PatchDataset::build(data.images, data.names, cfg.patches_per_image,
                                           cfg.patch_size, cfg.noise(), cfg.seed());
  write_atomic(out / "patches.json", dataset.manifest());
  manifest.output(out / "patches.json");
  write_atomic(out / "config.cfg", format_config(cfg));
  manifest.output(out / "config.cfg");

  auto model = Mwdcnn<T>::create(cfg.model);
  std::ofstream log(out / "train_log.csv");
  log << training_log_header();
  manifest.output(out / "train_log.csv");
  std::cout << "training " << model.parameter_count() << " parameters on " << dataset.size()
            << " patches from " << data.images.size() << " images\n";

  TrainHooks<T> hooks;
  hooks.on_iteration = [&](const IterationRecord& r) { log << training_log_row(r) << std::flush; };
  hooks.on_epoch_end = [&](std::size_t epoch, const Mwdcnn<T>& m, const AdamState<T>& opt) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.mwdc", epoch);
    save_checkpoint(out / "checkpoints" / name, m, &opt, epoch);
    save_checkpoint(out / "model.mwdc", m, &opt, epoch);
    manifest.output(out / "checkpoints" / name);
    manifest.save();
    std::cout << "epoch " << epoch << " done, step " << opt.step << "\n";
  };
  const auto result = train(cfg.plan, model, dataset, hooks);
  if (!result.log.empty()) std::cout << "final loss " << result.log.back().loss << "\n";
  manifest.output(out / "model.mwdc");
}

// ---- denoise

struct DenoiseArgs {
  std::string checkpoint, input, output, clean;
  std::optional<double> sigma;
  std::uint64_t seed = 0;
  std::string noisy_out;
};

int denoise_run(const DenoiseArgs& a) {
  const auto config = peek_checkpoint_config(a.checkpoint);
  auto image = for_model(load_image(a.input), config.in_channels, a.input);
  const std::size_t w = image.width, h = image.height, c = image.channels;
  auto planar = to_planar<double>(image);
  if (a.sigma) {
    add_awgn(std::span<double>(planar), *a.sigma, derive_key(a.seed, {0x64656e6fULL}));
    if (!a.noisy_out.empty()) save_image(from_planar<double>(planar, w, h, c), a.noisy_out);
  }

  const auto restored = with_model(a.checkpoint, [&](const auto& model) { return run_model(model, planar, w, h, c); });
  const auto result = from_planar<double>(restored, w, h, c);
  save_image(result, a.output);

  RunManifest manifest(a.output + ".json", "denoise",
                       {{"checkpoint", a.checkpoint}, {"input", a.input}, {"sigma", a.sigma ? json(*a.sigma) : json(nullptr)},
                        {"model", config}},
                       a.seed);
  manifest.output(a.output);
  std::cout << "wrote " << a.output << " (" << w << "x" << h << ")\n";
  if (a.sigma) {
    const auto noisy = from_planar<double>(planar, w, h, c);
    std::printf("noisy_psnr_db %.4f\ndenoised_psnr_db %.4f\n", psnr(noisy, image), psnr(result, image));
  }
  if (!a.clean.empty()) {
    const auto clean = for_model(load_image(a.clean), c, a.clean);
    std::printf("psnr_vs_clean_db %.4f\n", psnr(result, clean));
  }
  manifest.finish("ok");
  return kOk;
}

// ---- eval

struct EvalArgs {
  std::string checkpoint, data, out = "eval";
  std::vector<double> sigmas{15, 25, 50};
  std::uint64_t seed = 0;
};

int eval_run(const EvalArgs& a) {
  const auto config = peek_checkpoint_config(a.checkpoint);
  const auto data = load_dir(a.data, config.in_channels);
  const fs::path out = a.out;
  RunManifest manifest(out / "manifest.json", "eval",
                       {{"checkpoint", a.checkpoint}, {"data", a.data}, {"sigmas", a.sigmas}, {"model", config}},
                       a.seed);
  with_model(a.checkpoint, [&](const auto& model) {
    for (const double sigma : a.sigmas) {
      QualityReport report;
      for (std::size_t i = 0; i < data.images.size(); ++i) {
        const auto& clean = data.images[i];
        auto planar = to_planar<double>(clean);
        add_awgn(std::span<double>(planar), sigma,
                 derive_key(a.seed, {std::uint64_t(std::llround(sigma * 1000)), i}));
        const auto restored = from_planar<double>(
            run_model(model, planar, clean.width, clean.height, clean.channels), clean.width,
            clean.height, clean.channels);
        report.add(data.names[i], psnr(restored, clean), ssim(restored, clean));
      }
      char name[48];
      std::snprintf(name, sizeof name, "eval_sigma%g.csv", sigma);
      write_atomic(out / name, report.csv());
      manifest.output(out / name);
      std::printf("sigma %g: mean PSNR %.4f dB, mean SSIM %.6f over %zu images\n", sigma,
                  report.mean_psnr(), report.mean_ssim(), report.rows.size());
    }
    return 0;
  });
  manifest.finish("ok");
  return kOk;
}

// ---- gradcheck

struct GradArgs {
  GradSuiteOptions options;
  bool fault = false;
};

int gradcheck_run(const GradArgs& a) {
  if (a.fault) inject_fault(Fault::relu_backward);
  const auto cases = run_gradient_suite(a.options);
  inject_fault(Fault::none);
  std::cout << format_suite_report(cases);
  double worst = 0;
  for (const auto& c : cases) worst = std::max(worst, c.report.max_rel_error());
  const bool ok = suite_passed(cases);
  std::printf("%s: %zu cases, max relative error %.3e, tolerance %.1e\n", ok ? "PASS" : "FAIL",
              cases.size(), worst, a.options.tolerance);
  return ok ? kOk : kNumericalError;
}

// ---- synth

struct SynthArgs {
  std::string out = "synthetic";
  std::size_t count = 5, width = 96, height = 96, channels = 1;
  std::uint64_t seed = 0;
  std::string format = "png";
};

int synth_run(const SynthArgs& a) {
  if (a.channels != 1 && a.channels != 3) throw ConfigError("--channels must be 1 or 3");
  if (a.format != "png" && a.format != "pnm") throw ConfigError("--format must be png or pnm");
  const fs::path out = a.out;
  RunManifest manifest(out / "manifest.json", "synth",
                       {{"count", a.count}, {"width", a.width}, {"height", a.height}, {"channels", a.channels}},
                       a.seed);
  for (std::size_t i = 0; i < a.count; ++i) {
    char name[32];
    const char* ext = a.format == "png" ? "png" : (a.channels == 1 ? "pgm" : "ppm");
    std::snprintf(name, sizeof name, "scene_%03zu.%s", i, ext);
    save_image(synthetic_scene(a.width, a.height, a.channels, derive_key(a.seed, {i})), out / name);
    manifest.output(out / name);
  }
  manifest.finish("ok");
  std::cout << "wrote " << a.count << " images to " << a.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-stage wavelet denoising CNN"};
  app.set_version_flag("--version", std::string(MWDCNN_VERSION));
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a denoiser on a directory of images");
  run_flags.add_to(*train_cmd);

  DenoiseArgs dn;
  auto* denoise_cmd = app.add_subcommand("denoise", "Denoise one image with a checkpoint");
  denoise_cmd->add_option("--checkpoint", dn.checkpoint, "Trained model file")->required();
  denoise_cmd->add_option("--input", dn.input, "PNG, PGM or PPM image")->required();
  denoise_cmd->add_option("--output", dn.output, "Where to write the denoised image")->required();
  denoise_cmd->add_option("--clean", dn.clean, "Clean reference for PSNR");
  denoise_cmd->add_option("--sigma", dn.sigma, "Add noise of this level to the input first");
  denoise_cmd->add_option("--seed", dn.seed, "Seed for --sigma noise");
  denoise_cmd->add_option("--noisy-out", dn.noisy_out, "Where to save the synthesized noisy image");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Per-sigma PSNR/SSIM over a directory");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Trained model file")->required();
  eval_cmd->add_option("--data", ev.data, "Directory of clean images")->required();
  eval_cmd->add_option("--sigmas", ev.sigmas, "Comma-separated noise levels")->delimiter(',');
  eval_cmd->add_option("--seed", ev.seed, "Seed for the synthetic noise");
  eval_cmd->add_option("--out", ev.out, "Output directory for the CSV reports");

  GradArgs gr;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every layer");
  grad_cmd->add_option("--base-channels", gr.options.base_channels, "Feature width of the blocks and model");
  grad_cmd->add_option("--size", gr.options.image_size, "Side of the full-model input");
  grad_cmd->add_option("--seed", gr.options.seed, "Seed for inputs and sampled entries");
  grad_cmd->add_option("--max-entries", gr.options.max_entries_per_tensor,
                       "Entries per tensor in primitive and block cases, 0 for all");
  grad_cmd->add_option("--model-entries", gr.options.model_entries_per_tensor,
                       "Entries per tensor of the full model, 0 for all");
  grad_cmd->add_option("--step", gr.options.step, "Initial finite-difference step");
  grad_cmd->add_option("--richardson", gr.options.richardson, "Extrapolate from steps h and h/2");
  grad_cmd->add_option("--tolerance", gr.options.tolerance, "Largest accepted relative error");
  grad_cmd->add_flag("--inject-fault", gr.fault)->group("");

  SynthArgs sy;
  auto* synth_cmd = app.add_subcommand("synth", "Write procedural test images");
  synth_cmd->add_option("--out", sy.out, "Output directory");
  synth_cmd->add_option("--count", sy.count, "Number of images");
  synth_cmd->add_option("--width", sy.width);
  synth_cmd->add_option("--height", sy.height);
  synth_cmd->add_option("--channels", sy.channels, "1 or 3");
  synth_cmd->add_option("--seed", sy.seed);
  synth_cmd->add_option("--format", sy.format, "png or pnm");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train_cmd) {
      const auto cfg = run_flags.resolve();
      return cfg.model.precision == 64 ? train_run<double>(cfg) : train_run<float>(cfg);
    }
    if (*denoise_cmd) return denoise_run(dn);
    if (*eval_cmd) return eval_run(ev);
    if (*grad_cmd) return gradcheck_run(gr);
    if (*synth_cmd) return synth_run(sy);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error (" << to_string(e.code()) << "): " << e.what() << "\n";
    return kConfigError;
  } catch (const ImageError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumericalError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
  return kOk;
}
