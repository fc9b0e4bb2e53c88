#include "audiotex/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "audiotex/image.hpp"

namespace audiotex::cli {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Flag names given on the command line, without leading dashes.
std::set<std::string> flags_present(const std::vector<std::string>& args) {
  std::set<std::string> keys;
  for (const std::string& a : args) {
    if (a.rfind("--", 0) != 0 || a.size() == 2) continue;
    keys.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos
                                                              : a.find('=') - 2));
  }
  return keys;
}

}  // namespace

std::multimap<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::multimap<std::string, std::string> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    if (key.empty()) throw UsageError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    entries.emplace(key, trim(line.substr(eq + 1)));
  }
  return entries;
}

CliConfig parse_args(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return parse_args(args);
}

CliConfig parse_args(const std::vector<std::string>& cmdline) {
  // --config is resolved first so its entries can be merged underneath.
  std::optional<std::filesystem::path> config_path;
  for (std::size_t i = 0; i < cmdline.size(); ++i) {
    const std::string& a = cmdline[i];
    if (a == "--config") {
      if (i + 1 >= cmdline.size()) throw UsageError("--config needs a path");
      config_path = cmdline[i + 1];
    } else if (a.rfind("--config=", 0) == 0) {
      config_path = a.substr(9);
    }
  }
  std::vector<std::string> args;
  if (config_path) {
    const auto given = flags_present(cmdline);
    for (const auto& [key, value] : read_config_file(*config_path)) {
      if (key == "config") throw UsageError("config files cannot include other config files");
      if (given.count(key)) continue;
      args.push_back("--" + key + "=" + value);
    }
  }
  args.insert(args.end(), cmdline.begin(), cmdline.end());

  CliConfig cfg;
  CLI::App app{"Audio texture synthesis and style transfer with random-weight CNN statistics",
               "audiotex"};
  std::string content, weights, config, orientation = "freq1d", scaling = "stft",
                                        init = "noise", optimizer = "lbfgs",
                                        style_layers = "relu1,relu2", content_layers = "relu3";
  std::vector<std::string> styles;
  std::string out_dir = cfg.output_dir.string();
  std::size_t out_frames = 0;

  app.add_option("--content", content, "Content reference WAV");
  app.add_option("--style", styles, "Style reference WAV (repeat for multi-texture)");
  app.add_option("--alpha", cfg.weights.alpha, "Content weight")->capture_default_str();
  app.add_option("--beta", cfg.weights.beta, "Style weight")->capture_default_str();
  app.add_option("--gamma", cfg.weights.gamma, "Range penalty weight")->capture_default_str();
  app.add_option("--style-layers", style_layers, "Style layers")->capture_default_str();
  app.add_option("--content-layers", content_layers, "Content layers")->capture_default_str();
  app.add_option("--orientation", orientation, "freq1d | time1d | 2d")->capture_default_str();
  app.add_option("--kernel-width", cfg.kernel_width, "Convolution kernel width (odd)")
      ->capture_default_str();
  app.add_option("--channels", cfg.channels,
                 "Channels per stack (default 4096 for 1D, 512/1024/2048 for 2D)");
  app.add_option("--scaling", scaling, "stft | cqt")->capture_default_str();
  app.add_option("--cqt-fmin", cfg.cqt.f_min, "Lowest constant-Q bin, Hz")->capture_default_str();
  app.add_option("--cqt-bins-per-octave", cfg.cqt.bins_per_octave, "Constant-Q resolution")
      ->capture_default_str();
  app.add_option("--init", init, "noise | content")->capture_default_str();
  auto* frames_opt = app.add_option("--out-frames", out_frames, "Output width in STFT frames");
  app.add_option("--iters", cfg.opt.iterations, "Optimizer outer iterations")->capture_default_str();
  app.add_option("--optimizer", optimizer, "lbfgs | adam")->capture_default_str();
  app.add_option("--lbfgs-history", cfg.opt.lbfgs_history)->capture_default_str();
  app.add_option("--lbfgs-step", cfg.opt.lbfgs_step)->capture_default_str();
  app.add_option("--lbfgs-inner", cfg.opt.lbfgs_inner)->capture_default_str();
  app.add_option("--adam-lr", cfg.opt.adam_lr)->capture_default_str();
  app.add_option("--log-every", cfg.opt.log_every, "Trace interval")->capture_default_str();
  app.add_option("--window", cfg.stft.window_len, "STFT window length")->capture_default_str();
  app.add_option("--hop", cfg.stft.hop, "STFT hop")->capture_default_str();
  app.add_option("--gl-iters", cfg.griffin_lim_iters, "Griffin-Lim iterations")
      ->capture_default_str();
  app.add_option("--gl-momentum", cfg.griffin_lim_momentum,
                 "Griffin-Lim momentum, 0 for the plain iteration")
      ->capture_default_str();
  app.add_option("--seed", cfg.seed, "Random seed")->capture_default_str();
  app.add_option("--weights", weights, "Network weight file (replaces random weights)");
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();
  app.add_option("--png", cfg.png_export, "Write spectrogram PNGs")->capture_default_str();
  app.add_option("--trace", cfg.trace_export, "Write trace.csv")->capture_default_str();
  app.add_option("--config", config, "key=value file; command-line flags take precedence");

  std::vector<const char*> argv{"audiotex"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    throw HelpRequested(app.help());
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  try {
    cfg.orientation = parse_orientation(orientation);
    cfg.scaling = parse_scaling(scaling);
    cfg.init = parse_init_mode(init);
    cfg.opt.method = parse_opt_method(optimizer);
    cfg.layers.style = parse_layer_set(style_layers);
    cfg.layers.content = parse_layer_set(content_layers);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (!content.empty()) cfg.content_path = content;
  for (const auto& s : styles) cfg.style_paths.emplace_back(s);
  if (!weights.empty()) cfg.weights_path = weights;
  cfg.output_dir = out_dir;
  if (frames_opt->count() > 0) cfg.out_frames = out_frames;

  if (cfg.style_paths.empty()) throw UsageError("--style is required");
  if (cfg.weights.alpha > 0.0 && !cfg.content_path)
    throw UsageError("--alpha > 0 requires --content");
  if (cfg.init == InitMode::content_clone && !cfg.content_path)
    throw UsageError("--init content requires --content");
  try {
    validate(cfg.weights);
    validate(cfg.opt);
    validate(cfg.stft);
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  if (cfg.kernel_width % 2 == 0) throw UsageError("--kernel-width must be odd");
  if (cfg.griffin_lim_iters < 1) throw UsageError("--gl-iters must be >= 1");
  if (!(cfg.griffin_lim_momentum >= 0.0 && cfg.griffin_lim_momentum < 1.0))
    throw UsageError("--gl-momentum must be in [0, 1)");
  return cfg;
}

SynthJob make_job(const CliConfig& cfg) {
  SynthJob job;
  if (cfg.content_path) job.content = load_wav(*cfg.content_path);
  for (const auto& p : cfg.style_paths) job.styles.push_back(load_wav(p));
  job.weights = cfg.weights;
  job.layers = cfg.layers;
  job.orientation = cfg.orientation;
  job.kernel_width = cfg.kernel_width;
  job.channels = cfg.channels;
  job.scaling = cfg.scaling;
  job.cqt = cfg.cqt;
  job.init = cfg.init;
  job.out_frames = cfg.out_frames;
  job.seed = cfg.seed;
  job.opt = cfg.opt;
  job.stft = cfg.stft;
  job.griffin_lim_iters = cfg.griffin_lim_iters;
  job.griffin_lim_momentum = cfg.griffin_lim_momentum;
  if (cfg.weights_path)
    job.network = std::make_shared<const Network>(load_weights(*cfg.weights_path));
  return job;
}

std::string config_text(const CliConfig& cfg) {
  std::ostringstream out;
  if (cfg.content_path) out << "content=" << cfg.content_path->string() << '\n';
  for (const auto& s : cfg.style_paths) out << "style=" << s.string() << '\n';
  if (cfg.weights_path) out << "weights=" << cfg.weights_path->string() << '\n';
  out << "alpha=" << format_double(cfg.weights.alpha) << '\n'
      << "beta=" << format_double(cfg.weights.beta) << '\n'
      << "gamma=" << format_double(cfg.weights.gamma) << '\n'
      << "style-layers=" << to_string(cfg.layers.style) << '\n'
      << "content-layers=" << to_string(cfg.layers.content) << '\n'
      << "orientation=" << to_string(cfg.orientation) << '\n'
      << "kernel-width=" << cfg.kernel_width << '\n'
      << "channels=" << cfg.channels << '\n'
      << "scaling=" << to_string(cfg.scaling) << '\n'
      << "cqt-fmin=" << format_double(cfg.cqt.f_min) << '\n'
      << "cqt-bins-per-octave=" << cfg.cqt.bins_per_octave << '\n'
      << "init=" << to_string(cfg.init) << '\n';
  if (cfg.out_frames) out << "out-frames=" << *cfg.out_frames << '\n';
  out << "iters=" << cfg.opt.iterations << '\n'
      << "optimizer=" << to_string(cfg.opt.method) << '\n'
      << "lbfgs-history=" << cfg.opt.lbfgs_history << '\n'
      << "lbfgs-step=" << format_double(cfg.opt.lbfgs_step) << '\n'
      << "lbfgs-inner=" << cfg.opt.lbfgs_inner << '\n'
      << "adam-lr=" << format_double(cfg.opt.adam_lr) << '\n'
      << "log-every=" << cfg.opt.log_every << '\n'
      << "window=" << cfg.stft.window_len << '\n'
      << "hop=" << cfg.stft.hop << '\n'
      << "gl-iters=" << cfg.griffin_lim_iters << '\n'
      << "gl-momentum=" << format_double(cfg.griffin_lim_momentum) << '\n'
      << "seed=" << cfg.seed << '\n'
      << "out=" << cfg.output_dir.string() << '\n'
      << "png=" << (cfg.png_export ? "true" : "false") << '\n'
      << "trace=" << (cfg.trace_export ? "true" : "false") << '\n';
  return out.str();
}

int run(const CliConfig& cfg) {
  try {
    const SynthJob job = make_job(cfg);
    const SynthResult result = run_job(job);

    std::filesystem::create_directories(cfg.output_dir);
    const auto& dir = cfg.output_dir;
    save_wav16(dir / "out.wav", result.audio);
    if (cfg.png_export) {
      write_png(dir / "out.png", spectrogram_image(result.image.pixels));
      for (std::size_t i = 0; i < result.style_references.size(); ++i)
        write_png(dir / ("style_" + std::to_string(i + 1) + ".png"),
                  spectrogram_image(result.style_references[i].pixels));
      if (result.content_reference)
        write_png(dir / "content.png", spectrogram_image(result.content_reference->pixels));
    }
    if (cfg.trace_export) {
      std::ofstream trace(dir / "trace.csv");
      write_trace_csv(trace, result.trace);
      if (!trace) throw IoError("cannot write trace.csv");
    }
    std::ofstream meta(dir / "run.cfg");
    meta << "# audiotex run; replay with: audiotex --config run.cfg\n"
         << config_text(cfg) << "# resolved\n";
    for (const auto& [key, value] : result.metadata)
      meta << "# " << key << '=' << value << '\n';
    if (!meta) throw IoError("cannot write run.cfg");
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "audiotex: error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace audiotex::cli
