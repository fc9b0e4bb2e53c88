#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "audiotex/error.hpp"
#include "audiotex/synth.hpp"

namespace audiotex::cli {

/// Bad command line or config file.
class UsageError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// --help was given; what() holds the help text.
class HelpRequested : public Error {
 public:
  using Error::Error;
};

struct CliConfig {
  std::optional<std::filesystem::path> content_path;
  std::vector<std::filesystem::path> style_paths;
  std::optional<std::filesystem::path> weights_path;
  std::filesystem::path output_dir = "out";
  bool png_export = true;
  bool trace_export = true;

  LossWeights weights;
  LayerSets layers;
  Orientation orientation = Orientation::freq_channels_1d;
  std::size_t kernel_width = 11;
  std::size_t channels = 0;
  FrequencyScale scaling = FrequencyScale::linear_stft;
  CqtParams cqt;
  InitMode init = InitMode::noise;
  std::optional<std::size_t> out_frames;
  std::uint64_t seed = 0;
  OptConfig opt;
  StftConfig stft;
  int griffin_lim_iters = 100;
  double griffin_lim_momentum = kGriffinLimMomentum;
};

/// Reads `key=value` lines; `#` starts a comment, blank lines are skipped.
/// Repeated keys accumulate.
std::multimap<std::string, std::string> read_config_file(const std::filesystem::path& path);

/// Parses flags; entries from --config are applied first and any flag given
/// on the command line replaces the file's entries for that key.
CliConfig parse_args(int argc, const char* const* argv);
CliConfig parse_args(const std::vector<std::string>& args);

/// Loads the references and builds the job (no files are written).
SynthJob make_job(const CliConfig& cfg);

/// Config-file text that reproduces this run.
std::string config_text(const CliConfig& cfg);

/// Runs the job and writes out.wav, PNGs, trace.csv and run.cfg into the
/// output directory. Returns the process exit code; errors are reported on
/// stderr.
int run(const CliConfig& cfg);

}  // namespace audiotex::cli
