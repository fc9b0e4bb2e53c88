#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "audiotex/audio.hpp"
#include "audiotex/losses.hpp"
#include "audiotex/network.hpp"
#include "audiotex/optimizer.hpp"
#include "audiotex/spectrogram.hpp"
#include "audiotex/stft.hpp"

namespace audiotex {

enum class InitMode { noise, content_clone };

std::string_view to_string(InitMode m);
InitMode parse_init_mode(std::string_view name);
std::string_view to_string(FrequencyScale s);
FrequencyScale parse_scaling(std::string_view name);

struct CqtParams {
  double f_min = 65.4;  // C2
  int bins_per_octave = 24;
};

/// A complete synthesis request. Reference audio is held in memory; the CLI
/// is responsible for loading files.
struct SynthJob {
  std::optional<Signal> content;
  std::vector<Signal> styles;
  LossWeights weights;
  LayerSets layers;
  Orientation orientation = Orientation::freq_channels_1d;
  std::size_t kernel_width = 11;
  /// Channels per stack; 0 selects default_channels(orientation).
  std::size_t channels = 0;
  FrequencyScale scaling = FrequencyScale::linear_stft;
  CqtParams cqt;
  InitMode init = InitMode::noise;
  /// Output width in frames; defaults to the content width when content
  /// participates, otherwise to the style width.
  std::optional<std::size_t> out_frames;
  std::uint64_t seed = 0;
  OptConfig opt;
  StftConfig stft;
  int griffin_lim_iters = 100;
  double griffin_lim_momentum = kGriffinLimMomentum;
  /// Externally supplied (e.g. trained) network; a random one is built
  /// from `seed` when empty.
  std::shared_ptr<const Network> network;
};

/// Reference spectrograms in the scaling the optimisation runs in.
struct ReferenceSet {
  std::vector<Spectrogram> styles;  // tiled/truncated to a common width
  std::optional<Spectrogram> content;
  double shared_scale = 1.0;
  std::shared_ptr<const CqtKernel> cqt;
};

ReferenceSet prepare_references(const SynthJob& job);

/// Style Grams of all references stacked on the batch axis (so the Gram
/// correlates features across references, normalised by sigma*H*W) and
/// content activations of a separate single-image pass. Terms with zero
/// weight are skipped.
Targets prepare_targets(const Network& net,
                        const std::vector<Matrix>& style_images,
                        const Matrix* content_image, const LayerSets& layers,
                        const LossWeights& weights);

/// Tiles (repeats) or truncates columns to `frames`.
Matrix fit_width(const Matrix& image, std::size_t frames);

/// Seeded uniform [0, 1) image.
Matrix noise_image(std::size_t bins, std::size_t frames, std::uint64_t seed);

/// Seed streams derived from SynthJob::seed.
std::uint64_t noise_seed(std::uint64_t job_seed);
std::uint64_t phase_seed(std::uint64_t job_seed);

struct SynthResult {
  Spectrogram spectrogram;  // linear-frequency output used for inversion
  Spectrogram image;        // optimised image in the job's scaling
  Matrix initial_image;
  Signal audio;
  double spectral_convergence = 0.0;
  RunTrace trace;
  Evaluation initial;
  Evaluation final;
  std::vector<Spectrogram> style_references;
  std::optional<Spectrogram> content_reference;
  std::shared_ptr<const Network> network;
  Targets targets;
  /// Resolved configuration, shared scale and seeds as key=value strings.
  std::map<std::string, std::string> metadata;
};

/// Content plus style; alpha > 0 and a content reference are required.
SynthResult style_transfer(const SynthJob& job);

/// Style only (alpha = 0) from seeded noise, at any width >= kernel width.
SynthResult texture_synthesize(const SynthJob& job);

/// Dispatches on alpha and wires the constant-Q conversion when requested.
SynthResult run_job(const SynthJob& job);

/// Frobenius distance between the Grams of `image` and the style targets,
/// summed over the style layers.
double style_gram_distance(const Network& net, const Matrix& image,
                           const Targets& targets, LayerSet layers);

std::string format_double(double v);

}  // namespace audiotex
