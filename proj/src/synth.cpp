#include "audiotex/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "audiotex/error.hpp"
#include "audiotex/random.hpp"

namespace audiotex {

std::string_view to_string(InitMode m) {
  return m == InitMode::noise ? "noise" : "content";
}

InitMode parse_init_mode(std::string_view name) {
  if (name == "noise") return InitMode::noise;
  if (name == "content" || name == "content_clone") return InitMode::content_clone;
  throw InvalidArgument("unknown init mode '" + std::string(name) + "'");
}

std::string_view to_string(FrequencyScale s) {
  return s == FrequencyScale::linear_stft ? "stft" : "cqt";
}

FrequencyScale parse_scaling(std::string_view name) {
  if (name == "stft" || name == "linear" || name == "linear_stft")
    return FrequencyScale::linear_stft;
  if (name == "cqt") return FrequencyScale::cqt;
  throw InvalidArgument("unknown scaling '" + std::string(name) + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::uint64_t noise_seed(std::uint64_t job_seed) { return derive_seed(job_seed, 1); }
std::uint64_t phase_seed(std::uint64_t job_seed) { return derive_seed(job_seed, 2); }

Matrix fit_width(const Matrix& image, std::size_t frames) {
  if (image.cols() == 0) throw InvalidArgument("fit_width: empty image");
  Matrix out(image.rows(), frames);
  for (std::size_t r = 0; r < image.rows(); ++r)
    for (std::size_t c = 0; c < frames; ++c) out(r, c) = image(r, c % image.cols());
  return out;
}

Matrix noise_image(std::size_t bins, std::size_t frames, std::uint64_t seed) {
  Matrix m(bins, frames);
  Rng rng(seed);
  for (double& v : m.storage()) v = uniform01(rng);
  return m;
}

ReferenceSet prepare_references(const SynthJob& job) {
  if (job.styles.empty()) throw InvalidArgument("at least one style reference is required");
  validate(job.stft);

  std::vector<Matrix> style_mags;
  std::size_t width = 0;
  int rate = job.styles.front().sample_rate;
  for (const Signal& s : job.styles) {
    validate(s);
    if (s.sample_rate != rate) throw InvalidArgument("references differ in sample rate");
    style_mags.push_back(magnitudes(stft(s, job.stft)));
    width = std::max(width, style_mags.back().cols());
  }
  std::optional<Matrix> content_mags;
  if (job.content) {
    validate(*job.content);
    if (job.content->sample_rate != rate)
      throw InvalidArgument("references differ in sample rate");
    content_mags = magnitudes(stft(*job.content, job.stft));
  }

  // One scale for every image in the run keeps them commensurate.
  double scale = 0.0;
  for (const Matrix& m : style_mags) scale = std::max(scale, log_magnitude_max(m));
  if (content_mags) scale = std::max(scale, log_magnitude_max(*content_mags));
  if (!(scale > 0.0)) throw InvalidArgument("all reference spectrograms are silent");

  ReferenceSet refs;
  refs.shared_scale = scale;
  if (job.scaling == FrequencyScale::cqt)
    refs.cqt = build_cqt_kernel(job.cqt.f_min, job.cqt.bins_per_octave, job.stft.bins(), rate);

  const auto finish = [&](const Matrix& mags, std::size_t length) {
    Spectrogram s = to_spectrogram(mags, job.stft, scale);
    s.signal_length = length;
    if (refs.cqt) s = cqt_forward(s, refs.cqt);
    return s;
  };
  for (std::size_t i = 0; i < style_mags.size(); ++i) {
    const std::size_t length = style_mags[i].cols() == width ? job.styles[i].size() : 0;
    refs.styles.push_back(finish(fit_width(style_mags[i], width), length));
  }
  if (content_mags) refs.content = finish(*content_mags, job.content->size());
  return refs;
}

Targets prepare_targets(const Network& net, const std::vector<Matrix>& style_images,
                        const Matrix* content_image, const LayerSets& layers,
                        const LossWeights& weights) {
  Targets targets;
  const Orientation o = net.orientation();
  if (weights.beta > 0.0 && !layers.style.empty()) {
    if (style_images.empty()) throw InvalidArgument("no style images");
    const Activations acts = forward(net, orient_batch(style_images, o), layers.style.depth());
    for (int n = 0; n < kNumLayers; ++n)
      if (layers.style.contains(static_cast<Layer>(n)))
        targets.style[static_cast<std::size_t>(n)] = gram(acts.relu(static_cast<Layer>(n)));
  }
  if (weights.alpha > 0.0 && !layers.content.empty()) {
    if (content_image == nullptr) throw InvalidArgument("content weight set without content");
    Activations acts = forward(net, orient(*content_image, o), layers.content.depth());
    for (int n = 0; n < kNumLayers; ++n)
      if (layers.content.contains(static_cast<Layer>(n)))
        targets.content[static_cast<std::size_t>(n)] =
            std::move(acts.stacks[static_cast<std::size_t>(n)].relu);
  }
  return targets;
}

double style_gram_distance(const Network& net, const Matrix& image,
                           const Targets& targets, LayerSet layers) {
  const Activations acts = forward(net, orient(image, net.orientation()), layers.depth());
  double total = 0.0;
  for (int n = 0; n < kNumLayers; ++n) {
    const auto layer = static_cast<Layer>(n);
    if (!layers.contains(layer)) continue;
    const auto& target = targets.style[static_cast<std::size_t>(n)];
    if (!target) throw InvalidArgument("no style target for " + std::string(to_string(layer)));
    const GramMatrix g = gram(acts.relu(layer));
    double sq = 0.0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double d = g.values.data()[i] - target->values.data()[i];
      sq += d * d;
    }
    total += std::sqrt(sq);
  }
  return total;
}

namespace {

void validate_job(const SynthJob& job) {
  validate(job.weights);
  validate(job.opt);
  validate(job.stft);
  if (job.styles.empty()) throw InvalidArgument("at least one style reference is required");
  if (job.kernel_width == 0 || job.kernel_width % 2 == 0)
    throw InvalidArgument("kernel width must be odd");
  if (job.griffin_lim_iters < 1) throw InvalidArgument("Griffin-Lim iterations must be >= 1");
  if (!(job.griffin_lim_momentum >= 0.0 && job.griffin_lim_momentum < 1.0))
    throw InvalidArgument("Griffin-Lim momentum must be in [0, 1)");
  if (job.init == InitMode::content_clone && !job.content)
    throw InvalidArgument("content initialisation needs a content reference");
  if (job.weights.alpha > 0.0 && !job.content)
    throw InvalidArgument("alpha > 0 needs a content reference");
}

SynthResult synthesize(const SynthJob& job) {
  validate_job(job);
  ReferenceSet refs = prepare_references(job);
  const Orientation o = job.orientation;
  const bool content_used = job.weights.alpha > 0.0 || job.init == InitMode::content_clone;

  const std::size_t bins = refs.styles.front().bins();
  const std::size_t style_frames = refs.styles.front().frames();
  std::size_t frames = style_frames;
  if (content_used) {
    const std::size_t content_frames = refs.content->frames();
    if (job.out_frames && *job.out_frames != content_frames)
      throw InvalidArgument("output width " + std::to_string(*job.out_frames) +
                            " differs from the content width " +
                            std::to_string(content_frames));
    frames = content_frames;
  } else if (job.out_frames) {
    frames = *job.out_frames;
  }
  if (frames < job.kernel_width)
    throw InvalidArgument("output width " + std::to_string(frames) +
                          " is smaller than the kernel width " +
                          std::to_string(job.kernel_width));
  if (o == Orientation::time_channels_1d && frames != style_frames)
    throw InvalidArgument("time-as-channels needs the output width to equal the style width");

  const std::size_t in_ch = input_channels(o, bins, frames);
  std::shared_ptr<const Network> net = job.network;
  if (!net) {
    std::array<std::size_t, 3> ch = default_channels(o);
    if (job.channels > 0) ch = {job.channels, job.channels, job.channels};
    net = std::make_shared<const Network>(
        init_random(o, ch, job.kernel_width, in_ch, job.seed));
  } else {
    if (net->orientation() != o)
      throw InvalidArgument("supplied network has orientation " +
                            std::string(to_string(net->orientation())));
    if (net->in_channels() != in_ch)
      throw InvalidArgument("supplied network expects " + std::to_string(net->in_channels()) +
                            " input channels, the image provides " + std::to_string(in_ch));
  }

  std::vector<Matrix> style_images;
  for (const Spectrogram& s : refs.styles) style_images.push_back(s.pixels);
  const Matrix* content_image = refs.content ? &refs.content->pixels : nullptr;
  Targets targets = prepare_targets(*net, style_images, content_image, job.layers, job.weights);

  Matrix x0 = job.init == InitMode::content_clone ? refs.content->pixels
                                                  : noise_image(bins, frames, noise_seed(job.seed));

  const Objective objective = [&](std::span<const double> x) {
    Matrix img(bins, frames);
    std::copy(x.begin(), x.end(), img.data());
    ObjectiveValue v = total_objective(*net, img, targets, job.weights, job.layers);
    return Evaluation{v.total, std::move(v.grad.storage()), v.parts};
  };
  OptResult opt = minimize(objective, x0.storage(), job.opt);

  SynthResult res;
  res.initial_image = std::move(x0);
  res.image = refs.styles.front();
  res.image.pixels = Matrix(bins, frames);
  std::copy(opt.x.begin(), opt.x.end(), res.image.pixels.data());
  res.image.signal_length = 0;
  res.spectrogram = refs.cqt ? cqt_inverse(res.image, refs.cqt) : res.image;

  const Matrix mags = from_spectrogram(res.spectrogram);
  GriffinLimResult gl = griffin_lim(mags, job.stft, job.griffin_lim_iters,
                                    phase_seed(job.seed), 0, job.styles.front().sample_rate,
                                    job.griffin_lim_momentum);
  res.audio = std::move(gl.signal);
  res.spectral_convergence = gl.spectral_convergence;
  res.trace = std::move(opt.trace);
  res.initial = std::move(opt.initial);
  res.final = std::move(opt.final);
  res.style_references = std::move(refs.styles);
  res.content_reference = std::move(refs.content);
  res.network = net;
  res.targets = std::move(targets);

  auto& md = res.metadata;
  md["alpha"] = format_double(job.weights.alpha);
  md["beta"] = format_double(job.weights.beta);
  md["gamma"] = format_double(job.weights.gamma);
  md["style-layers"] = to_string(job.layers.style);
  md["content-layers"] = to_string(job.layers.content);
  md["orientation"] = std::string(to_string(o));
  md["kernel-width"] = std::to_string(job.kernel_width);
  md["channels"] = std::to_string(net->channels(Layer::relu1)) + "," +
                   std::to_string(net->channels(Layer::relu2)) + "," +
                   std::to_string(net->channels(Layer::relu3));
  md["in-channels"] = std::to_string(net->in_channels());
  md["network"] = job.network ? "external" : "random";
  md["scaling"] = std::string(to_string(job.scaling));
  if (refs.cqt) {
    md["cqt-fmin"] = format_double(job.cqt.f_min);
    md["cqt-bins-per-octave"] = std::to_string(job.cqt.bins_per_octave);
    md["cqt-bins"] = std::to_string(refs.cqt->cqt_bins());
    if (o != Orientation::time_channels_1d) md["nonstandard-configuration"] = "cqt-without-time1d";
  }
  md["init"] = std::string(to_string(job.init));
  md["out-frames"] = std::to_string(frames);
  md["style-count"] = std::to_string(job.styles.size());
  md["seed"] = std::to_string(job.seed);
  md["noise-seed"] = std::to_string(noise_seed(job.seed));
  md["phase-seed"] = std::to_string(phase_seed(job.seed));
  md["optimizer"] = std::string(to_string(job.opt.method));
  md["iters"] = std::to_string(job.opt.iterations);
  md["lbfgs-history"] = std::to_string(job.opt.lbfgs_history);
  md["lbfgs-step"] = format_double(job.opt.lbfgs_step);
  md["lbfgs-inner"] = std::to_string(job.opt.lbfgs_inner);
  md["adam-lr"] = format_double(job.opt.adam_lr);
  md["log-every"] = std::to_string(job.opt.log_every);
  md["window"] = std::to_string(job.stft.window_len);
  md["hop"] = std::to_string(job.stft.hop);
  md["gl-iters"] = std::to_string(job.griffin_lim_iters);
  md["gl-momentum"] = format_double(job.griffin_lim_momentum);
  md["shared-scale"] = format_double(res.spectrogram.scale_max);
  md["evaluations"] = std::to_string(res.trace.evaluations);
  md["final-loss"] = format_double(res.final.value);
  md["spectral-convergence"] = format_double(res.spectral_convergence);
  return res;
}

}  // namespace

SynthResult style_transfer(const SynthJob& job) {
  if (!job.content) throw InvalidArgument("style transfer needs a content reference");
  if (!(job.weights.alpha > 0.0)) throw InvalidArgument("style transfer needs alpha > 0");
  return synthesize(job);
}

SynthResult texture_synthesize(const SynthJob& job) {
  if (job.weights.alpha != 0.0) throw InvalidArgument("texture synthesis needs alpha = 0");
  if (job.init != InitMode::noise)
    throw InvalidArgument("texture synthesis starts from noise");
  return synthesize(job);
}

SynthResult run_job(const SynthJob& job) {
  return job.weights.alpha > 0.0 ? style_transfer(job) : texture_synthesize(job);
}

}  // namespace audiotex
