// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run everything
//   acceptance --only 4   run a single criterion (repeatable)

#include "support.hpp"

#include <audiotex/audio.hpp>
#include <audiotex/cli.hpp>
#include <audiotex/losses.hpp>
#include <audiotex/network.hpp>
#include <audiotex/spectrogram.hpp>
#include <audiotex/stft.hpp>
#include <audiotex/synth.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace audiotex;
using namespace audiotex::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // 0 = no time limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Desk-scale setting shared by the optimisation criteria: one-second
// references, 256 channels per stack, and a 256-sample STFT window (129 bins,
// 345 frames) so that 500 outer L-BFGS steps fit the time limit on one core.
constexpr std::size_t kDeskChannels = 256;
constexpr double kDeskSeconds = 1.0;
constexpr double kDeskPeriod = 0.125;
constexpr std::uint64_t kSeed = 1234;

StftConfig desk_stft() {
  StftConfig cfg;
  cfg.window_len = 256;
  cfg.hop = 64;
  return cfg;
}

// A quiet chirp keeps log1p near its linear range, so the reference image is
// sparse: bright chirp lines on a dark background.
constexpr double kDeskGain = 0.01;

Signal desk_style() {
  Signal s = periodic_chirp(kDeskSeconds, kDeskPeriod);
  for (double& v : s.samples) v *= kDeskGain;
  return s;
}

SynthJob desk_texture_job() {
  SynthJob job;
  job.styles = {desk_style()};
  job.stft = desk_stft();
  job.channels = kDeskChannels;
  job.seed = kSeed;
  job.opt.iterations = 500;
  job.opt.log_every = 50;
  return job;
}

Outcome shape_reproduction() {
  const Signal clip = sine(440.0, 5.0);
  const Spectrogram s = to_spectrogram(stft(clip, StftConfig{}));
  const Tensor4 t = orient(s.pixels, Orientation::freq_channels_1d);
  const Shape4 want{1, 513, 1, 431};
  const bool ok = clip.size() == 110250 && s.bins() == 513 && s.frames() == 431 &&
                  t.shape() == want;
  return {ok, fmt("spectrogram (%zu, %zu), tensor %s", s.bins(), s.frames(),
                  to_string(t.shape()).c_str())};
}

Outcome gradient_correctness() {
  const std::size_t bins = 16, frames = 32;
  const Network net = init_random(Orientation::freq_channels_1d, 8, 3, bins, 5);
  const Matrix style = random_matrix(bins, frames, 11);
  const Matrix content = random_matrix(bins, frames, 12);
  // Some pixels outside [0, 1] so the range term contributes.
  const Matrix x = random_matrix(bins, frames, 13, -0.2, 1.2);

  const LayerSets layers{{Layer::relu1, Layer::relu2}, {Layer::relu3}};
  const LossWeights w{1.0, 10.0, 0.1};
  const Targets targets = prepare_targets(net, {style}, &content, layers, w);
  const ObjectiveValue v = total_objective(net, x, targets, w, layers);

  const auto f = [&](std::span<const double> p) {
    Matrix img(bins, frames);
    std::copy(p.begin(), p.end(), img.data());
    return total_objective(net, img, targets, w, layers).total;
  };
  const std::vector<double> num = numeric_gradient(f, x.storage(), 1e-4);
  const double err = max_relative_error(v.grad.storage(), num, 1e-10);
  return {err < 1e-3, fmt("max relative error %.3e over %zu pixels (content %.3g, style %.3g, range %.3g)",
                          err, num.size(), v.parts.content, v.parts.style, v.parts.range)};
}

Outcome gram_oracle() {
  double worst = 0.0;
  int cases = 0;
  for (std::size_t b : {1, 2})
    for (std::size_t c : {1, 3, 8})
      for (std::size_t w : {1, 5, 16}) {
        const Tensor4 t = random_tensor({b, c, 1, w}, 100 + cases++);
        const GramMatrix g = gram(t);
        const double u = static_cast<double>(b * w);
        for (std::size_t i = 0; i < c; ++i)
          for (std::size_t j = 0; j < c; ++j) {
            double s = 0.0;
            for (std::size_t bb = 0; bb < b; ++bb)
              for (std::size_t k = 0; k < w; ++k) s += t.at(bb, i, 0, k) * t.at(bb, j, 0, k);
            worst = std::max(worst, std::abs(g.values(i, j) - s / u));
          }
      }
  return {worst < 1e-9, fmt("%d shapes, max deviation %.3e", cases, worst)};
}

Outcome texture_convergence() {
  const SynthJob job = desk_texture_job();
  const SynthResult r = texture_synthesize(job);
  const double ratio = r.final.parts.style / r.initial.parts.style;
  return {ratio <= 1e-3,
          fmt("style loss %.4e -> %.4e (ratio %.3e), %d evaluations, %d rollbacks",
              r.initial.parts.style, r.final.parts.style, ratio, r.trace.evaluations,
              r.trace.rollbacks)};
}

Outcome identity_fixed_point() {
  // Style identity: the reference scored against its own Gram.
  SynthJob job = desk_texture_job();
  const ReferenceSet refs = prepare_references(job);
  const Matrix& ref = refs.styles.front().pixels;
  const Network net = init_random(Orientation::freq_channels_1d, kDeskChannels, 11,
                                  ref.rows(), kSeed);
  const Targets targets = prepare_targets(net, {ref}, nullptr, job.layers, job.weights);
  const ObjectiveValue v = total_objective(net, ref, targets, job.weights, job.layers);

  // Content fixed point.
  SynthJob st;
  st.content = tone_melody(kDeskSeconds);
  st.styles = {desk_style()};
  st.stft = desk_stft();
  st.weights = {1.0, 0.0, 1e-3};
  st.init = InitMode::content_clone;
  st.channels = kDeskChannels;
  st.seed = kSeed;
  st.opt.iterations = 50;
  const SynthResult r = style_transfer(st);
  const double moved = max_abs_diff(r.image.pixels.storage(), r.content_reference->pixels.storage());
  return {v.parts.style < 1e-10 && moved < 1e-6,
          fmt("identity style loss %.3e, content-clone drift %.3e", v.parts.style, moved)};
}

Outcome infinite_texture() {
  SynthJob job = desk_texture_job();
  const std::size_t ref_frames = job.stft.frames(job.styles.front().size());
  job.out_frames = 3 * ref_frames;
  job.opt.iterations = 100;
  const SynthResult r = texture_synthesize(job);
  const double d0 = style_gram_distance(*r.network, r.initial_image, r.targets, job.layers.style);
  const double d1 = style_gram_distance(*r.network, r.image.pixels, r.targets, job.layers.style);

  TempDir dir("accept6");
  save_wav16(dir / "out.wav", r.audio);
  const Signal back = load_wav(dir / "out.wav");
  const double want = 3.0 * job.styles.front().duration();
  const double tol = static_cast<double>(job.stft.window_len) / kSampleRate;
  const double got = back.duration();
  const bool ok = r.image.frames() == 3 * ref_frames && d1 <= 0.05 * d0 &&
                  std::abs(got - want) <= tol;
  return {ok, fmt("width %zu, Gram distance %.4e -> %.4e (%.2f%%), duration %.4f s vs %.4f s +- %.4f",
                  r.image.frames(), d0, d1, 100.0 * d1 / d0, got, want, tol)};
}

Outcome multi_texture() {
  const StftConfig cfg;
  const std::vector<Signal> clips = {periodic_chirp(5.0), tone_melody(5.0), sine(440.0, 5.0)};
  std::vector<Matrix> images;
  for (const Signal& s : clips) images.push_back(to_spectrogram(stft(s, cfg)).pixels);
  const Tensor4 batch = orient_batch(images, Orientation::freq_channels_1d);
  const Shape4 want{3, 513, 1, 431};

  const Network net = init_random(Orientation::freq_channels_1d, 64, 11, 513, kSeed);
  const LayerSets layers;
  const LossWeights w;
  const Targets one = prepare_targets(net, {images[0]}, nullptr, layers, w);
  const Targets three = prepare_targets(net, {images[0], images[0], images[0]}, nullptr, layers, w);
  double worst = 0.0;
  for (int n = 0; n < 2; ++n)
    worst = std::max(worst, max_abs_diff(one.style[n]->values.storage(),
                                         three.style[n]->values.storage()));
  return {batch.shape() == want && worst < 1e-9,
          fmt("batch %s, duplicated-reference Gram deviation %.3e",
              to_string(batch.shape()).c_str(), worst)};
}

Outcome beta_alpha_monotonicity() {
  std::vector<double> content;
  std::string detail;
  for (double ratio : {1e5, 1e7, 1e9}) {
    SynthJob job;
    job.content = tone_melody(kDeskSeconds);
    job.styles = {desk_style()};
    job.stft = desk_stft();
    job.weights = {1.0, ratio, 1e-3};
    job.init = InitMode::content_clone;
    job.channels = kDeskChannels;
    job.seed = kSeed;
    job.opt.iterations = 100;
    const SynthResult r = style_transfer(job);
    content.push_back(r.final.parts.content);
    detail += fmt("%sbeta/alpha=%.0e: content %.4e", detail.empty() ? "" : ", ", ratio,
                  r.final.parts.content);
  }
  const bool ok = content[0] <= content[1] && content[1] <= content[2];
  return {ok, detail};
}

Outcome griffin_lim_convergence() {
  const StftConfig cfg;
  const Signal tone = sine(440.0, 5.0);
  const Matrix mags = magnitudes(stft(tone, cfg));
  const GriffinLimResult r = griffin_lim(mags, cfg, 100, kSeed, tone.size());
  return {r.spectral_convergence < 0.1, fmt("spectral convergence %.4f", r.spectral_convergence)};
}

Outcome cqt_round_trip() {
  const StftConfig cfg;
  const std::size_t frames = 431;
  Matrix smooth(cfg.bins(), frames);
  // Broad spectral envelope drifting slowly in time.
  for (std::size_t k = 0; k < smooth.rows(); ++k)
    for (std::size_t t = 0; t < frames; ++t) {
      const double f = static_cast<double>(k) / static_cast<double>(smooth.rows() - 1);
      const double drift = 0.15 * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / frames);
      smooth(k, t) = 0.2 + 0.5 * std::exp(-f * 3.0) +
                     0.3 * std::exp(-std::pow((f - 0.4 - drift) / 0.15, 2.0));
    }
  Spectrogram s;
  s.pixels = smooth;
  s.config = cfg;
  const auto kernel = build_cqt_kernel(65.4, 24, cfg.bins(), kSampleRate);
  const Spectrogram back = cqt_inverse(cqt_forward(s, kernel), kernel);
  std::vector<double> diff(smooth.size());
  for (std::size_t i = 0; i < diff.size(); ++i)
    diff[i] = back.pixels.data()[i] - smooth.data()[i];
  const double rel = frobenius(diff) / frobenius(smooth.storage());
  return {rel < 0.10, fmt("%zu constant-Q bins, relative error %.4f", kernel->cqt_bins(), rel)};
}

Outcome determinism() {
  TempDir dir("accept11");
  save_wav16(dir / "style.wav", periodic_chirp(kDeskSeconds));
  save_wav16(dir / "content.wav", tone_melody(kDeskSeconds));
  const auto run_once = [&](const std::string& out) {
    const cli::CliConfig cfg = cli::parse_args(std::vector<std::string>{
        "--style", (dir / "style.wav").string(), "--content", (dir / "content.wav").string(),
        "--alpha", "1", "--beta", "1e8", "--init", "content", "--channels", "64",
        "--iters", "20", "--seed", "99", "--out", (dir / out).string()});
    return cli::run(cfg);
  };
  if (run_once("a") != 0 || run_once("b") != 0) return {false, "run failed"};
  std::vector<std::string> compared;
  bool same = true;
  for (const char* name : {"out.wav", "out.png", "style_1.png", "content.png", "trace.csv"}) {
    const auto a = read_bytes(dir / "a" / name);
    const auto b = read_bytes(dir / "b" / name);
    if (a.empty() || a != b) same = false;
    compared.push_back(name);
  }
  std::string names;
  for (const auto& n : compared) names += (names.empty() ? "" : " ") + n;
  return {same, (same ? "identical: " : "differ: ") + names};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only.insert(std::atoi(argv[++i]));
    } else {
      std::fprintf(stderr, "usage: %s [--only N]...\n", argv[0]);
      return 2;
    }
  }

  const std::vector<Criterion> criteria = {
      {1, "shape reproduction", 1.0, shape_reproduction},
      {2, "gradient correctness", 120.0, gradient_correctness},
      {3, "Gram oracle equivalence", 1.0, gram_oracle},
      {4, "texture convergence", 600.0, texture_convergence},
      {5, "identity fixed point", 60.0, identity_fixed_point},
      {6, "infinite texture", 900.0, infinite_texture},
      {7, "multi-texture", 60.0, multi_texture},
      {8, "beta/alpha monotonicity", 1800.0, beta_alpha_monotonicity},
      {9, "Griffin-Lim", 30.0, griffin_lim_convergence},
      {10, "CQT round trip", 5.0, cqt_round_trip},
      {11, "determinism", 0.0, determinism},
  };

  int failed = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.contains(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = c.limit_s == 0.0 || secs < c.limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::string timing = fmt("%.2f s", secs);
    if (c.limit_s > 0.0) timing += fmt(" / limit %.0f s", c.limit_s);
    if (!in_time) timing += " OVER TIME";
    std::printf("[%s] %2d %-26s %s (%s)\n", pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
