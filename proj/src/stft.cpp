#include "audiotex/stft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

#include "audiotex/error.hpp"
#include "audiotex/random.hpp"

namespace audiotex {

namespace {

// Real FFT plans of one size. The FFTW planner is not thread safe, so plans
// are created once under a lock and then only executed (which is).
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::vector<double> re(n);
    std::vector<fftw_complex> spec(n / 2 + 1);
    const int size = static_cast<int>(n);
    forward_ = fftw_plan_dft_r2c_1d(size, re.data(), spec.data(),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
    backward_ = fftw_plan_dft_c2r_1d(size, spec.data(), re.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(backward_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  void forward(double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(forward_, in, reinterpret_cast<fftw_complex*>(out));
  }
  // Unnormalised; destroys `in`.
  void backward(std::complex<double>* in, double* out) const {
    fftw_execute_dft_c2r(backward_, reinterpret_cast<fftw_complex*>(in), out);
  }
  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

const RealFft& plan_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<RealFft>> plans;
  std::lock_guard lock(mu);
  auto& slot = plans[n];
  if (!slot) slot = std::make_unique<RealFft>(n);
  return *slot;
}

// numpy-style "reflect" (edge sample not repeated), folded until in range.
std::size_t reflect_index(std::ptrdiff_t j, std::size_t len) {
  if (len == 1) return 0;
  const auto n = static_cast<std::ptrdiff_t>(len);
  const std::ptrdiff_t period = 2 * (n - 1);
  j %= period;
  if (j < 0) j += period;
  return static_cast<std::size_t>(j < n ? j : period - j);
}

}  // namespace

std::size_t StftConfig::frames(std::size_t len) const {
  if (centered) return len / hop + 1;
  if (len <= window_len) return 1;
  return 1 + (len - window_len) / hop;
}

void validate(const StftConfig& cfg) {
  if (cfg.window_len < 2 || cfg.window_len % 2 != 0)
    throw InvalidArgument("window length must be even and at least 2");
  if (cfg.hop == 0 || cfg.hop > cfg.window_len)
    throw InvalidArgument("hop must satisfy 0 < hop <= window length");
}

std::vector<double> make_window(WindowKind kind, std::size_t len) {
  std::vector<double> w(len, 1.0);
  const double step = 2.0 * std::numbers::pi / static_cast<double>(len);
  for (std::size_t n = 0; n < len; ++n) {
    const double c = std::cos(step * static_cast<double>(n));
    switch (kind) {
      case WindowKind::hann: w[n] = 0.5 - 0.5 * c; break;
      case WindowKind::hamming: w[n] = 0.54 - 0.46 * c; break;
      case WindowKind::rectangular: break;
    }
  }
  return w;
}

ComplexSpectrogram stft(const Signal& signal, const StftConfig& cfg) {
  validate(cfg);
  if (signal.samples.empty()) throw InvalidArgument("empty signal");

  const std::size_t len = signal.samples.size();
  const std::size_t L = cfg.window_len;
  const std::size_t F = cfg.bins();
  const std::size_t T = cfg.frames(len);
  const auto window = make_window(cfg.window, L);
  const RealFft& fft = plan_for(L);
  const auto pad = cfg.centered ? static_cast<std::ptrdiff_t>(L / 2) : 0;

  ComplexSpectrogram out;
  out.config = cfg;
  out.signal_length = len;
  out.bins = BasicMatrix<std::complex<double>>(F, T);

  const auto& x = signal.samples;
  const auto frames = static_cast<std::ptrdiff_t>(T);
#pragma omp parallel
  {
    std::vector<double> frame(L);
    std::vector<std::complex<double>> spec(F);
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < frames; ++t) {
      const std::ptrdiff_t start = t * static_cast<std::ptrdiff_t>(cfg.hop) - pad;
      for (std::size_t m = 0; m < L; ++m) {
        const std::ptrdiff_t j = start + static_cast<std::ptrdiff_t>(m);
        double v;
        if (cfg.centered) {
          v = x[reflect_index(j, len)];
        } else {
          v = j < static_cast<std::ptrdiff_t>(len) ? x[static_cast<std::size_t>(j)] : 0.0;
        }
        frame[m] = v * window[m];
      }
      fft.forward(frame.data(), spec.data());
      for (std::size_t k = 0; k < F; ++k)
        out.bins(k, static_cast<std::size_t>(t)) = spec[k];
    }
  }
  return out;
}

Signal inverse_stft(const ComplexSpectrogram& cs, int sample_rate) {
  const StftConfig& cfg = cs.config;
  validate(cfg);
  const std::size_t L = cfg.window_len;
  const std::size_t F = cfg.bins();
  const std::size_t T = cs.bins.cols();
  if (cs.bins.rows() != F)
    throw InvalidArgument("spectrogram has " + std::to_string(cs.bins.rows()) +
                          " bins, config implies " + std::to_string(F));
  if (T == 0) throw InvalidArgument("spectrogram has no frames");

  const auto window = make_window(cfg.window, L);

  // Steady-state coverage of the squared synthesis window.
  double min_cover = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < cfg.hop; ++n) {
    double acc = 0.0;
    for (std::size_t m = n; m < L; m += cfg.hop) acc += window[m] * window[m];
    min_cover = std::min(min_cover, acc);
  }
  if (min_cover < 1e-8)
    throw InvalidArgument("window/hop combination cannot be inverted");

  std::size_t length = cs.signal_length;
  if (length == 0) length = cfg.centered ? (T - 1) * cfg.hop : (T - 1) * cfg.hop + L;
  if (cfg.frames(length) != T)
    throw InvalidArgument("signal length inconsistent with frame count");

  const RealFft& fft = plan_for(L);
  Matrix frames(T, L);
  const auto nframes = static_cast<std::ptrdiff_t>(T);
#pragma omp parallel
  {
    std::vector<std::complex<double>> spec(F);
#pragma omp for schedule(static)
    for (std::ptrdiff_t t = 0; t < nframes; ++t) {
      const auto tt = static_cast<std::size_t>(t);
      for (std::size_t k = 0; k < F; ++k) spec[k] = cs.bins(k, tt);
      // A real signal has purely real DC and Nyquist bins.
      spec[0].imag(0.0);
      spec[F - 1].imag(0.0);
      auto row = frames.row(tt);
      fft.backward(spec.data(), row.data());
      for (std::size_t m = 0; m < L; ++m)
        row[m] *= window[m] / static_cast<double>(L);
    }
  }

  const std::size_t padded = (T - 1) * cfg.hop + L;
  std::vector<double> acc(padded, 0.0), norm(padded, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const auto row = frames.row(t);
    const std::size_t start = t * cfg.hop;
    for (std::size_t m = 0; m < L; ++m) {
      acc[start + m] += row[m];
      norm[start + m] += window[m] * window[m];
    }
  }

  const std::size_t offset = cfg.centered ? L / 2 : 0;
  Signal out;
  out.sample_rate = sample_rate;
  out.samples.assign(length, 0.0);
  for (std::size_t i = 0; i < length; ++i) {
    const std::size_t p = i + offset;
    if (p < padded && norm[p] > 1e-8) out.samples[i] = acc[p] / norm[p];
  }
  return out;
}

Matrix magnitudes(const ComplexSpectrogram& cs) {
  Matrix m(cs.bins.rows(), cs.bins.cols());
  for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = std::abs(cs.bins.data()[i]);
  return m;
}

double spectral_convergence(const Matrix& target, const Signal& signal,
                            const StftConfig& cfg) {
  const Matrix got = magnitudes(stft(signal, cfg));
  if (got.rows() != target.rows() || got.cols() != target.cols())
    throw InvalidArgument("spectral convergence: shape mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = target.data()[i] - got.data()[i];
    num += d * d;
    den += target.data()[i] * target.data()[i];
  }
  return den > 0.0 ? std::sqrt(num / den) : 0.0;
}

GriffinLimResult griffin_lim(const Matrix& mags, const StftConfig& cfg,
                             int iters, std::uint64_t seed,
                             std::size_t signal_length, int sample_rate,
                             double momentum) {
  validate(cfg);
  if (iters < 1) throw InvalidArgument("griffin_lim needs at least one iteration");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw InvalidArgument("griffin_lim: momentum must be in [0, 1)");
  if (mags.rows() != cfg.bins())
    throw InvalidArgument("magnitude rows do not match window length");
  for (double v : mags.storage())
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgument("griffin_lim: magnitudes must be finite and >= 0");

  const std::size_t n = mags.size();
  std::vector<double> phase(n);
  Rng rng(seed);
  for (double& p : phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);

  ComplexSpectrogram cs;
  cs.config = cfg;
  cs.signal_length = signal_length;
  cs.bins = BasicMatrix<std::complex<double>>(mags.rows(), mags.cols());

  // Previous projection, for the momentum term.
  std::vector<std::complex<double>> prev(momentum > 0.0 ? n : 0);
  const double push = momentum / (1.0 + momentum);

  GriffinLimResult result;
  for (int it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i)
      cs.bins.data()[i] = std::polar(mags.data()[i], phase[i]);
    result.signal = inverse_stft(cs, sample_rate);
    const ComplexSpectrogram est = stft(result.signal, cfg);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::complex<double> z = est.bins.data()[i];
      if (momentum > 0.0) {
        phase[i] = std::arg(z - push * prev[i]);
        prev[i] = z;
      } else {
        phase[i] = std::arg(z);
      }
      const double d = mags.data()[i] - std::abs(z);
      num += d * d;
      den += mags.data()[i] * mags.data()[i];
    }
    result.spectral_convergence = den > 0.0 ? std::sqrt(num / den) : 0.0;
  }
  return result;
}

}  // namespace audiotex
