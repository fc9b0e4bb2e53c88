#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "audiotex/audio.hpp"
#include "audiotex/matrix.hpp"

namespace audiotex {

enum class WindowKind { hann, hamming, rectangular };

struct StftConfig {
  std::size_t window_len = 1024;
  std::size_t hop = 256;
  WindowKind window = WindowKind::hann;
  /// Frames are centred on t*hop with reflect padding of window_len/2.
  bool centered = true;

  std::size_t bins() const { return window_len / 2 + 1; }
  /// Number of frames produced for a signal of `len` samples.
  std::size_t frames(std::size_t len) const;
  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

void validate(const StftConfig& cfg);

/// Periodic window of length cfg.window_len.
std::vector<double> make_window(WindowKind kind, std::size_t len);

/// Complex STFT bins, shape (window_len/2 + 1, frames).
struct ComplexSpectrogram {
  BasicMatrix<std::complex<double>> bins;
  StftConfig config;
  /// Length of the analysed signal; 0 when unknown, in which case inversion
  /// yields (frames - 1) * hop samples for centred transforms.
  std::size_t signal_length = 0;
};

ComplexSpectrogram stft(const Signal& signal, const StftConfig& cfg);

/// Weighted overlap-add inverse. Output samples are divided by the summed
/// squared synthesis window; throws InvalidArgument if the configuration
/// leaves any steady-state sample with a normaliser below 1e-8.
Signal inverse_stft(const ComplexSpectrogram& cs,
                    int sample_rate = kSampleRate);

/// Elementwise |X|.
Matrix magnitudes(const ComplexSpectrogram& cs);

struct GriffinLimResult {
  Signal signal;
  /// ||M - |STFT(signal)|||_F / ||M||_F, 0 for an all-zero target.
  double spectral_convergence = 0.0;
};

inline constexpr double kGriffinLimMomentum = 0.99;

/// Iterative phase estimation from a magnitude matrix (bins x frames).
/// `signal_length` of 0 means (frames - 1) * hop for centred configs.
/// With momentum m > 0 each new phase is taken from the projection minus
/// m / (1 + m) times the previous projection (the "fast" variant); m = 0
/// is the plain alternating projection.
GriffinLimResult griffin_lim(const Matrix& magnitudes, const StftConfig& cfg,
                             int iters, std::uint64_t seed,
                             std::size_t signal_length = 0,
                             int sample_rate = kSampleRate,
                             double momentum = kGriffinLimMomentum);

double spectral_convergence(const Matrix& target, const Signal& signal,
                            const StftConfig& cfg);

}  // namespace audiotex
