#pragma once

// Synthetic signals and small oracles shared by the test programs.

#include <audiotex/audio.hpp>
#include <audiotex/matrix.hpp>
#include <audiotex/random.hpp>
#include <audiotex/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <span>
#include <string>
#include <unistd.h>
#include <vector>

namespace audiotex::testing {

inline Signal sine(double freq, double seconds, double amp = 0.5,
                   int sr = kSampleRate) {
  Signal s;
  s.sample_rate = sr;
  s.samples.resize(static_cast<std::size_t>(std::lround(seconds * sr)));
  for (std::size_t i = 0; i < s.samples.size(); ++i)
    s.samples[i] = amp * std::sin(2.0 * std::numbers::pi * freq *
                                  static_cast<double>(i) / sr);
  return s;
}

inline Signal white_noise(std::size_t n, std::uint64_t seed, double amp = 0.5) {
  Rng rng(seed);
  Signal s;
  s.samples.resize(n);
  for (auto& v : s.samples) v = uniform(rng, -amp, amp);
  return s;
}

/// Linear chirp from f0 to f1 restarted every `period` seconds, with a
/// second harmonic. Strictly periodic, so its texture statistics are
/// stationary.
inline Signal periodic_chirp(double seconds, double period = 0.25,
                             double f0 = 300.0, double f1 = 2400.0,
                             int sr = kSampleRate) {
  Signal s;
  s.sample_rate = sr;
  s.samples.resize(static_cast<std::size_t>(std::lround(seconds * sr)));
  const double rate = (f1 - f0) / period;
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const double t = std::fmod(static_cast<double>(i) / sr, period);
    const double phase = 2.0 * std::numbers::pi * (f0 * t + 0.5 * rate * t * t);
    const double env = std::sin(std::numbers::pi * t / period);
    s.samples[i] = 0.4 * env * (std::sin(phase) + 0.5 * std::sin(2.0 * phase));
  }
  return s;
}

/// Repeating four-note sequence of decaying tones; a stand-in for a
/// "content" clip that differs from the chirp texture.
inline Signal tone_melody(double seconds, int sr = kSampleRate) {
  static constexpr double kNotes[] = {220.0, 277.2, 329.6, 440.0};
  Signal s;
  s.sample_rate = sr;
  s.samples.resize(static_cast<std::size_t>(std::lround(seconds * sr)));
  const double note_len = 0.2;
  for (std::size_t i = 0; i < s.samples.size(); ++i) {
    const double t = static_cast<double>(i) / sr;
    const auto n = static_cast<std::size_t>(t / note_len);
    const double local = t - static_cast<double>(n) * note_len;
    const double f = kNotes[n % std::size(kNotes)];
    s.samples[i] = 0.5 * std::exp(-6.0 * local) *
                   std::sin(2.0 * std::numbers::pi * f * t);
  }
  return s;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols,
                            std::uint64_t seed, double lo = 0.0,
                            double hi = 1.0) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = uniform(rng, lo, hi);
  return m;
}

inline Tensor4 random_tensor(Shape4 shape, std::uint64_t seed, double lo = -1.0,
                             double hi = 1.0) {
  Rng rng(seed);
  Tensor4 t(shape);
  for (double& v : t.flat()) v = uniform(rng, lo, hi);
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double frobenius(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

/// Central differences of f at x, one coordinate at a time.
inline std::vector<double> numeric_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> at, double h) {
  std::vector<double> x(at.begin(), at.end());
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor). The floor keeps entries
/// that are zero in both from dominating.
inline double max_relative_error(std::span<const double> analytic,
                                 std::span<const double> numeric,
                                 double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double scale =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
  }
  return worst;
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("audiotex_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace audiotex::testing
