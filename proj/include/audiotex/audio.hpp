#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace audiotex {

inline constexpr int kSampleRate = 22050;

/// Mono audio at a fixed sample rate.
struct Signal {
  std::vector<double> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

/// Throws InvalidArgument unless the rate is positive and every sample is
/// finite.
void validate(const Signal& s);

/// Reads a PCM (8/16/24/32-bit integer) or IEEE float WAV file, averages the
/// channels to mono and resamples to `target_rate`.
Signal load_wav(const std::filesystem::path& path,
                int target_rate = kSampleRate);

/// Decodes WAV bytes already held in memory.
Signal decode_wav(std::span<const std::uint8_t> bytes,
                  int target_rate = kSampleRate);

/// 16-bit little-endian mono PCM. Samples are clamped to [-1, 1] and
/// rounded to the nearest integer step of 1/32767.
std::vector<std::uint8_t> encode_wav16(const Signal& s);
void save_wav16(const std::filesystem::path& path, const Signal& s);

/// Linear-interpolation resampling. Output length is
/// round(len * to_rate / from_rate).
std::vector<double> resample_linear(std::span<const double> in, int from_rate,
                                    int to_rate);

}  // namespace audiotex
