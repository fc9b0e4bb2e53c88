#include "audiotex/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "audiotex/error.hpp"

namespace audiotex {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

double decode_sample(const std::uint8_t* p, std::uint16_t format,
                     std::uint16_t bits) {
  if (format == kFormatFloat) {
    if (bits == 32) {
      std::uint32_t u = read_u32(p);
      float f;
      std::memcpy(&f, &u, sizeof f);
      return f;
    }
    std::uint64_t u = read_u32(p) | (static_cast<std::uint64_t>(read_u32(p + 4)) << 32);
    double d;
    std::memcpy(&d, &u, sizeof d);
    return d;
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(read_u16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v -= 0x1000000;
      return v / 8388608.0;
    }
    default:
      return static_cast<std::int32_t>(read_u32(p)) / 2147483648.0;
  }
}

}  // namespace

void validate(const Signal& s) {
  if (s.sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  for (double v : s.samples)
    if (!std::isfinite(v)) throw InvalidArgument("signal contains non-finite samples");
}

std::vector<double> resample_linear(std::span<const double> in, int from_rate,
                                    int to_rate) {
  if (from_rate <= 0 || to_rate <= 0)
    throw InvalidArgument("sample rates must be positive");
  if (from_rate == to_rate || in.empty()) return {in.begin(), in.end()};
  const auto out_len = static_cast<std::size_t>(std::llround(
      static_cast<double>(in.size()) * to_rate / from_rate));
  std::vector<double> out(out_len);
  const double step = static_cast<double>(from_rate) / to_rate;
  for (std::size_t i = 0; i < out_len; ++i) {
    const double pos = i * step;
    const auto j = static_cast<std::size_t>(pos);
    if (j + 1 >= in.size()) {
      out[i] = in.back();
      continue;
    }
    const double frac = pos - static_cast<double>(j);
    out[i] = in[j] + frac * (in[j + 1] - in[j]);
  }
  return out;
}

Signal decode_wav(std::span<const std::uint8_t> bytes, int target_rate) {
  const auto unreadable = [](const std::string& why) {
    return IoError("unreadable file: " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw unreadable("missing RIFF/WAVE header");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || available < 16) throw unreadable("truncated fmt chunk");
      const std::uint8_t* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40 || available < 40) throw unreadable("truncated fmt chunk");
        format = read_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, available);
      break;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw unreadable("no fmt chunk");
  if (data == nullptr) throw unreadable("no data chunk");
  if (channels == 0 || rate == 0) throw unreadable("invalid fmt chunk");

  const bool pcm_ok = format == kFormatPcm &&
                      (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!pcm_ok && !float_ok)
    throw IoError("unsupported encoding: format " + std::to_string(format) +
                  ", " + std::to_string(bits) + " bits");
  const std::size_t sample_bytes = bits / 8;
  if (block_align != sample_bytes * channels)
    throw IoError("unsupported encoding: block alignment " +
                  std::to_string(block_align));

  const std::size_t frames = data_size / block_align;
  std::vector<double> mono(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c)
      acc += decode_sample(data + i * block_align + c * sample_bytes, format, bits);
    mono[i] = acc / channels;
  }

  Signal out;
  out.sample_rate = target_rate;
  out.samples = resample_linear(mono, static_cast<int>(rate), target_rate);
  validate(out);
  return out;
}

Signal load_wav(const std::filesystem::path& path, int target_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("unreadable file: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, target_rate);
  } catch (const IoError& e) {
    throw IoError(std::string(e.what()) + " (" + path.string() + ")");
  }
}

std::vector<std::uint8_t> encode_wav16(const Signal& s) {
  if (s.sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(s.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(s.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(s.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (double v : s.samples) {
    const double c = std::isfinite(v) ? std::clamp(v, -1.0, 1.0) : 0.0;
    const auto q = static_cast<std::int16_t>(std::lround(c * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

void save_wav16(const std::filesystem::path& path, const Signal& s) {
  const auto bytes = encode_wav16(s);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace audiotex
