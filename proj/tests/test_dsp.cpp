#include <doctest.h>

#include "support.hpp"

#include <audiotex/audio.hpp>
#include <audiotex/error.hpp>
#include <audiotex/image.hpp>
#include <audiotex/spectrogram.hpp>
#include <audiotex/stft.hpp>

#include <complex>
#include <cstring>

using namespace audiotex;
using namespace audiotex::testing;

namespace {

// Independent RIFF writer for the decoder tests. `frames` holds interleaved
// samples in [-1, 1].
std::vector<std::uint8_t> make_wav(int channels, int rate, int bits, int format,
                                   const std::vector<double>& frames) {
  std::vector<std::uint8_t> data;
  for (double v : frames) {
    if (format == 3 && bits == 32) {
      float f = static_cast<float>(v);
      std::uint8_t b[4];
      std::memcpy(b, &f, 4);
      data.insert(data.end(), b, b + 4);
    } else if (bits == 8) {
      data.push_back(static_cast<std::uint8_t>(std::lround(v * 127.0) + 128));
    } else {
      const double full = std::ldexp(1.0, bits - 1) - 1.0;
      const auto q = static_cast<std::int64_t>(std::llround(v * full));
      for (int i = 0; i < bits / 8; ++i) data.push_back(static_cast<std::uint8_t>(q >> (8 * i)));
    }
  }
  std::vector<std::uint8_t> out;
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  };
  auto u16 = [&](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  };
  const int block = channels * bits / 8;
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  u32(static_cast<std::uint32_t>(36 + data.size()));
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  u32(16);
  u16(static_cast<std::uint16_t>(format));
  u16(static_cast<std::uint16_t>(channels));
  u32(static_cast<std::uint32_t>(rate));
  u32(static_cast<std::uint32_t>(rate * block));
  u16(static_cast<std::uint16_t>(block));
  u16(static_cast<std::uint16_t>(bits));
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  u32(static_cast<std::uint32_t>(data.size()));
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

std::vector<double> hann(std::size_t L) {
  std::vector<double> w(L);
  for (std::size_t n = 0; n < L; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / L);
  return w;
}

// Direct DFT of one centred, reflect-padded, Hann-windowed frame.
std::vector<std::complex<double>> dft_frame(const std::vector<double>& x, std::size_t t,
                                            std::size_t L, std::size_t hop) {
  const auto w = hann(L);
  const auto len = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> frame(L);
  for (std::size_t m = 0; m < L; ++m) {
    std::ptrdiff_t j = static_cast<std::ptrdiff_t>(t * hop + m) - static_cast<std::ptrdiff_t>(L / 2);
    if (j < 0) j = -j;
    if (j >= len) j = 2 * (len - 1) - j;
    frame[m] = x[static_cast<std::size_t>(j)] * w[m];
  }
  std::vector<std::complex<double>> out(L / 2 + 1);
  for (std::size_t k = 0; k <= L / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t m = 0; m < L; ++m)
      acc += frame[m] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * m) / L);
    out[k] = acc;
  }
  return out;
}

}  // namespace

TEST_SUITE("wav") {
  TEST_CASE("five seconds at 22050 Hz mono gives 110250 samples") {
    const Signal s = decode_wav(make_wav(1, 22050, 16, 1, sine(440.0, 5.0).samples));
    CHECK(s.size() == 110250);
    CHECK(s.sample_rate == 22050);
  }

  TEST_CASE("44100 Hz stereo is averaged and resampled") {
    const Signal left = sine(300.0, 5.0, 0.5, 44100);
    std::vector<double> inter;
    for (double v : left.samples) {
      inter.push_back(v);
      inter.push_back(-0.25);
    }
    const Signal s = decode_wav(make_wav(2, 44100, 16, 1, inter));
    CHECK(s.size() == 110250);
    CHECK(s.sample_rate == 22050);
    // Output sample i sits on input sample 2i.
    for (std::size_t i : {100u, 5000u, 77777u})
      CHECK(s.samples[i] == doctest::Approx((left.samples[2 * i] - 0.25) / 2.0).epsilon(1e-3));
  }

  TEST_CASE("integer and float encodings decode to the same waveform") {
    const std::vector<double> ramp = {0.0, 0.25, -0.5, 0.75, -1.0};
    for (auto [bits, format] : {std::pair{8, 1}, {16, 1}, {24, 1}, {32, 1}, {32, 3}}) {
      CAPTURE(bits);
      const Signal s = decode_wav(make_wav(1, 22050, bits, format, ramp));
      REQUIRE(s.size() == ramp.size());
      const double tol = bits == 8 ? 1.0 / 64 : 1e-4;
      for (std::size_t i = 0; i < ramp.size(); ++i) CHECK(std::abs(s.samples[i] - ramp[i]) < tol);
    }
  }

  TEST_CASE("truncated header is an unreadable file") {
    auto bytes = make_wav(1, 22050, 16, 1, {0.1, 0.2});
    bytes.resize(20);
    CHECK_THROWS_WITH_AS(decode_wav(bytes), doctest::Contains("unreadable file"), IoError);
    CHECK_THROWS_WITH_AS(decode_wav(std::vector<std::uint8_t>{}), doctest::Contains("unreadable file"),
                         IoError);
  }

  TEST_CASE("missing file is an unreadable file") {
    CHECK_THROWS_WITH_AS(load_wav("/nonexistent/x.wav"), doctest::Contains("unreadable file"), IoError);
  }

  TEST_CASE("compressed formats are rejected") {
    auto bytes = make_wav(1, 22050, 16, 1, {0.1, 0.2});
    bytes[20] = 2;  // ADPCM
    CHECK_THROWS_WITH_AS(decode_wav(bytes), doctest::Contains("unsupported encoding"), IoError);
  }

  TEST_CASE("16-bit writer round trip") {
    TempDir dir("wav");
    Signal s = white_noise(1000, 3, 0.9);
    s.samples[0] = 1.7;  // clamped
    save_wav16(dir / "a.wav", s);
    const Signal back = load_wav(dir / "a.wav");
    REQUIRE(back.size() == s.size());
    CHECK(back.samples[0] == doctest::Approx(32767.0 / 32768.0));
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(std::abs(back.samples[i] - s.samples[i]) < 1e-4);
    CHECK(read_bytes(dir / "a.wav").size() == 44 + 2 * s.size());
  }

  TEST_CASE("signal validation") {
    Signal s = sine(100.0, 0.01);
    CHECK_NOTHROW(validate(s));
    s.samples[3] = std::nan("");
    CHECK_THROWS_AS(validate(s), InvalidArgument);
    s = sine(100.0, 0.01);
    s.sample_rate = 0;
    CHECK_THROWS_AS(validate(s), InvalidArgument);
  }

  TEST_CASE("linear resampling length") {
    const std::vector<double> x(1001, 1.0);
    CHECK(resample_linear(x, 44100, 22050).size() == 501);
    CHECK(resample_linear(x, 22050, 22050) == x);
    CHECK(resample_linear(x, 8000, 22050).size() == 2759);
  }
}

TEST_SUITE("stft") {
  TEST_CASE("shape law") {
    StftConfig cfg;
    for (std::size_t len : {1u, 255u, 256u, 1000u, 110250u}) {
      CAPTURE(len);
      const auto cs = stft(white_noise(len, len), cfg);
      CHECK(cs.bins.rows() == 513);
      CHECK(cs.bins.cols() == len / 256 + 1);
    }
    CHECK(stft(sine(440.0, 5.0), cfg).bins.cols() == 431);
  }

  TEST_CASE("zero signal gives zero bins") {
    Signal s;
    s.samples.assign(5000, 0.0);
    for (auto z : stft(s, StftConfig{}).bins.flat()) CHECK(z == std::complex<double>(0.0));
  }

  TEST_CASE("440 Hz peaks at bin 20 and matches a direct DFT") {
    const StftConfig cfg;
    const Signal s = sine(440.0, 1.0);
    const auto cs = stft(s, cfg);
    // The two end frames hold the reflected copy of the sine, whose phase
    // flip moves the peak to bin 19; the DFT check below still covers them.
    for (std::size_t t = 2; t + 2 < cs.bins.cols(); ++t) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < cs.bins.rows(); ++k)
        if (std::abs(cs.bins(k, t)) > std::abs(cs.bins(best, t))) best = k;
      CHECK(best == 20);
    }
    for (std::size_t t : {0u, 1u, 40u, 86u}) {
      const auto ref = dft_frame(s.samples, t, cfg.window_len, cfg.hop);
      double worst = 0.0;
      for (std::size_t k = 0; k < ref.size(); ++k) worst = std::max(worst, std::abs(ref[k] - cs.bins(k, t)));
      CHECK(worst < 1e-9);
    }
  }

  TEST_CASE("empty signal and bad configs are rejected") {
    CHECK_THROWS_AS(stft(Signal{}, StftConfig{}), InvalidArgument);
    StftConfig bad;
    bad.hop = 2048;
    CHECK_THROWS_AS(stft(sine(1.0, 0.1), bad), InvalidArgument);
    bad.hop = 0;
    CHECK_THROWS_AS(stft(sine(1.0, 0.1), bad), InvalidArgument);
  }

  TEST_CASE("round trip on white noise") {
    const StftConfig cfg;
    const Signal x = white_noise(22050, 17);
    const Signal y = inverse_stft(stft(x, cfg));
    REQUIRE(y.size() == x.size());
    double worst = 0.0;
    for (std::size_t i = cfg.window_len; i + cfg.window_len < x.size(); ++i)
      worst = std::max(worst, std::abs(x.samples[i] - y.samples[i]));
    CHECK(worst < 1e-4);
    // Reflect padding makes the edges exact as well.
    CHECK(max_abs_diff(x.samples, y.samples) < 1e-9);
  }

  TEST_CASE("round trip for other window and hop choices") {
    for (auto [L, hop, kind] : {std::tuple{512u, 128u, WindowKind::hann},
                                {256u, 64u, WindowKind::hamming},
                                {128u, 128u, WindowKind::rectangular}}) {
      StftConfig cfg{L, hop, kind, true};
      const Signal x = white_noise(4000, L);
      CHECK(max_abs_diff(x.samples, inverse_stft(stft(x, cfg)).samples) < 1e-9);
    }
  }

  TEST_CASE("zero spectrogram inverts to silence") {
    ComplexSpectrogram cs;
    cs.bins = BasicMatrix<std::complex<double>>(513, 20);
    const Signal y = inverse_stft(cs);
    CHECK(y.size() == 19 * 256);
    for (double v : y.samples) CHECK(v == 0.0);
  }

  TEST_CASE("single frame is reproduced where the window is nonzero") {
    StftConfig cfg{1024, 256, WindowKind::hann, false};
    const Signal x = white_noise(1024, 5);
    const auto cs = stft(x, cfg);
    REQUIRE(cs.bins.cols() == 1);
    const Signal y = inverse_stft(cs);
    REQUIRE(y.size() == 1024);
    CHECK(y.samples[0] == 0.0);  // w[0] = 0 carries no information
    const auto w = hann(1024);
    for (std::size_t i = 1; i < 1024; ++i) {
      if (w[i] * w[i] > 1e-8) CHECK(y.samples[i] == doctest::Approx(x.samples[i]).epsilon(1e-6));
      else CHECK(y.samples[i] == 0.0);
    }
  }

  TEST_CASE("hop that leaves gaps cannot be inverted") {
    ComplexSpectrogram cs;
    cs.config = {1024, 1024, WindowKind::hann, true};
    cs.bins = BasicMatrix<std::complex<double>>(513, 4);
    CHECK_THROWS_AS(inverse_stft(cs), InvalidArgument);
  }
}

TEST_SUITE("log scaling") {
  TEST_CASE("peak magnitude e - 1 gives scale 1") {
    Matrix m(3, 2);
    m(1, 1) = std::exp(1.0) - 1.0;
    m(0, 0) = 0.5;
    const Spectrogram s = to_spectrogram(m, StftConfig{});
    CHECK(s.scale_max == doctest::Approx(1.0));
    CHECK(s.pixels(1, 1) == doctest::Approx(1.0));
    CHECK(s.pixels(0, 0) == doctest::Approx(std::log1p(0.5)));
  }

  TEST_CASE("all-zero input") {
    const Matrix z(4, 4);
    CHECK_THROWS_AS(to_spectrogram(z, StftConfig{}), InvalidArgument);
    const Spectrogram s = to_spectrogram(z, StftConfig{}, 1.0);
    for (double v : s.pixels.flat()) CHECK(v == 0.0);
  }

  TEST_CASE("round trip within 1e-6 relative") {
    const Matrix m = random_matrix(50, 30, 9, 0.0, 40.0);
    for (std::optional<double> shared : {std::optional<double>{}, std::optional<double>{7.5}}) {
      const Matrix back = from_spectrogram(to_spectrogram(m, StftConfig{}, shared));
      for (std::size_t i = 0; i < m.size(); ++i)
        CHECK(std::abs(back.data()[i] - m.data()[i]) <= 1e-6 * std::max(1.0, m.data()[i]));
    }
  }

  TEST_CASE("pixels to magnitudes") {
    Spectrogram s;
    s.pixels = Matrix(1, 3);
    s.pixels(0, 0) = 0.0;
    s.pixels(0, 1) = 1.0;
    s.pixels(0, 2) = -0.1;
    s.scale_max = 1.0;
    const Matrix m = from_spectrogram(s);
    CHECK(m(0, 0) == 0.0);
    CHECK(m(0, 1) == doctest::Approx(std::exp(1.0) - 1.0));
    CHECK(m(0, 2) == 0.0);
  }
}

TEST_SUITE("griffin-lim") {
  TEST_CASE("zero magnitudes give silence") {
    const auto r = griffin_lim(Matrix(513, 10), StftConfig{}, 3, 1);
    for (double v : r.signal.samples) CHECK(v == 0.0);
    CHECK(r.spectral_convergence == 0.0);
  }

  TEST_CASE("440 Hz sinusoid converges and improves with iterations") {
    const StftConfig cfg;
    const Signal tone = sine(440.0, 2.0);
    const Matrix mags = magnitudes(stft(tone, cfg));
    const auto one = griffin_lim(mags, cfg, 1, 4, tone.size());
    const auto hundred = griffin_lim(mags, cfg, 100, 4, tone.size());
    CHECK(hundred.spectral_convergence < 0.1);
    CHECK(hundred.spectral_convergence <= one.spectral_convergence);
    CHECK(hundred.signal.size() == tone.size());
    CHECK(hundred.spectral_convergence ==
          doctest::Approx(spectral_convergence(mags, hundred.signal, cfg)).epsilon(1e-9));
  }

  TEST_CASE("momentum reaches the 0.1 bound for every seed tried") {
    const StftConfig cfg;
    const Signal tone = sine(440.0, 2.0);
    const Matrix mags = magnitudes(stft(tone, cfg));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      CAPTURE(seed);
      CHECK(griffin_lim(mags, cfg, 100, seed, tone.size()).spectral_convergence < 0.1);
    }
  }

  TEST_CASE("zero momentum is the plain alternating projection") {
    const StftConfig cfg{256, 64, WindowKind::hann, true};
    const Signal x = periodic_chirp(0.2);
    const Matrix mags = magnitudes(stft(x, cfg));
    Rng rng(3);
    ComplexSpectrogram cs;
    cs.config = cfg;
    cs.bins = BasicMatrix<std::complex<double>>(mags.rows(), mags.cols());
    std::vector<double> phase(mags.size());
    for (double& p : phase) p = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    Signal y;
    for (int it = 0; it < 4; ++it) {
      for (std::size_t i = 0; i < mags.size(); ++i) cs.bins.data()[i] = std::polar(mags.data()[i], phase[i]);
      y = inverse_stft(cs);
      const auto est = stft(y, cfg);
      for (std::size_t i = 0; i < mags.size(); ++i) phase[i] = std::arg(est.bins.data()[i]);
    }
    CHECK(griffin_lim(mags, cfg, 4, 3, 0, kSampleRate, 0.0).signal.samples == y.samples);
  }

  TEST_CASE("spectral convergence does not grow per iteration on average") {
    const StftConfig cfg{256, 64, WindowKind::hann, true};
    constexpr int kIters = 12;
    for (double momentum : {0.0, kGriffinLimMomentum}) {
      CAPTURE(momentum);
      std::vector<double> mean(kIters, 0.0);
      for (int k = 0; k < 10; ++k) {
        Signal s = k % 2 == 0 ? periodic_chirp(0.3, 0.1 + 0.02 * k) : white_noise(6615, k);
        if (k == 3) s = tone_melody(0.3);
        const Matrix mags = magnitudes(stft(s, cfg));
        for (int it = 1; it <= kIters; ++it)
          mean[static_cast<std::size_t>(it - 1)] +=
              griffin_lim(mags, cfg, it, 7, 0, kSampleRate, momentum).spectral_convergence / 10.0;
      }
      for (std::size_t i = 1; i < kIters; ++i) CHECK(mean[i] <= mean[i - 1]);
    }
  }

  TEST_CASE("seeded and deterministic") {
    const StftConfig cfg{256, 64, WindowKind::hann, true};
    const Matrix mags = magnitudes(stft(white_noise(3000, 2), cfg));
    CHECK(griffin_lim(mags, cfg, 5, 11).signal.samples == griffin_lim(mags, cfg, 5, 11).signal.samples);
    CHECK(griffin_lim(mags, cfg, 5, 11).signal.samples != griffin_lim(mags, cfg, 5, 12).signal.samples);
  }

  TEST_CASE("invalid input") {
    Matrix m(513, 4);
    m(2, 2) = -1.0;
    CHECK_THROWS_AS(griffin_lim(m, StftConfig{}, 10, 1), InvalidArgument);
    CHECK_THROWS_AS(griffin_lim(Matrix(513, 4), StftConfig{}, 0, 1), InvalidArgument);
    CHECK_THROWS_AS(griffin_lim(Matrix(100, 4), StftConfig{}, 1, 1), InvalidArgument);
    CHECK_THROWS_AS(griffin_lim(Matrix(513, 4), StftConfig{}, 1, 1, 0, kSampleRate, 1.0), InvalidArgument);
    CHECK_THROWS_AS(griffin_lim(Matrix(513, 4), StftConfig{}, 1, 1, 0, kSampleRate, -0.1), InvalidArgument);
  }
}

TEST_SUITE("cqt") {
  TEST_CASE("bin count") {
    CHECK(cqt_bin_count(65.4, 24, 22050) == 177);
    const auto k = build_cqt_kernel(65.4, 24, 513, 22050);
    CHECK(k->cqt_bins() == 177);
    CHECK(k->center_frequency(0) == doctest::Approx(65.4));
    CHECK(k->center_frequency(24) == doctest::Approx(130.8));
    CHECK(k->center_frequency(176) < 11025.0);
  }

  TEST_CASE("rows are weighted averages") {
    const auto k = build_cqt_kernel(65.4, 24, 513, 22050);
    const Matrix fwd = k->dense_forward();
    for (std::size_t r = 0; r < fwd.rows(); ++r) {
      double sum = 0.0;
      for (double v : fwd.row(r)) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }
    // The inverse also averages: every linear bin is covered.
    const Matrix inv = k->dense_inverse();
    for (std::size_t r = 0; r < inv.rows(); ++r) {
      double sum = 0.0;
      for (double v : inv.row(r)) sum += v;
      CHECK(std::abs(sum - 1.0) < 1e-9);
    }
  }

  TEST_CASE("dense and sparse application agree") {
    const auto k = build_cqt_kernel(100.0, 12, 257, 22050);
    const Matrix x = random_matrix(257, 6, 3);
    const Matrix fwd = k->dense_forward();
    const Matrix y = k->apply_forward(x);
    for (std::size_t r = 0; r < y.rows(); ++r)
      for (std::size_t c = 0; c < y.cols(); ++c) {
        double s = 0.0;
        for (std::size_t j = 0; j < x.rows(); ++j) s += fwd(r, j) * x(j, c);
        CHECK(std::abs(s - y(r, c)) < 1e-12);
      }
  }

  TEST_CASE("f_min above Nyquist") {
    CHECK_THROWS_AS(build_cqt_kernel(12000.0, 24, 513, 22050), InvalidArgument);
    CHECK_THROWS_AS(build_cqt_kernel(0.0, 24, 513, 22050), InvalidArgument);
  }

  TEST_CASE("flat spectrum round trip") {
    const auto k = build_cqt_kernel(65.4, 24, 513, 22050);
    Matrix ones(513, 8);
    for (double& v : ones.flat()) v = 1.0;
    const Matrix c = k->apply_forward(ones);
    for (double v : c.flat()) CHECK(v == doctest::Approx(1.0));
    const Matrix back = k->apply_inverse(c);
    std::vector<double> d(back.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = back.data()[i] - 1.0;
    CHECK(frobenius(d) / frobenius(ones.flat()) < 0.05);
  }

  TEST_CASE("spectrogram conversion") {
    const auto k = build_cqt_kernel(65.4, 24, 513, 22050);
    Spectrogram s = to_spectrogram(stft(white_noise(110250, 1), StftConfig{}));
    REQUIRE(s.frames() == 431);
    const Spectrogram c = cqt_forward(s, k);
    CHECK(c.bins() == 177);
    CHECK(c.frames() == 431);
    CHECK(c.scaling == FrequencyScale::cqt);
    CHECK(c.scale_max == s.scale_max);
    CHECK_THROWS_AS(cqt_forward(c, k), InvalidArgument);
    CHECK_THROWS_AS(cqt_inverse(s, k), InvalidArgument);
    CHECK_THROWS_AS(from_spectrogram(c), InvalidArgument);
    const Spectrogram back = cqt_inverse(c, k);
    CHECK(back.bins() == 513);
    CHECK(back.scaling == FrequencyScale::linear_stft);
    CHECK(back.scale_max == s.scale_max);

    Spectrogram wrong = s;
    wrong.pixels = Matrix(100, 4);
    CHECK_THROWS_AS(cqt_forward(wrong, k), InvalidArgument);
  }

  TEST_CASE("zero maps to zero both ways") {
    const auto k = build_cqt_kernel(65.4, 24, 513, 22050);
    {
      const auto held = k->apply_forward(Matrix(513, 3));
      for (double v : held.flat()) CHECK(v == 0.0);
    }
    {
      const auto held = k->apply_inverse(Matrix(177, 3));
      for (double v : held.flat()) CHECK(v == 0.0);
    }
  }
}

TEST_SUITE("png") {
  TEST_CASE("bin 0 is the bottom row and values are rounded") {
    Matrix m(3, 2);
    m(0, 0) = 1.0;   // lowest bin, first frame
    m(2, 1) = 0.5;   // highest bin, second frame
    m(1, 0) = -0.2;
    m(1, 1) = 1.3;
    const GrayImage img = spectrogram_image(m);
    CHECK(img.width == 2);
    CHECK(img.height == 3);
    CHECK(img.pixels[2 * 2 + 0] == 255);
    CHECK(img.pixels[0 * 2 + 1] == 128);
    CHECK(img.pixels[1 * 2 + 0] == 0);
    CHECK(img.pixels[1 * 2 + 1] == 255);
  }

  TEST_CASE("file round trip") {
    TempDir dir("png");
    const GrayImage img = spectrogram_image(random_matrix(40, 30, 2));
    write_png(dir / "a.png", img);
    const GrayImage back = read_png(dir / "a.png");
    CHECK(back.width == 30);
    CHECK(back.height == 40);
    CHECK(back.pixels == img.pixels);
    CHECK_THROWS_AS(read_png(dir / "missing.png"), IoError);
  }
}
