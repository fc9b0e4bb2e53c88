#include "audiotex/spectrogram.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "audiotex/error.hpp"

namespace audiotex {

std::size_t cqt_bin_count(double f_min, int bins_per_octave, int sample_rate) {
  if (!(f_min > 0.0)) throw InvalidArgument("CQT f_min must be positive");
  if (bins_per_octave < 1) throw InvalidArgument("CQT bins per octave must be >= 1");
  if (sample_rate <= 0) throw InvalidArgument("sample rate must be positive");
  const double nyquist = sample_rate / 2.0;
  if (f_min >= nyquist)
    throw InvalidArgument("CQT f_min " + std::to_string(f_min) +
                          " Hz is not below Nyquist");
  const double count = std::floor(bins_per_octave * std::log2(nyquist / f_min));
  if (count < 1.0) throw InvalidArgument("CQT range holds no bins");
  return static_cast<std::size_t>(count);
}

CqtKernel::CqtKernel(double f_min, int bins_per_octave, std::size_t linear_bins,
                     int sample_rate)
    : f_min_(f_min),
      bins_per_octave_(bins_per_octave),
      linear_bins_(linear_bins),
      sample_rate_(sample_rate) {
  const std::size_t n_cqt = cqt_bin_count(f_min, bins_per_octave, sample_rate);
  if (linear_bins < 2) throw InvalidArgument("CQT needs at least 2 linear bins");
  const double bin_hz = sample_rate / (2.0 * static_cast<double>(linear_bins - 1));
  const double ratio = std::exp2(1.0 / bins_per_octave) - 1.0;
  const auto last = static_cast<double>(linear_bins - 1);

  forward_.resize(n_cqt);
  for (std::size_t k = 0; k < n_cqt; ++k) {
    const double fc = center_frequency(k);
    const double centre = fc / bin_hz;
    const double half = std::max(1.0, fc * ratio / bin_hz);
    const double lo = std::max(0.0, std::ceil(centre - half));
    const double hi = std::min(last, std::floor(centre + half));
    Row& row = forward_[k];
    row.first = static_cast<std::size_t>(lo);
    double sum = 0.0;
    for (double j = lo; j <= hi; j += 1.0) {
      const double w = std::max(0.0, 1.0 - std::abs(j - centre) / half);
      row.weights.push_back(w);
      sum += w;
    }
    if (!(sum > 0.0)) throw InvalidArgument("CQT bin " + std::to_string(k) + " is empty");
    for (double& w : row.weights) w /= sum;
  }

  // Column sums of the forward map, then the normalised transpose.
  std::vector<double> cover(linear_bins, 0.0);
  for (const Row& row : forward_)
    for (std::size_t i = 0; i < row.weights.size(); ++i)
      cover[row.first + i] += row.weights[i];

  inverse_.resize(linear_bins);
  for (std::size_t j = 0; j < linear_bins; ++j) {
    Row& inv = inverse_[j];
    if (cover[j] > 0.0) {
      std::size_t first = n_cqt, end = 0;
      for (std::size_t k = 0; k < n_cqt; ++k) {
        const Row& row = forward_[k];
        if (j >= row.first && j < row.first + row.weights.size() &&
            row.weights[j - row.first] > 0.0) {
          first = std::min(first, k);
          end = k + 1;
        }
      }
      inv.first = first;
      for (std::size_t k = first; k < end; ++k) {
        const Row& row = forward_[k];
        const bool inside = j >= row.first && j < row.first + row.weights.size();
        inv.weights.push_back(inside ? row.weights[j - row.first] / cover[j] : 0.0);
      }
    } else {
      // Uncovered linear bin: copy the nearest constant-Q bin.
      const double f = static_cast<double>(j) * bin_hz;
      double k = f > 0.0 ? std::round(bins_per_octave * std::log2(f / f_min)) : 0.0;
      k = std::clamp(k, 0.0, static_cast<double>(n_cqt - 1));
      inv.first = static_cast<std::size_t>(k);
      inv.weights = {1.0};
    }
  }
}

double CqtKernel::center_frequency(std::size_t k) const {
  return f_min_ * std::exp2(static_cast<double>(k) / bins_per_octave_);
}

namespace {

Matrix apply_rows(const std::vector<CqtKernel::Row>& rows, const Matrix& in,
                  std::size_t expected_rows, const char* what) {
  if (in.rows() != expected_rows)
    throw InvalidArgument(std::string(what) + ": expected " +
                          std::to_string(expected_rows) + " rows, got " +
                          std::to_string(in.rows()));
  Matrix out(rows.size(), in.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto dst = out.row(r);
    const auto& row = rows[r];
    for (std::size_t i = 0; i < row.weights.size(); ++i) {
      const double w = row.weights[i];
      const auto src = in.row(row.first + i);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w * src[c];
    }
  }
  return out;
}

Matrix dense(const std::vector<CqtKernel::Row>& rows, std::size_t cols) {
  Matrix m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < rows[r].weights.size(); ++i)
      m(r, rows[r].first + i) = rows[r].weights[i];
  return m;
}

}  // namespace

Matrix CqtKernel::apply_forward(const Matrix& linear) const {
  return apply_rows(forward_, linear, linear_bins_, "cqt forward");
}

Matrix CqtKernel::apply_inverse(const Matrix& cqt) const {
  return apply_rows(inverse_, cqt, forward_.size(), "cqt inverse");
}

Matrix CqtKernel::dense_forward() const { return dense(forward_, linear_bins_); }
Matrix CqtKernel::dense_inverse() const { return dense(inverse_, forward_.size()); }

std::shared_ptr<const CqtKernel> build_cqt_kernel(double f_min,
                                                  int bins_per_octave,
                                                  std::size_t linear_bins,
                                                  int sample_rate) {
  return std::make_shared<const CqtKernel>(f_min, bins_per_octave, linear_bins,
                                           sample_rate);
}

double log_magnitude_max(const Matrix& magnitudes) {
  double m = 0.0;
  for (double v : magnitudes.storage()) m = std::max(m, std::log1p(v));
  return m;
}

Spectrogram to_spectrogram(const Matrix& mags, const StftConfig& cfg,
                           std::optional<double> shared_scale) {
  for (double v : mags.storage())
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidArgument("magnitudes must be finite and non-negative");
  const double scale = shared_scale ? *shared_scale : log_magnitude_max(mags);
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw InvalidArgument("spectrogram scale must be positive (all-zero input?)");

  Spectrogram out;
  out.config = cfg;
  out.scale_max = scale;
  out.pixels = Matrix(mags.rows(), mags.cols());
  for (std::size_t i = 0; i < mags.size(); ++i)
    out.pixels.data()[i] = std::log1p(mags.data()[i]) / scale;
  return out;
}

Spectrogram to_spectrogram(const ComplexSpectrogram& cs,
                           std::optional<double> shared_scale) {
  Spectrogram out = to_spectrogram(magnitudes(cs), cs.config, shared_scale);
  out.signal_length = cs.signal_length;
  return out;
}

Matrix from_spectrogram(const Spectrogram& spec) {
  if (spec.scaling != FrequencyScale::linear_stft)
    throw InvalidArgument("from_spectrogram needs a linear-frequency spectrogram");
  Matrix m(spec.pixels.rows(), spec.pixels.cols());
  for (std::size_t i = 0; i < m.size(); ++i)
    m.data()[i] = std::max(0.0, std::expm1(spec.pixels.data()[i] * spec.scale_max));
  return m;
}

Spectrogram cqt_forward(const Spectrogram& spec,
                        std::shared_ptr<const CqtKernel> kernel) {
  if (!kernel) throw InvalidArgument("cqt_forward: no kernel");
  if (spec.scaling != FrequencyScale::linear_stft)
    throw InvalidArgument("cqt_forward needs a linear-frequency spectrogram");
  Spectrogram out = spec;
  out.pixels = kernel->apply_forward(spec.pixels);
  out.scaling = FrequencyScale::cqt;
  out.cqt = std::move(kernel);
  return out;
}

Spectrogram cqt_inverse(const Spectrogram& spec,
                        std::shared_ptr<const CqtKernel> kernel) {
  if (!kernel) throw InvalidArgument("cqt_inverse: no kernel");
  if (spec.scaling != FrequencyScale::cqt)
    throw InvalidArgument("cqt_inverse needs a constant-Q spectrogram");
  Spectrogram out = spec;
  out.pixels = kernel->apply_inverse(spec.pixels);
  out.scaling = FrequencyScale::linear_stft;
  out.cqt = std::move(kernel);
  return out;
}

}  // namespace audiotex
