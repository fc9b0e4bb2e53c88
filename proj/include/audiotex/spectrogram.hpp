#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <vector>

#include "audiotex/matrix.hpp"
#include "audiotex/stft.hpp"

namespace audiotex {

enum class FrequencyScale { linear_stft, cqt };

/// Maps linear STFT bins to geometrically spaced bins and back.
///
/// Row k of the forward map is a triangle centred on
/// f_min * 2^(k / bins_per_octave) and normalised to sum to one, so every
/// constant-Q bin is a weighted average of the linear bins under it. The
/// inverse is the column-normalised transpose: each linear bin becomes the
/// weighted average of the constant-Q bins that cover it (or a copy of the
/// nearest one when none does).
class CqtKernel {
 public:
  /// Sparse row: nonzero weights for columns [first, first + weights.size()).
  struct Row {
    std::size_t first = 0;
    std::vector<double> weights;
  };

  CqtKernel(double f_min, int bins_per_octave, std::size_t linear_bins,
            int sample_rate);

  std::size_t cqt_bins() const { return forward_.size(); }
  std::size_t linear_bins() const { return linear_bins_; }
  double f_min() const { return f_min_; }
  int bins_per_octave() const { return bins_per_octave_; }
  int sample_rate() const { return sample_rate_; }
  double center_frequency(std::size_t k) const;

  const std::vector<Row>& forward_rows() const { return forward_; }
  const std::vector<Row>& inverse_rows() const { return inverse_; }

  /// (cqt_bins x cols) from (linear_bins x cols).
  Matrix apply_forward(const Matrix& linear) const;
  /// (linear_bins x cols) from (cqt_bins x cols).
  Matrix apply_inverse(const Matrix& cqt) const;

  Matrix dense_forward() const;
  Matrix dense_inverse() const;

 private:
  double f_min_;
  int bins_per_octave_;
  std::size_t linear_bins_;
  int sample_rate_;
  std::vector<Row> forward_;
  std::vector<Row> inverse_;
};

std::shared_ptr<const CqtKernel> build_cqt_kernel(double f_min,
                                                  int bins_per_octave,
                                                  std::size_t linear_bins,
                                                  int sample_rate);

/// Number of constant-Q bins that fit below Nyquist.
std::size_t cqt_bin_count(double f_min, int bins_per_octave, int sample_rate);

/// Normalised log-magnitude image in [0, 1] (nominally).
struct Spectrogram {
  Matrix pixels;
  double scale_max = 1.0;
  FrequencyScale scaling = FrequencyScale::linear_stft;
  StftConfig config;
  std::size_t signal_length = 0;
  std::shared_ptr<const CqtKernel> cqt;

  std::size_t bins() const { return pixels.rows(); }
  std::size_t frames() const { return pixels.cols(); }
};

/// log(1 + |X|) / scale_max. scale_max is `shared_scale` when given,
/// otherwise the image maximum.
Spectrogram to_spectrogram(const ComplexSpectrogram& cs,
                           std::optional<double> shared_scale = std::nullopt);

/// Same normalisation applied to an already computed magnitude matrix.
Spectrogram to_spectrogram(const Matrix& magnitudes, const StftConfig& cfg,
                           std::optional<double> shared_scale = std::nullopt);

/// max log(1 + |X|) over the matrix.
double log_magnitude_max(const Matrix& magnitudes);

/// exp(pixel * scale_max) - 1, clamped at zero. Requires linear scaling.
Matrix from_spectrogram(const Spectrogram& spec);

Spectrogram cqt_forward(const Spectrogram& spec,
                        std::shared_ptr<const CqtKernel> kernel);
Spectrogram cqt_inverse(const Spectrogram& spec,
                        std::shared_ptr<const CqtKernel> kernel);

}  // namespace audiotex
