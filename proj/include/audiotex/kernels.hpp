#pragma once

// Compute kernels behind the network and the style loss.
//
// The functions in `audiotex::kernels` unfold patches into columns and
// multiply with Eigen, one OpenMP task per fixed block of 256 channels. The
// blocking does not depend on the thread count, so neither do the results.
// The `reference` namespace holds plain serial loop nests with the same
// contracts; tests compare the two and the benchmark target times them.

#include <audiotex/matrix.hpp>
#include <audiotex/tensor.hpp>

#include <cstddef>
#include <span>

namespace audiotex::kernels {

/// Convolution weights laid out (out, in, kh, kw).
struct ConvWeights {
  std::span<const float> weights;
  std::span<const float> bias;  // empty means zero bias
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kh = 1;
  std::size_t kw = 1;
};

/// Stride-1 cross-correlation with zero "same" padding ((k - 1) / 2 on each
/// side; kernels are odd).
Tensor4 conv2d_same(const Tensor4& input, const ConvWeights& w);

/// Gradient of a scalar with respect to the convolution input, given its
/// gradient with respect to the output.
Tensor4 conv2d_same_input_grad(const Tensor4& grad_out, const ConvWeights& w);

/// Unnormalised Gram matrix: sum over batch and positions of
/// f[b,i,h,w] * f[b,j,h,w]. Exactly symmetric.
Matrix gram(const Tensor4& features);

/// out[b,c,:,:] = sum_j coeff(j, c) * in[b,j,:,:].
Tensor4 channel_mix(const Tensor4& features, const Matrix& coeff);

namespace reference {

Tensor4 conv2d_same(const Tensor4& input, const ConvWeights& w);
Tensor4 conv2d_same_input_grad(const Tensor4& grad_out, const ConvWeights& w);
Matrix gram(const Tensor4& features);
Tensor4 channel_mix(const Tensor4& features, const Matrix& coeff);

}  // namespace reference

}  // namespace audiotex::kernels
