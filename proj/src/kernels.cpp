#include "audiotex/kernels.hpp"

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <string>

#include "audiotex/error.hpp"

namespace audiotex::kernels {

namespace {

void check_conv(const ConvWeights& w) {
  if (w.kh % 2 == 0 || w.kw % 2 == 0)
    throw InvalidArgument("convolution kernels must have odd extents");
  if (w.weights.size() != w.out_channels * w.in_channels * w.kh * w.kw)
    throw InvalidArgument("convolution weight count does not match its shape");
  if (!w.bias.empty() && w.bias.size() != w.out_channels)
    throw InvalidArgument("convolution bias count does not match out channels");
}

void check_forward(const Tensor4& input, const ConvWeights& w) {
  check_conv(w);
  if (input.shape().c != w.in_channels)
    throw InvalidArgument("input has " + std::to_string(input.shape().c) +
                          " channels, convolution expects " +
                          std::to_string(w.in_channels));
}

void check_backward(const Tensor4& grad_out, const ConvWeights& w) {
  check_conv(w);
  if (grad_out.shape().c != w.out_channels)
    throw InvalidArgument("gradient has " + std::to_string(grad_out.shape().c) +
                          " channels, convolution produces " +
                          std::to_string(w.out_channels));
}

void check_mix(const Tensor4& f, const Matrix& coeff) {
  if (coeff.rows() != f.shape().c || coeff.cols() != f.shape().c)
    throw InvalidArgument("channel mix matrix must be C x C");
}

// Valid range of output positions x for which x + offset lies in [0, n).
struct Span {
  std::size_t begin;
  std::size_t end;
};

Span valid(std::size_t n, std::ptrdiff_t offset) {
  const auto sn = static_cast<std::ptrdiff_t>(n);
  const std::ptrdiff_t b = std::max<std::ptrdiff_t>(0, -offset);
  const std::ptrdiff_t e = std::min<std::ptrdiff_t>(sn, sn - offset);
  if (e <= b) return {0, 0};
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(e)};
}

}  // namespace

namespace {

// Channel block handled by one task. Fixed so that results do not depend on
// the number of threads.
constexpr std::size_t kBlock = 256;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMap = Eigen::Map<RowMat>;
using ConstRowMap = Eigen::Map<const RowMat>;

std::size_t blocks(std::size_t n) { return (n + kBlock - 1) / kBlock; }

// Unfolds batch item b into (in * kh * kw) x (H * W) patch columns.
RowMat im2col(const Tensor4& in, std::size_t b, std::size_t kh, std::size_t kw) {
  const Shape4 s = in.shape();
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
  RowMat col = RowMat::Zero(static_cast<Eigen::Index>(s.c * kh * kw),
                            static_cast<Eigen::Index>(s.plane()));
  for (std::size_t i = 0; i < s.c; ++i) {
    const double* src = in.plane(b, i).data();
    for (std::size_t dy = 0; dy < kh; ++dy) {
      const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - ph;
      const Span ys = valid(s.h, oy);
      for (std::size_t dx = 0; dx < kw; ++dx) {
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pw;
        const Span xs = valid(s.w, ox);
        double* dst = col.row(static_cast<Eigen::Index>((i * kh + dy) * kw + dx)).data();
        for (std::size_t y = ys.begin; y < ys.end; ++y) {
          const double* row = src + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + oy) * s.w;
          for (std::size_t x = xs.begin; x < xs.end; ++x)
            dst[y * s.w + x] = row[static_cast<std::ptrdiff_t>(x) + ox];
        }
      }
    }
  }
  return col;
}

// Adds patch-column gradients of input channels [i0, i1) back onto the
// input plane they were read from.
void col2im(const RowMat& dcol, std::size_t i0, std::size_t i1, Tensor4& out,
            std::size_t b, std::size_t kh, std::size_t kw) {
  const Shape4 s = out.shape();
  const auto ph = static_cast<std::ptrdiff_t>(kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(kw / 2);
  for (std::size_t i = i0; i < i1; ++i) {
    double* dst = out.plane(b, i).data();
    for (std::size_t dy = 0; dy < kh; ++dy) {
      const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - ph;
      const Span ys = valid(s.h, oy);
      for (std::size_t dx = 0; dx < kw; ++dx) {
        const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pw;
        const Span xs = valid(s.w, ox);
        const double* src =
            dcol.row(static_cast<Eigen::Index>(((i - i0) * kh + dy) * kw + dx)).data();
        for (std::size_t y = ys.begin; y < ys.end; ++y) {
          double* row = dst + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + oy) * s.w;
          for (std::size_t x = xs.begin; x < xs.end; ++x)
            row[static_cast<std::ptrdiff_t>(x) + ox] += src[y * s.w + x];
        }
      }
    }
  }
}

}  // namespace

namespace {

// Rows of batch item b with kw / 2 zero columns on either side.
RowMat padded_rows(const Tensor4& t, std::size_t b, std::size_t kw) {
  const Shape4 s = t.shape();
  const auto w = static_cast<Eigen::Index>(s.w);
  RowMat p = RowMat::Zero(static_cast<Eigen::Index>(s.c), w + static_cast<Eigen::Index>(kw - 1));
  p.middleCols(static_cast<Eigen::Index>(kw / 2), w) =
      ConstRowMap(t.plane(b, 0).data(), static_cast<Eigen::Index>(s.c), w);
  return p;
}

// Weights of input channels [i0, i0 + ib) as double, tap-major: rows (dx, o)
// for every output channel o, columns i. Tap dx is a contiguous
// out x ib block.
RowMat pack_taps(const ConvWeights& w, std::size_t i0, std::size_t ib) {
  const std::size_t in = w.in_channels, kw = w.kw, out = w.out_channels;
  RowMat t(static_cast<Eigen::Index>(kw * out), static_cast<Eigen::Index>(ib));
  for (std::size_t o = 0; o < out; ++o) {
    const float* src = w.weights.data() + (o * in + i0) * kw;
    for (std::size_t i = 0; i < ib; ++i)
      for (std::size_t dx = 0; dx < kw; ++dx)
        t(static_cast<Eigen::Index>(dx * out + o), static_cast<Eigen::Index>(i)) = src[i * kw + dx];
  }
  return t;
}

// Output channels [o0, o0 + ob) only, same layout with out = ob.
RowMat pack_taps_out(const ConvWeights& w, std::size_t o0, std::size_t ob) {
  const std::size_t in = w.in_channels, kw = w.kw;
  RowMat t(static_cast<Eigen::Index>(kw * ob), static_cast<Eigen::Index>(in));
  for (std::size_t o = 0; o < ob; ++o) {
    const float* src = w.weights.data() + (o0 + o) * in * kw;
    for (std::size_t i = 0; i < in; ++i)
      for (std::size_t dx = 0; dx < kw; ++dx)
        t(static_cast<Eigen::Index>(dx * ob + o), static_cast<Eigen::Index>(i)) = src[i * kw + dx];
  }
  return t;
}

// Height-1 inputs: one product per tap against a shifted view of the
// padded rows, which avoids building the patch matrix. Weights are packed
// once per channel block and reused across the batch.
void conv1d(const Tensor4& input, const ConvWeights& w, Tensor4& out) {
  const Shape4 s = input.shape();
  const auto n = static_cast<Eigen::Index>(s.w);
  const auto nblocks = static_cast<std::ptrdiff_t>(blocks(w.out_channels));
  std::vector<RowMat> xp(s.b);
  for (std::size_t b = 0; b < s.b; ++b) xp[b] = padded_rows(input, b, w.kw);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t o0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t obs = std::min(kBlock, w.out_channels - o0);
    const auto ob = static_cast<Eigen::Index>(obs);
    const RowMat t = pack_taps_out(w, o0, obs);
    for (std::size_t b = 0; b < s.b; ++b) {
      RowMap dst(out.plane(b, o0).data(), ob, n);
      dst.setZero();
      for (std::size_t dx = 0; dx < w.kw; ++dx) {
        const auto d = static_cast<Eigen::Index>(dx);
        dst.noalias() += t.middleRows(d * ob, ob) * xp[b].middleCols(d, n);
      }
      if (!w.bias.empty())
        for (Eigen::Index o = 0; o < ob; ++o)
          dst.row(o).array() += static_cast<double>(w.bias[o0 + static_cast<std::size_t>(o)]);
    }
  }
}

void conv1d_input_grad(const Tensor4& grad_out, const ConvWeights& w, Tensor4& out) {
  const Shape4 s = grad_out.shape();
  const auto n = static_cast<Eigen::Index>(s.w);
  const auto oc = static_cast<Eigen::Index>(w.out_channels);
  const auto nblocks = static_cast<std::ptrdiff_t>(blocks(w.in_channels));
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t i0 = static_cast<std::size_t>(blk) * kBlock;
    const std::size_t ibs = std::min(kBlock, w.in_channels - i0);
    const auto ib = static_cast<Eigen::Index>(ibs);
    const RowMat t = pack_taps(w, i0, ibs);
    RowMat dp(ib, n + static_cast<Eigen::Index>(w.kw - 1));
    for (std::size_t b = 0; b < s.b; ++b) {
      const ConstRowMap g(grad_out.plane(b, 0).data(), oc, n);
      dp.setZero();
      for (std::size_t dx = 0; dx < w.kw; ++dx) {
        const auto d = static_cast<Eigen::Index>(dx);
        dp.middleCols(d, n).noalias() += t.middleRows(d * oc, oc).transpose() * g;
      }
      RowMap(out.plane(b, i0).data(), ib, n) = dp.middleCols(static_cast<Eigen::Index>(w.kw / 2), n);
    }
  }
}

}  // namespace

Tensor4 conv2d_same(const Tensor4& input, const ConvWeights& w) {
  check_forward(input, w);
  const Shape4 s = input.shape();
  Tensor4 out({s.b, w.out_channels, s.h, s.w});
  if (s.h == 1 && w.kh == 1) {
    conv1d(input, w, out);
    return out;
  }
  const std::size_t k = w.in_channels * w.kh * w.kw;
  const auto n = static_cast<Eigen::Index>(s.plane());
  const auto nblocks = static_cast<std::ptrdiff_t>(blocks(w.out_channels));

  for (std::size_t b = 0; b < s.b; ++b) {
    const RowMat col = im2col(input, b, w.kh, w.kw);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < nblocks; ++blk) {
      const std::size_t o0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t ob = std::min(kBlock, w.out_channels - o0);
      const RowMat wb = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                                       Eigen::RowMajor>>(
                            w.weights.data() + o0 * k, static_cast<Eigen::Index>(ob),
                            static_cast<Eigen::Index>(k))
                            .cast<double>();
      RowMap dst(out.plane(b, o0).data(), static_cast<Eigen::Index>(ob), n);
      dst.noalias() = wb * col;
      if (!w.bias.empty())
        for (std::size_t o = 0; o < ob; ++o)
          dst.row(static_cast<Eigen::Index>(o)).array() += static_cast<double>(w.bias[o0 + o]);
    }
  }
  return out;
}

Tensor4 conv2d_same_input_grad(const Tensor4& grad_out, const ConvWeights& w) {
  check_backward(grad_out, w);
  const Shape4 s = grad_out.shape();
  Tensor4 out({s.b, w.in_channels, s.h, s.w});
  if (s.h == 1 && w.kh == 1) {
    conv1d_input_grad(grad_out, w, out);
    return out;
  }
  const std::size_t taps = w.kh * w.kw;
  const std::size_t k = w.in_channels * taps;
  const auto n = static_cast<Eigen::Index>(s.plane());
  const auto nblocks = static_cast<std::ptrdiff_t>(blocks(w.in_channels));
  const Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      weights(w.weights.data(), static_cast<Eigen::Index>(w.out_channels),
              static_cast<Eigen::Index>(k));

  for (std::size_t b = 0; b < s.b; ++b) {
    const ConstRowMap g(grad_out.plane(b, 0).data(), static_cast<Eigen::Index>(w.out_channels), n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < nblocks; ++blk) {
      const std::size_t i0 = static_cast<std::size_t>(blk) * kBlock;
      const std::size_t i1 = std::min(w.in_channels, i0 + kBlock);
      const auto cols = static_cast<Eigen::Index>((i1 - i0) * taps);
      const RowMat wt = weights.middleCols(static_cast<Eigen::Index>(i0 * taps), cols)
                            .transpose()
                            .cast<double>();
      RowMat dcol(cols, n);
      dcol.noalias() = wt * g;
      col2im(dcol, i0, i1, out, b, w.kh, w.kw);
    }
  }
  return out;
}

Matrix gram(const Tensor4& f) {
  const Shape4 s = f.shape();
  const auto n = static_cast<Eigen::Index>(s.plane());
  const auto c = static_cast<Eigen::Index>(s.c);
  Matrix g(s.c, s.c);
  RowMap gm(g.data(), c, c);
  const auto nblocks = static_cast<std::ptrdiff_t>(blocks(s.c));

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < nblocks; ++blk) {
    const auto r0 = static_cast<Eigen::Index>(blk) * static_cast<Eigen::Index>(kBlock);
    const Eigen::Index rb = std::min<Eigen::Index>(static_cast<Eigen::Index>(kBlock), c - r0);
    for (std::size_t b = 0; b < s.b; ++b) {
      const ConstRowMap phi(f.plane(b, 0).data(), c, n);
      gm.middleRows(r0, rb).noalias() += phi.middleRows(r0, rb) * phi.transpose();
    }
  }
  for (std::size_t i = 0; i < s.c; ++i)
    for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
  return g;
}

Tensor4 channel_mix(const Tensor4& f, const Matrix& coeff) {
  check_mix(f, coeff);
  const Shape4 s = f.shape();
  Tensor4 out(s);
  const auto n = static_cast<Eigen::Index>(s.plane());
  const auto c = static_cast<Eigen::Index>(s.c);
  const ConstRowMap k(coeff.data(), c, c);
  const auto nblocks = static_cast<std::ptrdiff_t>(blocks(s.c));

  for (std::size_t b = 0; b < s.b; ++b) {
    const ConstRowMap phi(f.plane(b, 0).data(), c, n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t blk = 0; blk < nblocks; ++blk) {
      const auto r0 = static_cast<Eigen::Index>(blk) * static_cast<Eigen::Index>(kBlock);
      const Eigen::Index rb = std::min<Eigen::Index>(static_cast<Eigen::Index>(kBlock), c - r0);
      RowMap dst(out.plane(b, static_cast<std::size_t>(r0)).data(), rb, n);
      dst.noalias() = k.middleCols(r0, rb).transpose() * phi;
    }
  }
  return out;
}

namespace reference {

Tensor4 conv2d_same(const Tensor4& input, const ConvWeights& w) {
  check_forward(input, w);
  const Shape4 s = input.shape();
  Tensor4 out({s.b, w.out_channels, s.h, s.w});
  const auto ph = static_cast<std::ptrdiff_t>(w.kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(w.kw / 2);
  for (std::size_t b = 0; b < s.b; ++b)
    for (std::size_t o = 0; o < w.out_channels; ++o)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = w.bias.empty() ? 0.0 : w.bias[o];
          for (std::size_t i = 0; i < w.in_channels; ++i)
            for (std::size_t dy = 0; dy < w.kh; ++dy)
              for (std::size_t dx = 0; dx < w.kw; ++dx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - ph;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + dx) - pw;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(s.h) ||
                    ix >= static_cast<std::ptrdiff_t>(s.w))
                  continue;
                acc += static_cast<double>(
                           w.weights[((o * w.in_channels + i) * w.kh + dy) * w.kw + dx]) *
                       input.at(b, i, static_cast<std::size_t>(iy),
                                static_cast<std::size_t>(ix));
              }
          out.at(b, o, y, x) = acc;
        }
  return out;
}

Tensor4 conv2d_same_input_grad(const Tensor4& grad_out, const ConvWeights& w) {
  check_backward(grad_out, w);
  const Shape4 s = grad_out.shape();
  Tensor4 out({s.b, w.in_channels, s.h, s.w});
  const auto ph = static_cast<std::ptrdiff_t>(w.kh / 2);
  const auto pw = static_cast<std::ptrdiff_t>(w.kw / 2);
  // Scatter form: each output element pushes into the inputs it read.
  for (std::size_t b = 0; b < s.b; ++b)
    for (std::size_t o = 0; o < w.out_channels; ++o)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          const double g = grad_out.at(b, o, y, x);
          for (std::size_t i = 0; i < w.in_channels; ++i)
            for (std::size_t dy = 0; dy < w.kh; ++dy)
              for (std::size_t dx = 0; dx < w.kw; ++dx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y + dy) - ph;
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x + dx) - pw;
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(s.h) ||
                    ix >= static_cast<std::ptrdiff_t>(s.w))
                  continue;
                out.at(b, i, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) +=
                    static_cast<double>(
                        w.weights[((o * w.in_channels + i) * w.kh + dy) * w.kw + dx]) *
                    g;
              }
        }
  return out;
}

Matrix gram(const Tensor4& f) {
  const Shape4 s = f.shape();
  Matrix g(s.c, s.c);
  for (std::size_t i = 0; i < s.c; ++i)
    for (std::size_t j = 0; j < s.c; ++j) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s.b; ++b)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) acc += f.at(b, i, y, x) * f.at(b, j, y, x);
      g(i, j) = acc;
    }
  return g;
}

Tensor4 channel_mix(const Tensor4& f, const Matrix& coeff) {
  check_mix(f, coeff);
  const Shape4 s = f.shape();
  Tensor4 out(s);
  for (std::size_t b = 0; b < s.b; ++b)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < s.h; ++y)
        for (std::size_t x = 0; x < s.w; ++x) {
          double acc = 0.0;
          for (std::size_t j = 0; j < s.c; ++j) acc += coeff(j, c) * f.at(b, j, y, x);
          out.at(b, c, y, x) = acc;
        }
  return out;
}

}  // namespace reference

}  // namespace audiotex::kernels
