#pragma once

#include <array>
#include <optional>

#include "audiotex/matrix.hpp"
#include "audiotex/network.hpp"
#include "audiotex/tensor.hpp"

namespace audiotex {

/// Channel correlation matrix of a feature tensor, normalised by the number
/// of rows of its (B*H*W, C) view.
struct GramMatrix {
  Matrix values;
  double normalizer = 1.0;  // B * H * W

  std::size_t channels() const { return values.rows(); }
};

GramMatrix gram(const Tensor4& features);

/// Weights of the three objective terms.
struct LossWeights {
  double alpha = 0.0;  // content
  double beta = 1e9;   // style
  double gamma = 1e-3; // range penalty
};

void validate(const LossWeights& w);

struct LayerSets {
  LayerSet style{Layer::relu1, Layer::relu2};
  LayerSet content{Layer::relu3};
};

struct TermGrads {
  double loss = 0.0;
  LayerGrads grads;
};

using StyleTargets = std::array<std::optional<GramMatrix>, kNumLayers>;
using ContentTargets = std::array<std::optional<Tensor4>, kNumLayers>;

/// sum_{n in S} (1/C_n) ||G(phi_n(x)) - target_n||_F^2 and its gradient with
/// respect to each phi_n(x).
TermGrads style_loss_and_grads(const StyleTargets& targets,
                               const Activations& acts, LayerSet layers);

/// sum_{m in C} (1/C_m) ||phi_m(c) - phi_m(x)||^2 and gradients.
TermGrads content_loss_and_grads(const ContentTargets& targets,
                                 const Activations& acts, LayerSet layers);

struct RangePenalty {
  double loss = 0.0;
  Matrix grad;
};

/// ||max(x - 1, 0) + max(-x, 0)||_2 (unsquared). The gradient is taken as
/// zero when the norm is below 1e-12.
RangePenalty range_penalty_and_grad(const Matrix& x);

/// Everything the objective compares the synthesized image against.
struct Targets {
  StyleTargets style;
  ContentTargets content;
};

/// Unweighted term values.
struct LossParts {
  double content = 0.0;
  double style = 0.0;
  double range = 0.0;
};

struct ObjectiveValue {
  double total = 0.0;  // alpha*content + beta*style + gamma*range
  LossParts parts;
  Matrix grad;         // same shape as the image
};

/// alpha * L_content + beta * L_style + gamma * ||U + D||_2 at image `x`
/// (bins x frames). Terms with zero weight are not evaluated and report 0.
ObjectiveValue total_objective(const Network& net, const Matrix& x,
                               const Targets& targets, const LossWeights& w,
                               const LayerSets& layers);

}  // namespace audiotex
