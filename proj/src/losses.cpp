#include "audiotex/losses.hpp"

#include <cmath>
#include <string>

#include "audiotex/error.hpp"
#include "audiotex/kernels.hpp"

namespace audiotex {

GramMatrix gram(const Tensor4& features) {
  const Shape4 s = features.shape();
  GramMatrix g;
  g.normalizer = static_cast<double>(s.b * s.plane());
  g.values = kernels::gram(features);
  const double inv = 1.0 / g.normalizer;
  for (double& v : g.values.storage()) v *= inv;
  return g;
}

void validate(const LossWeights& w) {
  for (double v : {w.alpha, w.beta, w.gamma})
    if (!(v >= 0.0) || !std::isfinite(v))
      throw InvalidArgument("loss weights must be finite and non-negative");
  if (!(w.alpha > 0.0) && !(w.beta > 0.0))
    throw InvalidArgument("at least one of alpha and beta must be positive");
}

TermGrads style_loss_and_grads(const StyleTargets& targets,
                               const Activations& acts, LayerSet layers) {
  TermGrads out;
  for (int n = 0; n < kNumLayers; ++n) {
    const auto layer = static_cast<Layer>(n);
    if (!layers.contains(layer)) continue;
    const auto& target = targets[static_cast<std::size_t>(n)];
    if (!target)
      throw InvalidArgument("no style target for " + std::string(to_string(layer)));
    const Tensor4& phi = acts.relu(layer);
    const std::size_t c = phi.shape().c;
    if (target->channels() != c)
      throw InvalidArgument("style target for " + std::string(to_string(layer)) +
                            " has " + std::to_string(target->channels()) +
                            " channels, layer has " + std::to_string(c));

    const GramMatrix g = gram(phi);
    Matrix diff(c, c);
    double sq = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
      const double d = g.values.data()[i] - target->values.data()[i];
      diff.data()[i] = d;
      sq += d * d;
    }
    const double inv_c = 1.0 / static_cast<double>(c);
    out.loss += inv_c * sq;

    // d/dphi = (1/C)(4/U) phi D in the (BHW, C) view.
    const double k = 4.0 * inv_c / g.normalizer;
    for (double& v : diff.storage()) v *= k;
    out.grads[static_cast<std::size_t>(n)] = kernels::channel_mix(phi, diff);
  }
  return out;
}

TermGrads content_loss_and_grads(const ContentTargets& targets,
                                 const Activations& acts, LayerSet layers) {
  TermGrads out;
  for (int n = 0; n < kNumLayers; ++n) {
    const auto layer = static_cast<Layer>(n);
    if (!layers.contains(layer)) continue;
    const auto& target = targets[static_cast<std::size_t>(n)];
    if (!target)
      throw InvalidArgument("no content target for " + std::string(to_string(layer)));
    const Tensor4& phi = acts.relu(layer);
    if (target->shape() != phi.shape())
      throw InvalidArgument("content target for " + std::string(to_string(layer)) +
                            " has shape " + to_string(target->shape()) +
                            ", layer has " + to_string(phi.shape()));
    const double inv_c = 1.0 / static_cast<double>(phi.shape().c);
    Tensor4 grad(phi.shape());
    double sq = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) {
      const double d = phi.data()[i] - target->data()[i];
      sq += d * d;
      grad.data()[i] = 2.0 * inv_c * d;
    }
    out.loss += inv_c * sq;
    out.grads[static_cast<std::size_t>(n)] = std::move(grad);
  }
  return out;
}

RangePenalty range_penalty_and_grad(const Matrix& x) {
  RangePenalty out;
  out.grad = Matrix(x.rows(), x.cols());
  double sq = 0.0;
  for (double v : x.storage()) {
    const double excess = v > 1.0 ? v - 1.0 : (v < 0.0 ? -v : 0.0);
    sq += excess * excess;
  }
  out.loss = std::sqrt(sq);
  if (out.loss < 1e-12) return out;
  const double inv = 1.0 / out.loss;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.data()[i];
    // d||e||/dx = e * de/dx / ||e||, with de/dx = +1 above 1 and -1 below 0.
    if (v > 1.0) out.grad.data()[i] = (v - 1.0) * inv;
    else if (v < 0.0) out.grad.data()[i] = v * inv;
  }
  return out;
}

ObjectiveValue total_objective(const Network& net, const Matrix& x,
                               const Targets& targets, const LossWeights& w,
                               const LayerSets& layers) {
  validate(w);
  const bool use_style = w.beta > 0.0 && !layers.style.empty();
  const bool use_content = w.alpha > 0.0 && !layers.content.empty();
  const int depth = std::max(use_style ? layers.style.depth() : 0,
                             use_content ? layers.content.depth() : 0);

  ObjectiveValue out;
  out.grad = Matrix(x.rows(), x.cols());
  if (depth > 0) {
    const Orientation o = net.orientation();
    const Activations acts = forward(net, orient(x, o), depth);
    LayerGrads injected;
    const auto accumulate = [&injected](const TermGrads& term, double weight) {
      for (std::size_t n = 0; n < injected.size(); ++n) {
        if (!term.grads[n]) continue;
        auto& dst = injected[n];
        if (!dst) dst = Tensor4(term.grads[n]->shape());
        const auto src = term.grads[n]->flat();
        auto d = dst->flat();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += weight * src[i];
      }
    };
    if (use_style) {
      const TermGrads style = style_loss_and_grads(targets.style, acts, layers.style);
      out.parts.style = style.loss;
      accumulate(style, w.beta);
    }
    if (use_content) {
      const TermGrads content =
          content_loss_and_grads(targets.content, acts, layers.content);
      out.parts.content = content.loss;
      accumulate(content, w.alpha);
    }
    out.grad = deorient(backward_input(net, acts, injected), o);
  }

  if (w.gamma > 0.0) {
    const RangePenalty range = range_penalty_and_grad(x);
    out.parts.range = range.loss;
    for (std::size_t i = 0; i < out.grad.size(); ++i)
      out.grad.data()[i] += w.gamma * range.grad.data()[i];
  }
  out.total = w.alpha * out.parts.content + w.beta * out.parts.style +
              w.gamma * out.parts.range;
  return out;
}

}  // namespace audiotex
