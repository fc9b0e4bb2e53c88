#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "audiotex/losses.hpp"

namespace audiotex {

enum class OptMethod { lbfgs, adam };

std::string_view to_string(OptMethod m);
OptMethod parse_opt_method(std::string_view name);

struct OptConfig {
  OptMethod method = OptMethod::lbfgs;
  /// Outer steps. For L-BFGS each outer step runs up to `lbfgs_inner`
  /// updates; for Adam each is one update.
  int iterations = 500;
  int lbfgs_history = 100;
  double lbfgs_step = 1.0;
  int lbfgs_inner = 20;
  double tolerance_grad = 1e-7;
  double tolerance_change = 1e-9;
  double adam_lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int log_every = 1;
};

void validate(const OptConfig& cfg);

/// One objective evaluation.
struct Evaluation {
  double value = 0.0;
  std::vector<double> gradient;
  LossParts parts;
};

using Objective = std::function<Evaluation(std::span<const double>)>;

struct TraceRecord {
  int iteration = 0;  // 1-based outer step
  double total = 0.0;
  double content = 0.0;
  double style = 0.0;
  double range = 0.0;
  double grad_norm = 0.0;  // Euclidean
};

/// One record per logged outer step: ceil(iterations / log_every) records.
struct RunTrace {
  std::vector<TraceRecord> records;
  int evaluations = 0;
  int rollbacks = 0;
};

/// "iteration,total,content,style,range,grad_norm" with a header row.
void write_trace_csv(std::ostream& out, const RunTrace& trace);

struct OptResult {
  std::vector<double> x;
  RunTrace trace;
  Evaluation initial;
  Evaluation final;  // at the returned x
};

/// Limited-memory BFGS without line search: each update moves by a fixed
/// step along the two-loop direction. Curvature pairs with s'y <= 1e-10 are
/// dropped; a step whose loss is non-finite or larger than the current one
/// is undone, the history cleared and the next trial step halved.
OptResult lbfgs_minimize(const Objective& f, std::vector<double> x0,
                         const OptConfig& cfg);

/// Bias-corrected Adam. Throws NumericError on a non-finite loss.
OptResult adam_minimize(const Objective& f, std::vector<double> x0,
                        const OptConfig& cfg);

/// Dispatches on cfg.method.
OptResult minimize(const Objective& f, std::vector<double> x0,
                   const OptConfig& cfg);

}  // namespace audiotex
