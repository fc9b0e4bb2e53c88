#include "audiotex/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <ostream>
#include <string>

#include "audiotex/error.hpp"

namespace audiotex {

std::string_view to_string(OptMethod m) {
  return m == OptMethod::lbfgs ? "lbfgs" : "adam";
}

OptMethod parse_opt_method(std::string_view name) {
  if (name == "lbfgs") return OptMethod::lbfgs;
  if (name == "adam") return OptMethod::adam;
  throw InvalidArgument("unknown optimizer '" + std::string(name) + "'");
}

void validate(const OptConfig& cfg) {
  if (cfg.iterations < 1) throw InvalidArgument("iterations must be >= 1");
  if (cfg.lbfgs_history < 1) throw InvalidArgument("L-BFGS history must be >= 1");
  if (cfg.lbfgs_inner < 1) throw InvalidArgument("L-BFGS inner steps must be >= 1");
  if (!(cfg.lbfgs_step > 0.0)) throw InvalidArgument("L-BFGS step must be positive");
  if (cfg.log_every < 1) throw InvalidArgument("log_every must be >= 1");
  if (!(cfg.adam_lr > 0.0)) throw InvalidArgument("Adam learning rate must be positive");
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "iteration,total,content,style,range,grad_norm\n";
  const auto old = out.precision(17);
  for (const TraceRecord& r : trace.records)
    out << r.iteration << ',' << r.total << ',' << r.content << ',' << r.style
        << ',' << r.range << ',' << r.grad_norm << '\n';
  out.precision(old);
}

namespace {

// Curvature pairs are kept in single precision. The two-loop passes stream
// the whole history, which is far larger than cache, so this halves the
// dominant memory traffic of an update.
using Pair = std::vector<float>;

// Eight independent partial sums let the compiler vectorise the reductions
// below while keeping a fixed summation order.
constexpr std::size_t kLanes = 8;

template <class A, class B>
double lane_dot(const A* a, const B* b, std::size_t n) {
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t j = 0; j < kLanes; ++j)
      acc[j] += static_cast<double>(a[i + j]) * static_cast<double>(b[i + j]);
  double s = 0.0;
  for (; i < n; ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  for (double v : acc) s += v;
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return lane_dot(a.data(), b.data(), a.size());
}

double dot(const Pair& a, const Pair& b) { return lane_dot(a.data(), b.data(), a.size()); }

double dot(const Pair& a, std::span<const double> b) {
  return lane_dot(a.data(), b.data(), a.size());
}

// d += a * u, returning v . d (after the update). One pass over u and v.
double axpy_dot(double a, const Pair& u, const Pair& v, std::span<double> d) {
  const std::size_t n = d.size();
  double* dp = d.data();
  const float* up = u.data();
  const float* vp = v.data();
  double acc[kLanes] = {};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    for (std::size_t j = 0; j < kLanes; ++j) {
      dp[i + j] += a * static_cast<double>(up[i + j]);
      acc[j] += static_cast<double>(vp[i + j]) * dp[i + j];
    }
  double s = 0.0;
  for (; i < n; ++i) {
    dp[i] += a * static_cast<double>(up[i]);
    s += static_cast<double>(vp[i]) * dp[i];
  }
  for (double v : acc) s += v;
  return s;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double sum_abs(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

bool finite(const Evaluation& e) {
  if (!std::isfinite(e.value)) return false;
  for (double g : e.gradient)
    if (!std::isfinite(g)) return false;
  return true;
}

Evaluation evaluate(const Objective& f, std::span<const double> x, RunTrace& trace) {
  Evaluation e = f(x);
  ++trace.evaluations;
  if (e.gradient.size() != x.size())
    throw InvalidArgument("objective returned a gradient of the wrong size");
  return e;
}

void record(RunTrace& trace, int iteration, const Evaluation& e) {
  trace.records.push_back({iteration, e.value, e.parts.content, e.parts.style,
                           e.parts.range, std::sqrt(dot(e.gradient, e.gradient))});
}

}  // namespace

OptResult lbfgs_minimize(const Objective& f, std::vector<double> x0,
                         const OptConfig& cfg) {
  validate(cfg);
  OptResult res;
  res.x = std::move(x0);
  const std::size_t n = res.x.size();
  for (double v : res.x)
    if (!std::isfinite(v)) throw InvalidArgument("initial point is not finite");

  Evaluation cur = evaluate(f, res.x, res.trace);
  if (!finite(cur)) throw NumericError("non-finite initial loss");
  res.initial = cur;

  std::deque<Pair> s_hist, y_hist;
  std::deque<double> rho;
  std::vector<double> alpha(static_cast<std::size_t>(cfg.lbfgs_history));
  std::vector<double> d(n), g_prev(n), x_new(n);
  Pair y(n), s(n);
  double h_diag = 1.0;
  double t = 0.0;
  double shrink = 1.0;
  bool fresh = true;

  for (int it = 1; it <= cfg.iterations; ++it) {
    if (max_abs(cur.gradient) > cfg.tolerance_grad) {
      for (int inner = 0; inner < cfg.lbfgs_inner; ++inner) {
        const auto& g = cur.gradient;
        if (fresh) {
          s_hist.clear();
          y_hist.clear();
          rho.clear();
          h_diag = 1.0;
          for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
          t = std::min(1.0, 1.0 / sum_abs(g)) * cfg.lbfgs_step * shrink;
          fresh = false;
        } else {
          y.resize(n);
          s.resize(n);
          for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<float>(g[i] - g_prev[i]);
            s[i] = static_cast<float>(d[i] * t);
          }
          const double ys = dot(y, s);
          if (ys > 1e-10) {
            h_diag = ys / dot(y, y);
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho.push_back(1.0 / ys);
            if (static_cast<int>(s_hist.size()) > cfg.lbfgs_history) {
              // Recycle the oldest pair's storage.
              s = std::move(s_hist.front());
              y = std::move(y_hist.front());
              s_hist.pop_front();
              y_hist.pop_front();
              rho.pop_front();
            }
          }
          // Two-loop recursion for d = -H g.
          for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
          const std::size_t m = s_hist.size();
          if (m > 0) {
            double sd = dot(s_hist[m - 1], d);
            for (std::size_t k = m; k-- > 0;) {
              alpha[k] = sd * rho[k];
              const auto& next = s_hist[k > 0 ? k - 1 : 0];
              sd = axpy_dot(-alpha[k], y_hist[k], next, d);
            }
            for (double& v : d) v *= h_diag;
            double yd = dot(y_hist[0], d);
            for (std::size_t k = 0; k < m; ++k) {
              const double beta = yd * rho[k];
              const auto& next = y_hist[k + 1 < m ? k + 1 : k];
              yd = axpy_dot(alpha[k] - beta, s_hist[k], next, d);
            }
          }
          t = cfg.lbfgs_step * shrink;
        }

        std::copy(g.begin(), g.end(), g_prev.begin());
        const double prev_loss = cur.value;
        if (dot(g, d) > -cfg.tolerance_change) break;

        for (std::size_t i = 0; i < n; ++i) x_new[i] = res.x[i] + t * d[i];
        Evaluation next = evaluate(f, x_new, res.trace);
        if (!finite(next) || next.value > cur.value) {
          ++res.trace.rollbacks;
          fresh = true;
          shrink *= 0.5;
          continue;
        }
        shrink = 1.0;
        res.x.swap(x_new);
        cur = std::move(next);

        if (max_abs(cur.gradient) <= cfg.tolerance_grad) break;
        if (t * max_abs(d) <= cfg.tolerance_change) break;
        if (std::abs(cur.value - prev_loss) < cfg.tolerance_change) break;
      }
    }
    if ((it - 1) % cfg.log_every == 0) record(res.trace, it, cur);
  }
  res.final = std::move(cur);
  return res;
}

OptResult adam_minimize(const Objective& f, std::vector<double> x0,
                        const OptConfig& cfg) {
  validate(cfg);
  OptResult res;
  res.x = std::move(x0);
  const std::size_t n = res.x.size();
  for (double v : res.x)
    if (!std::isfinite(v)) throw InvalidArgument("initial point is not finite");

  Evaluation cur = evaluate(f, res.x, res.trace);
  if (!finite(cur)) throw NumericError("Adam: non-finite loss at the initial point");
  res.initial = cur;

  std::vector<double> m(n, 0.0), v(n, 0.0);
  double b1t = 1.0, b2t = 1.0;
  for (int it = 1; it <= cfg.iterations; ++it) {
    b1t *= cfg.adam_beta1;
    b2t *= cfg.adam_beta2;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = cur.gradient[i];
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      res.x[i] -= cfg.adam_lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
    cur = evaluate(f, res.x, res.trace);
    if (!finite(cur))
      throw NumericError("Adam: non-finite loss at iteration " + std::to_string(it));
    if ((it - 1) % cfg.log_every == 0) record(res.trace, it, cur);
  }
  res.final = std::move(cur);
  return res;
}

OptResult minimize(const Objective& f, std::vector<double> x0, const OptConfig& cfg) {
  return cfg.method == OptMethod::lbfgs ? lbfgs_minimize(f, std::move(x0), cfg)
                                        : adam_minimize(f, std::move(x0), cfg);
}

}  // namespace audiotex
