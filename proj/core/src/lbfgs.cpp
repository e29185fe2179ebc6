#include "dyntex/lbfgs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <ostream>

namespace dyntex {

void LbfgsConfig::validate() const {
  if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0)) {
    throw Error(ErrorCode::invalid_argument, "lbfgs: need 0 < c1 < c2 < 1");
  }
  if (memory == 0) throw Error(ErrorCode::invalid_argument, "lbfgs: memory must be >= 1");
  if (max_iters == 0) throw Error(ErrorCode::invalid_argument, "lbfgs: max_iters must be >= 1");
  if (max_line_search_steps == 0) {
    throw Error(ErrorCode::invalid_argument, "lbfgs: max_line_search_steps must be >= 1");
  }
  if (!(grad_tol >= 0.0)) throw Error(ErrorCode::invalid_argument, "lbfgs: grad_tol must be >= 0");
  if (box_projection && (box_lower.empty() || box_upper.empty())) {
    throw Error(ErrorCode::invalid_argument, "lbfgs: box projection needs lower and upper bounds");
  }
}

std::string_view to_string(Termination reason) noexcept {
  switch (reason) {
    case Termination::max_iters: return "max_iters";
    case Termination::grad_tol: return "grad_tol";
    case Termination::line_search_failure: return "line_search_failure";
  }
  return "?";
}

void write_trace_csv(const OptimizationTrace& trace, std::ostream& out) {
  const auto old_precision = out.precision(17);
  out << "iter,loss,grad_norm,step\n";
  out << 0 << ',' << trace.initial.loss << ',' << trace.initial.grad_norm << ',' << 0 << '\n';
  for (std::size_t i = 0; i < trace.iterations.size(); ++i) {
    const auto& r = trace.iterations[i];
    out << i + 1 << ',' << r.loss << ',' << r.grad_norm << ',' << r.step << '\n';
  }
  out.precision(old_precision);
}

namespace {

template <typename T>
Tensor<T> step_point(const Tensor<T>& x, const Tensor<T>& d, double alpha) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(x[i]) + alpha * static_cast<double>(d[i]));
  }
  return out;
}

struct Sample {
  double step;
  double loss;
  double slope;
};

/// Minimizer of the cubic through two samples (values and slopes), or
/// nullopt when it does not exist.
std::optional<double> cubic_minimizer(const Sample& a, const Sample& b) {
  const double d1 = a.slope + b.slope - 3.0 * (a.loss - b.loss) / (a.step - b.step);
  const double disc = d1 * d1 - a.slope * b.slope;
  if (!(disc >= 0.0) || !std::isfinite(disc)) return std::nullopt;
  const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
  const double denom = b.slope - a.slope + 2.0 * d2;
  if (denom == 0.0) return std::nullopt;
  const double t = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
  if (!std::isfinite(t)) return std::nullopt;
  return t;
}

}  // namespace

template <typename T>
LineSearchResult<T> line_search_wolfe(const Objective<T>& objective, const Tensor<T>& x,
                                      const Tensor<T>& direction, double f0, const Tensor<T>& g0,
                                      const LbfgsConfig& cfg, double initial_step) {
  require_same_shape(x.shape(), direction.shape(), "line_search_wolfe");
  const double slope0 = dot(g0, direction);
  if (!(slope0 < 0.0)) {
    throw Error(ErrorCode::non_descent, "line search: direction is not a descent direction (g^T d = " +
                                            std::to_string(slope0) + ")");
  }
  if (!(initial_step > 0.0) || !std::isfinite(initial_step)) {
    throw Error(ErrorCode::invalid_argument, "line search: initial step must be positive and finite");
  }
  const double c1 = cfg.wolfe_c1, c2 = cfg.wolfe_c2;

  LineSearchResult<T> best;
  bool have_best = false;
  std::size_t evals = 0;

  struct Eval {
    Sample s;
    Tensor<T> point;
    Tensor<T> grad;
    bool finite;
  };
  auto evaluate = [&](double alpha) {
    Eval e{{alpha, 0.0, 0.0}, step_point(x, direction, alpha), Tensor<T>(x.shape()), false};
    e.s.loss = objective(e.point, e.grad);
    ++evals;
    e.finite = std::isfinite(e.s.loss) && all_finite(e.grad);
    e.s.slope = e.finite ? dot(e.grad, direction) : 0.0;
    if (e.finite && e.s.loss <= f0 + c1 * alpha * slope0 && e.s.loss < f0 &&
        (!have_best || e.s.loss < best.loss)) {
      best = LineSearchResult<T>{alpha, e.s.loss, e.point, e.grad, false, 0};
      have_best = true;
    }
    return e;
  };
  auto accept = [&](Eval&& e) {
    return LineSearchResult<T>{e.s.step, e.s.loss, std::move(e.point), std::move(e.grad), true, evals};
  };
  auto sufficient = [&](const Eval& e) { return e.finite && e.s.loss <= f0 + c1 * e.s.step * slope0; };
  auto curvature = [&](const Eval& e) { return std::abs(e.s.slope) <= -c2 * slope0; };

  Sample lo{0.0, f0, slope0};
  Sample hi{};
  bool bracketed = false;
  bool hi_finite = true;
  Sample prev = lo;
  double alpha = initial_step;

  // Bracketing phase.
  while (evals < cfg.max_line_search_steps) {
    Eval e = evaluate(alpha);
    if (!sufficient(e) || (evals > 1 && e.s.loss >= prev.loss)) {
      lo = prev;
      hi = e.s;
      hi_finite = e.finite;
      bracketed = true;
      break;
    }
    if (curvature(e)) return accept(std::move(e));
    if (e.s.slope >= 0.0) {
      lo = e.s;
      hi = prev;
      bracketed = true;
      break;
    }
    prev = e.s;
    alpha *= 2.0;
  }

  // Zoom phase: lo always satisfies sufficient decrease and has the lowest
  // loss seen among such points; hi lies on the other side of a minimizer.
  while (bracketed && evals < cfg.max_line_search_steps) {
    const double left = std::min(lo.step, hi.step), right = std::max(lo.step, hi.step);
    const double width = right - left;
    if (!(width > 0.0) || width <= 1e-16 * right) break;
    double trial = 0.5 * (lo.step + hi.step);
    if (hi_finite) {
      if (auto c = cubic_minimizer(lo, hi); c && *c >= left + 0.1 * width && *c <= right - 0.1 * width) {
        trial = *c;
      }
    }
    Eval e = evaluate(trial);
    if (!sufficient(e) || e.s.loss >= lo.loss) {
      hi = e.s;
      hi_finite = e.finite;
      continue;
    }
    if (curvature(e)) return accept(std::move(e));
    if (e.s.slope * (hi.step - lo.step) >= 0.0) {
      hi = lo;
      hi_finite = true;
    }
    lo = e.s;
  }

  if (have_best) {
    best.evaluations = evals;
    return best;
  }
  throw Error(ErrorCode::line_search_failed, "line search: no acceptable step after " +
                                                 std::to_string(evals) + " evaluations");
}

template <typename T>
MinimizeResult<T> minimize(const Objective<T>& objective, Tensor<T> x0, const LbfgsConfig& cfg) {
  cfg.validate();
  const std::size_t n = x0.size();

  auto bound = [](const std::vector<double>& v, std::size_t i) { return v.size() == 1 ? v[0] : v.at(i); };
  auto project = [&](Tensor<T>& x) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const T lo = static_cast<T>(bound(cfg.box_lower, i)), hi = static_cast<T>(bound(cfg.box_upper, i));
      const T clamped = std::clamp(x[i], lo, hi);
      changed |= clamped != x[i];
      x[i] = clamped;
    }
    return changed;
  };

  MinimizeResult<T> result{std::move(x0), {}};
  Tensor<T>& x = result.x;
  OptimizationTrace& trace = result.trace;
  if (cfg.box_projection) project(x);

  Tensor<T> g(x.shape());
  double f = objective(x, g);
  trace.evaluations = 1;
  if (!std::isfinite(f) || !all_finite(g)) {
    throw Error(ErrorCode::non_finite, "minimize: objective is not finite at the starting point");
  }
  trace.initial = {f, max_abs(g), 0.0};
  if (trace.initial.grad_norm <= cfg.grad_tol) {
    trace.reason = Termination::grad_tol;
    return result;
  }

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> history;
  double gamma = 1.0;
  trace.reason = Termination::max_iters;

  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    // Two-loop recursion: direction = -H g.
    std::vector<double> q(g.values().begin(), g.values().end());
    std::vector<double> alphas(history.size());
    for (std::size_t k = history.size(); k-- > 0;) {
      const Pair& p = history[k];
      double a = 0.0;
      for (std::size_t i = 0; i < n; ++i) a += p.s[i] * q[i];
      a *= p.rho;
      alphas[k] = a;
      for (std::size_t i = 0; i < n; ++i) q[i] -= a * p.y[i];
    }
    const double scale = history.empty() ? 1.0 : gamma;
    for (double& v : q) v *= scale;
    for (std::size_t k = 0; k < history.size(); ++k) {
      const Pair& p = history[k];
      double b = 0.0;
      for (std::size_t i = 0; i < n; ++i) b += p.y[i] * q[i];
      b *= p.rho;
      for (std::size_t i = 0; i < n; ++i) q[i] += p.s[i] * (alphas[k] - b);
    }
    Tensor<T> direction(x.shape());
    for (std::size_t i = 0; i < n; ++i) direction[i] = static_cast<T>(-q[i]);

    double initial_step = 1.0;
    if (history.empty() || !(dot(g, direction) < 0.0)) {
      history.clear();
      for (std::size_t i = 0; i < n; ++i) direction[i] = -g[i];
      initial_step = 1.0 / max_abs(g);
    }

    LineSearchResult<T> ls;
    try {
      ls = line_search_wolfe(objective, x, direction, f, g, cfg, initial_step);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::line_search_failed && e.code() != ErrorCode::non_descent) throw;
      trace.evaluations += cfg.max_line_search_steps;
      trace.reason = Termination::line_search_failure;
      break;
    }
    trace.evaluations += ls.evaluations;

    Tensor<T> x_new = std::move(ls.point);
    Tensor<T> g_new = std::move(ls.grad);
    double f_new = ls.loss;
    if (cfg.box_projection && project(x_new)) {
      f_new = objective(x_new, g_new);
      ++trace.evaluations;
    }
    if (!(f_new < f) || !std::isfinite(f_new)) {
      trace.reason = Termination::line_search_failure;
      break;
    }

    Pair p{std::vector<double>(n), std::vector<double>(n), 0.0};
    double ys = 0.0, yy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p.s[i] = static_cast<double>(x_new[i]) - static_cast<double>(x[i]);
      p.y[i] = static_cast<double>(g_new[i]) - static_cast<double>(g[i]);
      ys += p.y[i] * p.s[i];
      yy += p.y[i] * p.y[i];
    }
    if (ys > cfg.curvature_eps) {
      p.rho = 1.0 / ys;
      gamma = ys / yy;
      history.push_back(std::move(p));
      if (history.size() > cfg.memory) history.pop_front();
    }

    x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    trace.iterations.push_back({f, max_abs(g), ls.step});
    if (trace.iterations.back().grad_norm <= cfg.grad_tol) {
      trace.reason = Termination::grad_tol;
      break;
    }
  }
  return result;
}

#define DYNTEX_INSTANTIATE(T)                                                                      \
  template LineSearchResult<T> line_search_wolfe(const Objective<T>&, const Tensor<T>&,            \
                                                 const Tensor<T>&, double, const Tensor<T>&,       \
                                                 const LbfgsConfig&, double);                      \
  template MinimizeResult<T> minimize(const Objective<T>&, Tensor<T>, const LbfgsConfig&);

DYNTEX_INSTANTIATE(float)
DYNTEX_INSTANTIATE(double)

#undef DYNTEX_INSTANTIATE

}  // namespace dyntex
