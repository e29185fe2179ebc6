#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "dyntex/tensor.hpp"

namespace dyntex {

struct LbfgsConfig {
  std::size_t max_iters = 500;
  std::size_t memory = 10;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.9;
  /// Stop once the gradient max-norm drops to this value.
  double grad_tol = 1e-8;
  /// Objective evaluations allowed per line search.
  std::size_t max_line_search_steps = 20;
  /// Curvature pairs with y^T s at or below this are not stored.
  double curvature_eps = 1e-10;
  /// Optional elementwise box applied to every accepted iterate. When set the
  /// point is clamped after each step and re-evaluated.
  bool box_projection = false;
  std::vector<double> box_lower;  // one per element, or one value for all
  std::vector<double> box_upper;

  void validate() const;
};

enum class Termination { max_iters, grad_tol, line_search_failure };

std::string_view to_string(Termination reason) noexcept;

struct IterationRecord {
  double loss = 0.0;
  double grad_norm = 0.0;  // max-norm
  double step = 0.0;
};

struct OptimizationTrace {
  IterationRecord initial;               // at x0, step 0
  std::vector<IterationRecord> iterations;  // one per accepted step
  Termination reason = Termination::max_iters;
  std::size_t evaluations = 0;

  double final_loss() const { return iterations.empty() ? initial.loss : iterations.back().loss; }
  double final_grad_norm() const {
    return iterations.empty() ? initial.grad_norm : iterations.back().grad_norm;
  }
};

/// `iter,loss,grad_norm,step` with the starting point as iteration 0.
void write_trace_csv(const OptimizationTrace& trace, std::ostream& out);

/// Returns the loss at `x` and writes the gradient (same shape) into `grad`.
template <typename T>
using Objective = std::function<double(const Tensor<T>& x, Tensor<T>& grad)>;

template <typename T>
struct LineSearchResult {
  double step = 0.0;
  double loss = 0.0;
  Tensor<T> point;
  Tensor<T> grad;
  /// False when the evaluation budget ran out after finding a point with
  /// sufficient decrease but without meeting the curvature condition.
  bool strong_wolfe = true;
  std::size_t evaluations = 0;
};

/// Strong-Wolfe line search (bracketing, then cubic-interpolation zoom).
/// Errors: non_descent when g0^T d >= 0; line_search_failed when no step
/// with sufficient decrease is found within the budget.
template <typename T>
LineSearchResult<T> line_search_wolfe(const Objective<T>& objective, const Tensor<T>& x,
                                      const Tensor<T>& direction, double f0, const Tensor<T>& g0,
                                      const LbfgsConfig& cfg, double initial_step = 1.0);

template <typename T>
struct MinimizeResult {
  Tensor<T> x;
  OptimizationTrace trace;
};

/// Unconstrained L-BFGS. The first step is steepest descent with trial step
/// 1/|g|_inf; later directions come from the two-loop recursion scaled by
/// s^T y / y^T y. Throws non_finite when the objective is not finite at x0.
/// A failed line search ends the run and returns the last accepted point.
template <typename T>
MinimizeResult<T> minimize(const Objective<T>& objective, Tensor<T> x0, const LbfgsConfig& cfg);

}  // namespace dyntex
