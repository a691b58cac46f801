#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "specpost/objective.hpp"

namespace specpost {

struct OptimizeOptions {
  double lo = -5.0;
  double hi = 5.0;
  int max_iters = 2500;
  double f_tol = 1e-6;
  /// Relative finite-difference step, used only when analytic_gradient is off.
  double grad_step = 1e-6;
  bool analytic_gradient = true;
  int history = 10;
  std::vector<int> ladder;
  std::optional<Index> keep_dims;
  /// With keep_dims, re-evaluate the final weights on the full problem.
  bool report_exact = true;

  void validate() const;
};

struct WeightSolution {
  WeightSchedule weights;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = false;
  double wall_time_s = 0.0;
  std::vector<std::pair<int, double>> trace;
};

using ScalarFunction = std::function<double(const RealVector&)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h; with `relative`,
/// the step for coordinate i is h * max(1, |x_i|).
RealVector finite_diff_gradient(const ScalarFunction& f, const RealVector& theta, double h, bool relative = false);

/// DPS: zeta = 0.1 everywhere. PiGDM: the schedule heuristic.
WeightSchedule default_init(SamplerKind kind, const Schedule& sched);

/// Lower/upper bounds for weights.params(); r is floored at 0.
std::pair<RealVector, RealVector> param_bounds(SamplerKind kind, int steps, const OptimizeOptions& opts);

/// Projected quasi-Newton (limited-memory BFGS on the free variables, box
/// projection, backtracking line search). Every accepted step lowers the loss.
WeightSolution optimize_weights(const LossContext& ctx, const WeightSchedule& init, const OptimizeOptions& opts = {});

/// Resamples a weight schedule to `steps` entries, interpolating linearly in s/S.
WeightSchedule interpolate_weights(const WeightSchedule& w, int steps);

/// Scales the guidance gain (zeta, or g for PiGDM) by `factor`.
WeightSchedule rescale_guidance(const WeightSchedule& w, double factor);

/// Solves on each rung of opts.ladder (the last rung must equal the context's
/// step count). Each rung starts from the previous solution, interpolated and
/// with its guidance gain scaled by S_prev / S so the total guidance is kept.
WeightSolution iterative_ladder(const LossContext& ctx, const OptimizeOptions& opts);

struct ReducedProblem {
  SpectralPrior prior;
  DegradationSpec spec;
  std::vector<Index> bins;
};

/// Keeps the k bins with the largest lambda0 (ties to the lower index),
/// in increasing bin order.
ReducedProblem reduce_dimensions(const SpectralPrior& prior, const DegradationSpec& spec, Index keep_dims);
Observation reduce_observation(const Observation& obs, const std::vector<Index>& bins);
LossContext reduce_context(const LossContext& ctx, Index keep_dims);

}  // namespace specpost
