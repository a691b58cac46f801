#include "specpost/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <stdexcept>

#include <fmt/core.h>

#include "specpost/errors.hpp"

namespace specpost {

void OptimizeOptions::validate() const {
  if (!(lo < hi)) throw std::invalid_argument(fmt::format("bounds [{}, {}] are empty", lo, hi));
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(f_tol > 0.0)) throw std::invalid_argument("f_tol must be > 0");
  if (!(grad_step > 0.0)) throw std::invalid_argument("grad_step must be > 0");
  if (history < 1) throw std::invalid_argument("history must be >= 1");
}

RealVector finite_diff_gradient(const ScalarFunction& f, const RealVector& theta, double h, bool relative) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step must be > 0");
  RealVector grad(theta.size());
  RealVector x = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const double step = relative ? h * std::max(1.0, std::abs(theta[i])) : h;
    x[i] = theta[i] + step;
    const double fp = f(x);
    x[i] = theta[i] - step;
    const double fm = f(x);
    x[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError(fmt::format("non-finite function value at coordinate {}", i));
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

WeightSchedule default_init(SamplerKind kind, const Schedule& sched) {
  if (kind == SamplerKind::Dps) return WeightSchedule::dps(RealVector::Constant(sched.steps(), 0.1));
  return pigdm_heuristic_weights(sched);
}

std::pair<RealVector, RealVector> param_bounds(SamplerKind kind, int steps, const OptimizeOptions& opts) {
  const Index n = kind == SamplerKind::Dps ? steps : 2 * steps;
  RealVector lo = RealVector::Constant(n, opts.lo);
  RealVector hi = RealVector::Constant(n, opts.hi);
  if (kind == SamplerKind::Pigdm) lo.tail(steps) = lo.tail(steps).cwiseMax(0.0);
  return {lo, hi};
}

namespace {

struct Evaluator {
  const LossContext& ctx;
  const OptimizeOptions& opts;

  double operator()(const RealVector& x, RealVector& g) const {
    const WeightSchedule w = WeightSchedule::from_params(ctx.kind, x);
    if (opts.analytic_gradient) return loss_and_gradient(w, ctx, g);
    auto f = [&](const RealVector& p) { return evaluate_loss(WeightSchedule::from_params(ctx.kind, p), ctx); };
    g = finite_diff_gradient(f, x, opts.grad_step, true);
    return f(x);
  }
};

RealVector project(const RealVector& x, const RealVector& lo, const RealVector& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

// Mask of coordinates that are free to move: not pinned at a bound by a
// gradient pointing outward.
Eigen::Array<bool, Eigen::Dynamic, 1> free_mask(const RealVector& x, const RealVector& g, const RealVector& lo,
                                                const RealVector& hi) {
  Eigen::Array<bool, Eigen::Dynamic, 1> free(x.size());
  for (Index i = 0; i < x.size(); ++i) free[i] = !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0));
  return free;
}

RealVector masked(const RealVector& v, const Eigen::Array<bool, Eigen::Dynamic, 1>& mask) {
  return mask.select(v.array(), 0.0).matrix();
}

struct Pair {
  RealVector s;
  RealVector y;
};

RealVector lbfgs_direction(const RealVector& g, const std::deque<Pair>& mem,
                           const Eigen::Array<bool, Eigen::Dynamic, 1>& free) {
  RealVector q = masked(g, free);
  std::vector<double> alpha(mem.size());
  for (std::size_t k = mem.size(); k-- > 0;) {
    const RealVector s = masked(mem[k].s, free);
    const RealVector y = masked(mem[k].y, free);
    const double sy = s.dot(y);
    if (sy <= 0.0) {
      alpha[k] = 0.0;
      continue;
    }
    alpha[k] = s.dot(q) / sy;
    q -= alpha[k] * y;
  }
  double gamma = 1.0;
  if (!mem.empty()) {
    const RealVector s = masked(mem.back().s, free);
    const RealVector y = masked(mem.back().y, free);
    if (s.dot(y) > 0.0 && y.squaredNorm() > 0.0) gamma = s.dot(y) / y.squaredNorm();
  }
  RealVector r = gamma * q;
  for (std::size_t k = 0; k < mem.size(); ++k) {
    const RealVector s = masked(mem[k].s, free);
    const RealVector y = masked(mem[k].y, free);
    const double sy = s.dot(y);
    if (sy <= 0.0) continue;
    const double beta = y.dot(r) / sy;
    r += (alpha[k] - beta) * s;
  }
  return -r;
}

}  // namespace

WeightSolution optimize_weights(const LossContext& ctx, const WeightSchedule& init, const OptimizeOptions& opts) {
  opts.validate();
  if (init.kind != ctx.kind) throw std::invalid_argument("initial weights have the wrong sampler kind");
  if (init.steps() != ctx.schedule.steps()) {
    throw std::invalid_argument(
        fmt::format("initial weights have {} steps, schedule has {}", init.steps(), ctx.schedule.steps()));
  }
  if (opts.keep_dims && *opts.keep_dims < ctx.prior.dim()) {
    OptimizeOptions inner = opts;
    inner.keep_dims.reset();
    WeightSolution sol = optimize_weights(reduce_context(ctx, *opts.keep_dims), init, inner);
    if (opts.report_exact) sol.final_loss = evaluate_loss(sol.weights, ctx);
    return sol;
  }

  const auto start = std::chrono::steady_clock::now();
  const auto [lo, hi] = param_bounds(ctx.kind, ctx.schedule.steps(), opts);
  const Evaluator eval{ctx, opts};

  RealVector x = project(init.params(), lo, hi);
  RealVector g;
  double f;
  try {
    f = eval(x, g);
  } catch (const NumericalError&) {
    throw NumericalError("invalid starting point");
  }
  if (!std::isfinite(f) || !g.allFinite()) throw NumericalError("invalid starting point");

  WeightSolution sol;
  sol.initial_loss = f;
  sol.trace.emplace_back(0, f);
  std::deque<Pair> mem;
  constexpr double kArmijo = 1e-4;

  int it = 0;
  while (it < opts.max_iters) {
    const auto free = free_mask(x, g, lo, hi);
    const RealVector pg = masked(g, free);
    if (pg.lpNorm<Eigen::Infinity>() <= 1e-14) {
      sol.converged = true;
      break;
    }
    RealVector dir = lbfgs_direction(g, mem, free);
    bool steepest = mem.empty() || dir.dot(pg) >= 0.0;
    if (steepest) {
      mem.clear();
      dir = -pg / pg.norm();
    }

    bool accepted = false;
    RealVector x_new, g_new;
    double f_new = f;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      double t = 1.0;
      for (int k = 0; k < 60; ++k, t *= 0.5) {
        x_new = project(x + t * dir, lo, hi);
        const RealVector step = x_new - x;
        if (step.lpNorm<Eigen::Infinity>() == 0.0) break;
        double trial;
        RealVector g_trial;
        try {
          trial = eval(x_new, g_trial);
        } catch (const NumericalError&) {
          continue;
        }
        if (std::isfinite(trial) && trial <= f + kArmijo * std::min(0.0, g.dot(step)) && trial <= f) {
          f_new = trial;
          g_new = std::move(g_trial);
          accepted = true;
          break;
        }
      }
      if (!accepted && !steepest) {
        mem.clear();
        steepest = true;
        dir = -pg / pg.norm();
      } else {
        break;
      }
    }
    if (!accepted) {
      sol.converged = true;
      break;
    }

    ++it;
    const RealVector s = x_new - x;
    const RealVector y = g_new - g;
    if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
      mem.push_back({s, y});
      if (static_cast<int>(mem.size()) > opts.history) mem.pop_front();
    }
    const double df = f - f_new;
    x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    sol.trace.emplace_back(it, f);
    if (df < opts.f_tol * std::max({1.0, std::abs(f), std::abs(f + df)})) {
      sol.converged = true;
      break;
    }
  }

  sol.weights = WeightSchedule::from_params(ctx.kind, x);
  sol.final_loss = f;
  sol.iterations = it;
  sol.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

namespace {

RealVector interpolate(const RealVector& v, int steps) {
  const Index n = v.size();
  RealVector out(steps);
  for (int s = 1; s <= steps; ++s) {
    // position s/steps mapped onto the old grid j/n, j = 1..n
    const double pos = static_cast<double>(s) / steps * static_cast<double>(n);
    if (pos <= 1.0) {
      out[s - 1] = v[0];
    } else if (pos >= static_cast<double>(n)) {
      out[s - 1] = v[n - 1];
    } else {
      const Index j = static_cast<Index>(std::floor(pos));
      const double frac = pos - static_cast<double>(j);
      out[s - 1] = (1.0 - frac) * v[j - 1] + frac * v[j];
    }
  }
  return out;
}

}  // namespace

WeightSchedule interpolate_weights(const WeightSchedule& w, int steps) {
  if (steps < 1) throw std::invalid_argument("interpolation target must have >= 1 step");
  if (w.steps() < 1) throw std::invalid_argument("cannot interpolate an empty schedule");
  if (w.kind == SamplerKind::Dps) return WeightSchedule::dps(interpolate(w.zeta, steps));
  return WeightSchedule::pigdm(interpolate(w.g, steps), interpolate(w.r, steps).cwiseMax(0.0));
}

WeightSchedule rescale_guidance(const WeightSchedule& w, double factor) {
  WeightSchedule out = w;
  if (out.kind == SamplerKind::Dps) {
    out.zeta *= factor;
  } else {
    out.g *= factor;
  }
  return out;
}

WeightSolution iterative_ladder(const LossContext& ctx, const OptimizeOptions& opts) {
  if (opts.ladder.empty()) throw std::invalid_argument("empty ladder");
  for (std::size_t i = 1; i < opts.ladder.size(); ++i) {
    if (opts.ladder[i] <= opts.ladder[i - 1]) throw std::invalid_argument("ladder must be strictly increasing");
  }
  if (opts.ladder.back() != ctx.schedule.steps()) {
    throw std::invalid_argument(
        fmt::format("ladder ends at {} but the schedule has {} steps", opts.ladder.back(), ctx.schedule.steps()));
  }
  const Schedule full = linear_ddpm_schedule(ctx.schedule.t_full());
  const auto start = std::chrono::steady_clock::now();
  WeightSolution sol;
  std::optional<WeightSchedule> prev;
  for (const int rung : opts.ladder) {
    const bool last = rung == opts.ladder.back();
    const LossContext rung_ctx = last ? ctx : ctx.with_schedule(ddim_subsequence(full, rung));
    WeightSchedule init = default_init(ctx.kind, rung_ctx.schedule);
    if (prev) {
      const double ratio = static_cast<double>(prev->steps()) / static_cast<double>(rung);
      const auto [lo, hi] = param_bounds(ctx.kind, rung, opts);
      const RealVector p = rescale_guidance(interpolate_weights(*prev, rung), ratio).params();
      init = WeightSchedule::from_params(ctx.kind, p.cwiseMax(lo).cwiseMin(hi));
    }
    sol = optimize_weights(rung_ctx, init, opts);
    prev = sol.weights;
  }
  sol.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return sol;
}

ReducedProblem reduce_dimensions(const SpectralPrior& prior, const DegradationSpec& spec, Index keep_dims) {
  const Index d = prior.dim();
  if (keep_dims < 1 || keep_dims > d) throw std::invalid_argument(fmt::format("keep_dims {} outside 1..{}", keep_dims, d));
  if (spec.dim() != d) throw std::invalid_argument("reduce_dimensions: dimension mismatch");
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return prior.lambda0()[a] > prior.lambda0()[b]; });
  std::vector<Index> bins(order.begin(), order.begin() + keep_dims);
  std::sort(bins.begin(), bins.end());
  ComplexVector mu(keep_dims), h(keep_dims);
  RealVector lambda(keep_dims);
  for (Index k = 0; k < keep_dims; ++k) {
    const Index b = bins[static_cast<std::size_t>(k)];
    mu[k] = prior.mu_f()[b];
    lambda[k] = prior.lambda0()[b];
    h[k] = spec.lambda_h()[b];
  }
  return {SpectralPrior(std::move(mu), std::move(lambda), prior.signal_length()), DegradationSpec(std::move(h), spec.sigma_y()),
          std::move(bins)};
}

Observation reduce_observation(const Observation& obs, const std::vector<Index>& bins) {
  Observation out;
  out.y_f.resize(static_cast<Index>(bins.size()));
  for (std::size_t k = 0; k < bins.size(); ++k) out.y_f[static_cast<Index>(k)] = obs.y_f[bins[k]];
  if (obs.ground_truth_f) {
    ComplexVector gt(static_cast<Index>(bins.size()));
    for (std::size_t k = 0; k < bins.size(); ++k) gt[static_cast<Index>(k)] = (*obs.ground_truth_f)[bins[k]];
    out.ground_truth_f = std::move(gt);
  }
  return out;
}

LossContext reduce_context(const LossContext& ctx, Index keep_dims) {
  ReducedProblem r = reduce_dimensions(ctx.prior, ctx.spec, keep_dims);
  std::vector<Observation> obs;
  for (const Observation& o : ctx.observations) obs.push_back(reduce_observation(o, r.bins));
  LossContext out{std::move(r.prior), std::move(r.spec), ctx.schedule, ctx.kind, std::move(obs)};
  out.analytic_average = ctx.analytic_average;
  out.variance_ref = ctx.variance_ref;
  return out;
}

}  // namespace specpost
