#include "specpost/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "specpost/errors.hpp"

namespace specpost {

Schedule::Schedule(RealVector alpha_bar, std::vector<int> timesteps, int t_full)
    : alpha_bar_(std::move(alpha_bar)), timesteps_(std::move(timesteps)), t_full_(t_full) {
  if (alpha_bar_.size() == 0) throw std::invalid_argument("schedule must have at least one step");
  if (static_cast<Index>(timesteps_.size()) != alpha_bar_.size()) {
    throw std::invalid_argument("schedule timesteps/alpha_bar size mismatch");
  }
  for (Index i = 0; i < alpha_bar_.size(); ++i) {
    if (!(alpha_bar_[i] > 0.0 && alpha_bar_[i] <= 1.0)) {
      throw std::invalid_argument(fmt::format("alpha_bar[{}] = {} outside (0, 1]", i + 1, alpha_bar_[i]));
    }
    if (i > 0 && !(alpha_bar_[i] < alpha_bar_[i - 1])) {
      throw std::invalid_argument(fmt::format("alpha_bar not strictly decreasing at step {}", i + 1));
    }
  }
}

double Schedule::alpha_bar(int s) const {
  if (s < 1 || s > steps()) throw std::out_of_range(fmt::format("step {} outside 1..{}", s, steps()));
  return alpha_bar_[s - 1];
}

double Schedule::alpha_bar_prev(int s) const {
  if (s < 1 || s > steps()) throw std::out_of_range(fmt::format("step {} outside 1..{}", s, steps()));
  return s == 1 ? 1.0 : alpha_bar_[s - 2];
}

Schedule linear_ddpm_schedule(int t_full) {
  if (t_full < 1) throw std::invalid_argument("T must be >= 1");
  RealVector alpha_bar(t_full);
  std::vector<int> timesteps(static_cast<std::size_t>(t_full));
  double prod = 1.0;
  for (int t = 0; t < t_full; ++t) {
    const double beta = t_full == 1 ? kBetaStart
                                    : kBetaStart + (kBetaEnd - kBetaStart) * t / static_cast<double>(t_full - 1);
    prod *= 1.0 - beta;
    alpha_bar[t] = prod;
    timesteps[static_cast<std::size_t>(t)] = t + 1;
  }
  return Schedule(std::move(alpha_bar), std::move(timesteps), t_full);
}

Schedule ddim_subsequence(const Schedule& full, int steps) {
  const int t_full = full.steps();
  if (steps < 1 || steps > t_full) {
    throw std::invalid_argument(fmt::format("DDIM steps {} outside 1..{}", steps, t_full));
  }
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(steps));
  for (int k = 1; k <= steps; ++k) {
    const int t = static_cast<int>(std::llround(static_cast<double>(k) * t_full / steps));
    if (picked.empty() || picked.back() != t) picked.push_back(t);
  }
  RealVector alpha_bar(static_cast<Index>(picked.size()));
  std::vector<int> timesteps;
  for (std::size_t i = 0; i < picked.size(); ++i) {
    alpha_bar[static_cast<Index>(i)] = full.alpha_bar(picked[i]);
    timesteps.push_back(full.timesteps()[static_cast<std::size_t>(picked[i] - 1)]);
  }
  return Schedule(std::move(alpha_bar), std::move(timesteps), full.t_full());
}

ScalarCoeffs ddim_coeffs(double alpha_bar_prev, double alpha_bar) {
  if (alpha_bar >= 1.0) throw NumericalError("division by zero noise");
  const double a = std::sqrt(1.0 - alpha_bar_prev) / std::sqrt(1.0 - alpha_bar);
  const double b = std::sqrt(alpha_bar_prev) - std::sqrt(alpha_bar) * a;
  return {a, b};
}

ScalarCoeffs step_coeffs_scalar(const Schedule& sched, int s) {
  return ddim_coeffs(sched.alpha_bar_prev(s), sched.alpha_bar(s));
}

void denoiser_coeffs(double alpha_bar, const RealVector& lambda0, RealVector& c, RealVector& d) {
  const Index n = lambda0.size();
  c.resize(n);
  d.resize(n);
  const double root = std::sqrt(alpha_bar);
  for (Index i = 0; i < n; ++i) {
    const double denom = alpha_bar * lambda0[i] + (1.0 - alpha_bar);
    if (denom <= 0.0) throw NumericalError(fmt::format("denoiser undefined at bin {} (alpha_bar = 1, lambda = 0)", i));
    c[i] = root * lambda0[i] / denom;
    d[i] = (1.0 - alpha_bar) / denom;
  }
}

StepCoeffs step_coeffs(const Schedule& sched, int s, const SpectralPrior& prior) {
  const ScalarCoeffs ab = step_coeffs_scalar(sched, s);
  StepCoeffs out;
  out.a = ab.a;
  out.b = ab.b;
  denoiser_coeffs(sched.alpha_bar(s), prior.lambda0(), out.c, out.d);
  return out;
}

}  // namespace specpost
