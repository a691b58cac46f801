#pragma once

#include <vector>

#include "specpost/spectral_model.hpp"

namespace specpost {

/// Cumulative noise levels alpha_bar for a DDIM run, indexed by sampling step
/// s = 1..S (stored at s-1). s = S is the noisiest step and is applied first.
class Schedule {
 public:
  Schedule(RealVector alpha_bar, std::vector<int> timesteps, int t_full);

  int steps() const { return static_cast<int>(alpha_bar_.size()); }
  int t_full() const { return t_full_; }
  /// alpha_bar at sampling step s (1-based).
  double alpha_bar(int s) const;
  /// alpha_bar at step s-1, with alpha_bar_0 = 1 terminating at the denoised estimate.
  double alpha_bar_prev(int s) const;
  const RealVector& alpha_bars() const { return alpha_bar_; }
  /// Index into the full DDPM schedule (1-based) for each sampling step.
  const std::vector<int>& timesteps() const { return timesteps_; }

 private:
  RealVector alpha_bar_;
  std::vector<int> timesteps_;
  int t_full_;
};

struct ScalarCoeffs {
  double a;
  double b;
};

/// a_s, b_s of the deterministic DDIM update x_{s-1} = a_s x_s + b_s x0_hat.
struct StepCoeffs {
  double a = 0.0;
  double b = 0.0;
  RealVector c;
  RealVector d;
};

inline constexpr double kBetaStart = 1e-4;
inline constexpr double kBetaEnd = 0.02;
inline constexpr int kDefaultDiffusionSteps = 1000;

/// Full linear-beta DDPM schedule of length T.
Schedule linear_ddpm_schedule(int t_full = kDefaultDiffusionSteps);

/// S uniformly spaced steps round(k*T/S), k = 1..S, of a full schedule.
Schedule ddim_subsequence(const Schedule& full, int steps);

ScalarCoeffs ddim_coeffs(double alpha_bar_prev, double alpha_bar);
ScalarCoeffs step_coeffs_scalar(const Schedule& sched, int s);

/// Per-bin coefficients of the prior-optimal denoiser,
/// F x0* = c * x_s^F + d * mu0^F.
void denoiser_coeffs(double alpha_bar, const RealVector& lambda0, RealVector& c, RealVector& d);

StepCoeffs step_coeffs(const Schedule& sched, int s, const SpectralPrior& prior);

}  // namespace specpost
