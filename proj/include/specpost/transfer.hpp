#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "specpost/schedule.hpp"
#include "specpost/spectral_model.hpp"

namespace specpost {

enum class SamplerKind { Dps, Pigdm };

std::string_view to_string(SamplerKind kind);
SamplerKind sampler_kind_from_string(std::string_view name);

/// Guidance weights per sampling step s = 1..S (stored at s-1).
/// DPS uses `zeta`; PiGDM uses the guidance gain `g` and uncertainty `r`.
struct WeightSchedule {
  SamplerKind kind = SamplerKind::Dps;
  RealVector zeta;
  RealVector g;
  RealVector r;

  static WeightSchedule dps(RealVector zeta);
  static WeightSchedule pigdm(RealVector g, RealVector r);

  int steps() const;
  /// Flat parameter vector: zeta, or [g; r].
  RealVector params() const;
  static WeightSchedule from_params(SamplerKind kind, const RealVector& params);
};

/// PiGDM's schedule-driven choice r_s = sqrt(1 - alpha_bar_s), with the
/// guidance weighted by g_s = r_s^2.
WeightSchedule pigdm_heuristic_weights(const Schedule& sched);

/// One DDIM step in the spectral domain:
///   x_{s-1}^F = G x_s^F + Q y^F + M mu0^F   (elementwise).
struct StepTransfer {
  ComplexVector G;
  ComplexVector Q;
  ComplexVector M;
};

/// The composed map x0^F = D1 x_S^F + D2 y^F + D3 mu0^F.
struct TransferTriple {
  ComplexVector D1;
  ComplexVector D2;
  ComplexVector D3;
};

/// Derivatives of (G, Q, M) with respect to one scalar weight of a step.
struct StepSensitivity {
  ComplexVector dG;
  ComplexVector dQ;
  ComplexVector dM;
};

ComplexVector prior_optimal_denoise(const SpectralPrior& prior, const ComplexVector& x_t_f, double alpha_bar_t);

/// MAP estimate of x0 given x_t and y (a per-bin Wiener filter).
ComplexVector posterior_optimal_denoise(const SpectralPrior& prior, const DegradationSpec& spec,
                                        const ComplexVector& y_f, const ComplexVector& x_t_f, double alpha_bar_t);

StepTransfer dps_step_transfer(const StepCoeffs& coeffs, const DegradationSpec& spec, double zeta);
StepTransfer pigdm_step_transfer(const StepCoeffs& coeffs, const DegradationSpec& spec, double g, double r);
StepTransfer optimal_step_transfer(const StepCoeffs& coeffs, const DegradationSpec& spec, const SpectralPrior& prior,
                                   double alpha_bar_s);

StepSensitivity dps_step_sensitivity(const StepCoeffs& coeffs, const DegradationSpec& spec);
/// Returns {d/dg, d/dr}.
std::pair<StepSensitivity, StepSensitivity> pigdm_step_sensitivity(const StepCoeffs& coeffs,
                                                                   const DegradationSpec& spec, double g, double r);

/// Composes steps given in application order (the step for s = S first).
TransferTriple compose_transfer(std::span<const StepTransfer> steps);

DiagGaussian output_distribution(const TransferTriple& triple, const Observation& obs, const SpectralPrior& prior);

/// Per-step transfers in application order (s = S, ..., 1).
std::vector<StepTransfer> sampler_steps(const Schedule& sched, const SpectralPrior& prior, const DegradationSpec& spec,
                                        const WeightSchedule& weights);
std::vector<StepTransfer> ideal_steps(const Schedule& sched, const SpectralPrior& prior, const DegradationSpec& spec);
std::vector<StepTransfer> prior_only_steps(const Schedule& sched, const SpectralPrior& prior);

TransferTriple sampler_transfer(const Schedule& sched, const SpectralPrior& prior, const DegradationSpec& spec,
                                const WeightSchedule& weights);
TransferTriple ideal_transfer(const Schedule& sched, const SpectralPrior& prior, const DegradationSpec& spec);
TransferTriple prior_only_transfer(const Schedule& sched, const SpectralPrior& prior);

ComplexVector apply_step(const StepTransfer& step, const ComplexVector& x_f, const ComplexVector& y_f,
                         const ComplexVector& mu_f);
ComplexVector apply_transfer(const TransferTriple& triple, const ComplexVector& x_S_f, const ComplexVector& y_f,
                             const ComplexVector& mu_f);

}  // namespace specpost
