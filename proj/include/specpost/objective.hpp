#pragma once

#include <vector>

#include "specpost/schedule.hpp"
#include "specpost/spectral_model.hpp"
#include "specpost/transfer.hpp"

namespace specpost {

/// Which spectrum the output standard deviation |D1| is matched against.
/// `Posterior` compares with the true posterior; `Prior` uses sqrt(lambda0)
/// as printed in the closed-form loss.
enum class VarianceReference { Posterior, Prior };

struct LossContext {
  SpectralPrior prior;
  DegradationSpec spec;
  Schedule schedule;
  SamplerKind kind = SamplerKind::Dps;
  std::vector<Observation> observations;
  bool analytic_average = false;
  VarianceReference variance_ref = VarianceReference::Posterior;

  static LossContext for_observations(SpectralPrior prior, DegradationSpec spec, Schedule schedule, SamplerKind kind,
                                      std::vector<Observation> observations);
  static LossContext averaged(SpectralPrior prior, DegradationSpec spec, Schedule schedule, SamplerKind kind);

  LossContext with_schedule(Schedule s) const;
  void validate() const;
};

struct WienerGain {
  ComplexVector A;
};

double w2_diag(const DiagGaussian& p, const DiagGaussian& q);
WienerGain wiener_gain(const SpectralPrior& prior, const DegradationSpec& spec);

/// Square root of the reference spectrum selected by `ref`.
RealVector reference_std(const SpectralPrior& prior, const DegradationSpec& spec, VarianceReference ref);

/// Squared W2 between the sampler output for `triple` and the true posterior
/// for `obs`, written per bin in terms of D2 - A and D3 - I + A h.
double realization_loss(const TransferTriple& triple, const SpectralPrior& prior, const DegradationSpec& spec,
                        const Observation& obs, VarianceReference ref = VarianceReference::Posterior);

/// Expectation of `realization_loss` over y ~ p(y).
double averaged_loss_analytic(const TransferTriple& triple, const SpectralPrior& prior, const DegradationSpec& spec,
                              VarianceReference ref = VarianceReference::Posterior);

double realization_loss(const WeightSchedule& weights, const LossContext& ctx);
double averaged_loss_analytic(const WeightSchedule& weights, const LossContext& ctx);
double averaged_loss_empirical(const WeightSchedule& weights, const LossContext& ctx);

/// Loss of an arbitrary triple under the context (mean over observations, or the analytic average).
double triple_loss(const TransferTriple& triple, const LossContext& ctx);

/// Dispatches on the context: analytic average, or mean over its observations.
double evaluate_loss(const WeightSchedule& weights, const LossContext& ctx);

/// Loss plus its exact gradient with respect to weights.params().
double loss_and_gradient(const WeightSchedule& weights, const LossContext& ctx, RealVector& grad);

}  // namespace specpost
