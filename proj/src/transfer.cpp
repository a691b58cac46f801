#include "specpost/transfer.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "specpost/errors.hpp"

namespace specpost {

std::string_view to_string(SamplerKind kind) {
  switch (kind) {
    case SamplerKind::Dps: return "dps";
    case SamplerKind::Pigdm: return "pigdm";
  }
  return "unknown";
}

SamplerKind sampler_kind_from_string(std::string_view name) {
  if (name == "dps" || name == "DPS") return SamplerKind::Dps;
  if (name == "pigdm" || name == "PIGDM") return SamplerKind::Pigdm;
  throw std::invalid_argument(fmt::format("unknown sampler kind '{}'", name));
}

WeightSchedule WeightSchedule::dps(RealVector zeta) {
  WeightSchedule w;
  w.kind = SamplerKind::Dps;
  w.zeta = std::move(zeta);
  return w;
}

WeightSchedule WeightSchedule::pigdm(RealVector g, RealVector r) {
  if (g.size() != r.size()) throw std::invalid_argument("PiGDM g and r must have equal length");
  for (Index i = 0; i < r.size(); ++i) {
    if (!(r[i] >= 0.0)) throw std::invalid_argument(fmt::format("PiGDM r[{}] = {} is negative", i + 1, r[i]));
  }
  WeightSchedule w;
  w.kind = SamplerKind::Pigdm;
  w.g = std::move(g);
  w.r = std::move(r);
  return w;
}

int WeightSchedule::steps() const {
  return static_cast<int>(kind == SamplerKind::Dps ? zeta.size() : g.size());
}

RealVector WeightSchedule::params() const {
  if (kind == SamplerKind::Dps) return zeta;
  RealVector p(g.size() + r.size());
  p << g, r;
  return p;
}

WeightSchedule WeightSchedule::from_params(SamplerKind kind, const RealVector& params) {
  if (kind == SamplerKind::Dps) return dps(params);
  if (params.size() % 2 != 0) throw std::invalid_argument("PiGDM parameter vector must have even length");
  const Index s = params.size() / 2;
  return pigdm(params.head(s), params.tail(s));
}

WeightSchedule pigdm_heuristic_weights(const Schedule& sched) {
  const int steps = sched.steps();
  RealVector g(steps);
  RealVector r(steps);
  for (int s = 1; s <= steps; ++s) {
    g[s - 1] = 1.0 - sched.alpha_bar(s);
    r[s - 1] = std::sqrt(g[s - 1]);
  }
  return WeightSchedule::pigdm(std::move(g), std::move(r));
}

ComplexVector prior_optimal_denoise(const SpectralPrior& prior, const ComplexVector& x_t_f, double alpha_bar_t) {
  const Index d = prior.dim();
  if (x_t_f.size() != d) throw std::invalid_argument("prior_optimal_denoise: dimension mismatch");
  if (alpha_bar_t < 0.0 || alpha_bar_t > 1.0) throw std::invalid_argument("alpha_bar outside [0, 1]");
  ComplexVector out(d);
  const double root = std::sqrt(alpha_bar_t);
  for (Index i = 0; i < d; ++i) {
    const double lambda = prior.lambda0()[i];
    const double denom = alpha_bar_t * lambda + (1.0 - alpha_bar_t);
    if (denom == 0.0) {  // alpha_bar = 1 on a dead bin: identity limit
      out[i] = x_t_f[i];
      continue;
    }
    out[i] = (root * lambda * x_t_f[i] + (1.0 - alpha_bar_t) * prior.mu_f()[i]) / denom;
  }
  return out;
}

ComplexVector posterior_optimal_denoise(const SpectralPrior& prior, const DegradationSpec& spec,
                                        const ComplexVector& y_f, const ComplexVector& x_t_f, double alpha_bar_t) {
  const Index d = prior.dim();
  if (spec.dim() != d || y_f.size() != d || x_t_f.size() != d) {
    throw std::invalid_argument("posterior_optimal_denoise: dimension mismatch");
  }
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  const double root = std::sqrt(alpha_bar_t);
  ComplexVector out(d);
  for (Index i = 0; i < d; ++i) {
    const double lambda = prior.lambda0()[i];
    const Complex h = spec.lambda_h()[i];
    const double denom = (1.0 - alpha_bar_t) * lambda * std::norm(h) + noise_var * alpha_bar_t * lambda +
                         noise_var * (1.0 - alpha_bar_t);
    if (denom == 0.0) throw NumericalError(fmt::format("posterior denoiser degenerate at bin {}", i));
    out[i] = ((1.0 - alpha_bar_t) * lambda * std::conj(h) * y_f[i] + noise_var * root * lambda * x_t_f[i] +
              noise_var * (1.0 - alpha_bar_t) * prior.mu_f()[i]) /
             denom;
  }
  return out;
}

StepTransfer dps_step_transfer(const StepCoeffs& k, const DegradationSpec& spec, double zeta) {
  const Index d = k.c.size();
  if (spec.dim() != d) throw std::invalid_argument("dps_step_transfer: dimension mismatch");
  StepTransfer t{ComplexVector(d), ComplexVector(d), ComplexVector(d)};
  for (Index i = 0; i < d; ++i) {
    const Complex h = spec.lambda_h()[i];
    const double c = k.c[i];
    const double h2 = std::norm(h);
    t.G[i] = k.a + k.b * c - 2.0 * zeta * c * c * h2;
    t.Q[i] = 2.0 * zeta * c * std::conj(h);
    t.M[i] = k.b * k.d[i] - 2.0 * zeta * c * h2 * k.d[i];
  }
  return t;
}

StepSensitivity dps_step_sensitivity(const StepCoeffs& k, const DegradationSpec& spec) {
  const Index d = k.c.size();
  StepSensitivity s{ComplexVector(d), ComplexVector(d), ComplexVector(d)};
  for (Index i = 0; i < d; ++i) {
    const Complex h = spec.lambda_h()[i];
    const double c = k.c[i];
    s.dG[i] = -2.0 * c * c * std::norm(h);
    s.dQ[i] = 2.0 * c * std::conj(h);
    s.dM[i] = -2.0 * c * std::norm(h) * k.d[i];
  }
  return s;
}

namespace {

double pigdm_gain(double h2, double noise_var, double r, Index bin) {
  const double denom = r * r * h2 + noise_var;
  if (denom <= 0.0) throw NumericalError(fmt::format("PiGDM likelihood covariance vanishes at bin {}", bin));
  return 1.0 / denom;
}

}  // namespace

StepTransfer pigdm_step_transfer(const StepCoeffs& k, const DegradationSpec& spec, double g, double r) {
  const Index d = k.c.size();
  if (spec.dim() != d) throw std::invalid_argument("pigdm_step_transfer: dimension mismatch");
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  StepTransfer t{ComplexVector(d), ComplexVector(d), ComplexVector(d)};
  for (Index i = 0; i < d; ++i) {
    const Complex h = spec.lambda_h()[i];
    const double h2 = std::norm(h);
    const double c = k.c[i];
    const double e = pigdm_gain(h2, noise_var, r, i);
    t.G[i] = k.a + k.b * c - g * c * c * h2 * e;
    t.Q[i] = g * c * std::conj(h) * e;
    t.M[i] = k.b * k.d[i] - g * c * h2 * k.d[i] * e;
  }
  return t;
}

std::pair<StepSensitivity, StepSensitivity> pigdm_step_sensitivity(const StepCoeffs& k, const DegradationSpec& spec,
                                                                   double g, double r) {
  const Index d = k.c.size();
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  StepSensitivity dg{ComplexVector(d), ComplexVector(d), ComplexVector(d)};
  StepSensitivity dr{ComplexVector(d), ComplexVector(d), ComplexVector(d)};
  for (Index i = 0; i < d; ++i) {
    const Complex h = spec.lambda_h()[i];
    const double h2 = std::norm(h);
    const double c = k.c[i];
    const double e = pigdm_gain(h2, noise_var, r, i);
    const double de_dr = -2.0 * r * h2 * e * e;
    dg.dG[i] = -c * c * h2 * e;
    dg.dQ[i] = c * std::conj(h) * e;
    dg.dM[i] = -c * h2 * k.d[i] * e;
    dr.dG[i] = -g * c * c * h2 * de_dr;
    dr.dQ[i] = g * c * std::conj(h) * de_dr;
    dr.dM[i] = -g * c * h2 * k.d[i] * de_dr;
  }
  return {dg, dr};
}

StepTransfer optimal_step_transfer(const StepCoeffs& k, const DegradationSpec& spec, const SpectralPrior& prior,
                                   double alpha_bar_s) {
  const Index d = prior.dim();
  if (spec.dim() != d || k.c.size() != d) throw std::invalid_argument("optimal_step_transfer: dimension mismatch");
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  const double root = std::sqrt(alpha_bar_s);
  StepTransfer t{ComplexVector(d), ComplexVector(d), ComplexVector(d)};
  for (Index i = 0; i < d; ++i) {
    const double lambda = prior.lambda0()[i];
    const Complex h = spec.lambda_h()[i];
    const double lambda_sum = (1.0 - alpha_bar_s) * lambda * std::norm(h) + noise_var * alpha_bar_s * lambda +
                              noise_var * (1.0 - alpha_bar_s);
    if (lambda_sum == 0.0) throw NumericalError(fmt::format("ideal sampler step degenerate at bin {}", i));
    t.G[i] = k.a + k.b * noise_var * root * lambda / lambda_sum;
    t.Q[i] = k.b * (1.0 - alpha_bar_s) * lambda * std::conj(h) / lambda_sum;
    t.M[i] = k.b * noise_var * (1.0 - alpha_bar_s) / lambda_sum;
  }
  return t;
}

TransferTriple compose_transfer(std::span<const StepTransfer> steps) {
  if (steps.empty()) throw std::invalid_argument("compose_transfer needs at least one step");
  const Index d = steps.front().G.size();
  TransferTriple out{ComplexVector::Ones(d), ComplexVector::Zero(d), ComplexVector::Zero(d)};
  for (const StepTransfer& step : steps) {
    if (step.G.size() != d) throw std::invalid_argument("compose_transfer: inconsistent dimensions");
    out.D1.array() *= step.G.array();
    out.D2 = (step.G.array() * out.D2.array() + step.Q.array()).matrix();
    out.D3 = (step.G.array() * out.D3.array() + step.M.array()).matrix();
  }
  return out;
}

DiagGaussian output_distribution(const TransferTriple& triple, const Observation& obs, const SpectralPrior& prior) {
  ComplexVector mean = (triple.D2.array() * obs.y_f.array() + triple.D3.array() * prior.mu_f().array()).matrix();
  RealVector var = triple.D1.cwiseAbs2();
  return DiagGaussian(std::move(mean), std::move(var), prior.signal_length());
}

std::vector<StepTransfer> sampler_steps(const Schedule& sched, const SpectralPrior& prior,
                                        const DegradationSpec& spec, const WeightSchedule& weights) {
  const int steps = sched.steps();
  if (weights.steps() != steps) {
    throw std::invalid_argument(fmt::format("weight schedule has {} steps, schedule has {}", weights.steps(), steps));
  }
  std::vector<StepTransfer> out;
  out.reserve(static_cast<std::size_t>(steps));
  for (int s = steps; s >= 1; --s) {
    const StepCoeffs k = step_coeffs(sched, s, prior);
    if (weights.kind == SamplerKind::Dps) {
      out.push_back(dps_step_transfer(k, spec, weights.zeta[s - 1]));
    } else {
      out.push_back(pigdm_step_transfer(k, spec, weights.g[s - 1], weights.r[s - 1]));
    }
  }
  return out;
}

std::vector<StepTransfer> ideal_steps(const Schedule& sched, const SpectralPrior& prior, const DegradationSpec& spec) {
  std::vector<StepTransfer> out;
  for (int s = sched.steps(); s >= 1; --s) {
    out.push_back(optimal_step_transfer(step_coeffs(sched, s, prior), spec, prior, sched.alpha_bar(s)));
  }
  return out;
}

std::vector<StepTransfer> prior_only_steps(const Schedule& sched, const SpectralPrior& prior) {
  const Index d = prior.dim();
  std::vector<StepTransfer> out;
  for (int s = sched.steps(); s >= 1; --s) {
    const StepCoeffs k = step_coeffs(sched, s, prior);
    StepTransfer t;
    t.G = (k.a + k.b * k.c.array()).cast<Complex>().matrix();
    t.Q = ComplexVector::Zero(d);
    t.M = (k.b * k.d.array()).cast<Complex>().matrix();
    out.push_back(std::move(t));
  }
  return out;
}

TransferTriple sampler_transfer(const Schedule& sched, const SpectralPrior& prior, const DegradationSpec& spec,
                                const WeightSchedule& weights) {
  return compose_transfer(sampler_steps(sched, prior, spec, weights));
}

TransferTriple ideal_transfer(const Schedule& sched, const SpectralPrior& prior, const DegradationSpec& spec) {
  return compose_transfer(ideal_steps(sched, prior, spec));
}

TransferTriple prior_only_transfer(const Schedule& sched, const SpectralPrior& prior) {
  return compose_transfer(prior_only_steps(sched, prior));
}

ComplexVector apply_step(const StepTransfer& step, const ComplexVector& x_f, const ComplexVector& y_f,
                         const ComplexVector& mu_f) {
  return (step.G.array() * x_f.array() + step.Q.array() * y_f.array() + step.M.array() * mu_f.array()).matrix();
}

ComplexVector apply_transfer(const TransferTriple& t, const ComplexVector& x_S_f, const ComplexVector& y_f,
                             const ComplexVector& mu_f) {
  return (t.D1.array() * x_S_f.array() + t.D2.array() * y_f.array() + t.D3.array() * mu_f.array()).matrix();
}

}  // namespace specpost
