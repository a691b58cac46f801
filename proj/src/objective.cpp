#include "specpost/objective.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "specpost/errors.hpp"

namespace specpost {

LossContext LossContext::for_observations(SpectralPrior prior, DegradationSpec spec, Schedule schedule,
                                          SamplerKind kind, std::vector<Observation> observations) {
  LossContext ctx{std::move(prior), std::move(spec), std::move(schedule), kind, std::move(observations)};
  ctx.validate();
  return ctx;
}

LossContext LossContext::averaged(SpectralPrior prior, DegradationSpec spec, Schedule schedule, SamplerKind kind) {
  LossContext ctx{std::move(prior), std::move(spec), std::move(schedule), kind, {}};
  ctx.analytic_average = true;
  ctx.validate();
  return ctx;
}

LossContext LossContext::with_schedule(Schedule s) const {
  LossContext ctx = *this;
  ctx.schedule = std::move(s);
  return ctx;
}

void LossContext::validate() const {
  if (spec.dim() != prior.dim()) {
    throw std::invalid_argument(fmt::format("prior has {} bins, degradation {}", prior.dim(), spec.dim()));
  }
  if (!analytic_average && observations.empty()) throw std::invalid_argument("loss context needs K >= 1 observations");
  for (const Observation& obs : observations) {
    if (obs.y_f.size() != prior.dim()) throw std::invalid_argument("observation dimension mismatch");
  }
}

double w2_diag(const DiagGaussian& p, const DiagGaussian& q) {
  if (p.dim() != q.dim()) throw std::invalid_argument(fmt::format("w2_diag: dims {} and {}", p.dim(), q.dim()));
  if (p.signal_length != q.signal_length) throw std::invalid_argument("w2_diag: signal lengths differ");
  const double n = static_cast<double>(p.signal_length > 0 ? p.signal_length : p.dim());
  const double mean_term = (p.mean - q.mean).squaredNorm() / n;
  const double std_term = (p.var.cwiseSqrt() - q.var.cwiseSqrt()).squaredNorm();
  return std::sqrt(mean_term + std_term);
}

WienerGain wiener_gain(const SpectralPrior& prior, const DegradationSpec& spec) {
  const Index d = prior.dim();
  if (spec.dim() != d) throw std::invalid_argument("wiener_gain: dimension mismatch");
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  WienerGain w{ComplexVector(d)};
  for (Index i = 0; i < d; ++i) {
    const double lambda = prior.lambda0()[i];
    const Complex h = spec.lambda_h()[i];
    const double denom = lambda * std::norm(h) + noise_var;
    if (!(denom > 0.0)) throw NumericalError(fmt::format("Wiener gain degenerate at bin {}", i));
    w.A[i] = lambda * std::conj(h) / denom;
  }
  return w;
}

RealVector reference_std(const SpectralPrior& prior, const DegradationSpec& spec, VarianceReference ref) {
  if (ref == VarianceReference::Prior) return prior.lambda0().cwiseSqrt();
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  RealVector out(prior.dim());
  for (Index i = 0; i < prior.dim(); ++i) {
    const double lambda = prior.lambda0()[i];
    const double denom = lambda * std::norm(spec.lambda_h()[i]) + noise_var;
    const double var = denom > 0.0 ? lambda - lambda * lambda * std::norm(spec.lambda_h()[i]) / denom : lambda;
    out[i] = std::sqrt(std::max(0.0, var));
  }
  return out;
}

namespace {

// Loss as a function of (D1, D2, D3) plus, optionally, its gradient with
// respect to the real and imaginary parts of each entry packed as complex
// numbers (g = df/dRe + i df/dIm).
struct LossHead {
  double value = 0.0;
  ComplexVector g1, g2, g3;
};

double signal_len(const SpectralPrior& prior) { return static_cast<double>(prior.signal_length()); }

void add_std_term(const TransferTriple& t, const RealVector& ref_std, LossHead& head, bool want_grad) {
  for (Index i = 0; i < t.D1.size(); ++i) {
    const double mag = std::abs(t.D1[i]);
    const double diff = ref_std[i] - mag;
    head.value += diff * diff;
    if (want_grad && mag > 0.0) head.g1[i] += -2.0 * diff * t.D1[i] / mag;
  }
}

void add_realization_mean_term(const TransferTriple& t, const SpectralPrior& prior, const DegradationSpec& spec,
                               const WienerGain& w, const Observation& obs, double weight, LossHead& head,
                               bool want_grad) {
  const double n = signal_len(prior);
  for (Index i = 0; i < t.D1.size(); ++i) {
    const Complex mu = prior.mu_f()[i];
    const Complex y = obs.y_f[i];
    const Complex u = (t.D2[i] - w.A[i]) * y + (t.D3[i] - 1.0 + w.A[i] * spec.lambda_h()[i]) * mu;
    head.value += weight * std::norm(u) / n;
    if (want_grad) {
      head.g2[i] += weight * 2.0 * u * std::conj(y) / n;
      head.g3[i] += weight * 2.0 * u * std::conj(mu) / n;
    }
  }
}

void add_average_mean_term(const TransferTriple& t, const SpectralPrior& prior, const DegradationSpec& spec,
                           const WienerGain& w, LossHead& head, bool want_grad) {
  const double n = signal_len(prior);
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  for (Index i = 0; i < t.D1.size(); ++i) {
    const Complex h = spec.lambda_h()[i];
    const Complex mu = prior.mu_f()[i];
    const Complex m = t.D2[i] - w.A[i];
    // E[y] = h mu, so the bias collapses to (D2 h + D3 - 1) mu.
    const Complex u = (t.D2[i] * h + t.D3[i] - 1.0) * mu;
    const double spread = std::norm(h) * prior.lambda0()[i] + noise_var;
    head.value += std::norm(u) / n + std::norm(m) * spread;
    if (want_grad) {
      head.g2[i] += 2.0 * u * std::conj(h * mu) / n + 2.0 * m * spread;
      head.g3[i] += 2.0 * u * std::conj(mu) / n;
    }
  }
}

LossHead loss_head(const TransferTriple& t, const LossContext& ctx, bool want_grad) {
  const Index d = ctx.prior.dim();
  if (t.D1.size() != d) throw std::invalid_argument("triple dimension does not match the loss context");
  LossHead head;
  if (want_grad) {
    head.g1 = ComplexVector::Zero(d);
    head.g2 = ComplexVector::Zero(d);
    head.g3 = ComplexVector::Zero(d);
  }
  const WienerGain w = wiener_gain(ctx.prior, ctx.spec);
  add_std_term(t, reference_std(ctx.prior, ctx.spec, ctx.variance_ref), head, want_grad);
  if (ctx.analytic_average) {
    add_average_mean_term(t, ctx.prior, ctx.spec, w, head, want_grad);
  } else {
    const double weight = 1.0 / static_cast<double>(ctx.observations.size());
    for (const Observation& obs : ctx.observations) {
      add_realization_mean_term(t, ctx.prior, ctx.spec, w, obs, weight, head, want_grad);
    }
  }
  return head;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericalError(fmt::format("{} is not finite", what));
}

}  // namespace

double realization_loss(const TransferTriple& triple, const SpectralPrior& prior, const DegradationSpec& spec,
                        const Observation& obs, VarianceReference ref) {
  if (obs.y_f.size() != prior.dim() || triple.D1.size() != prior.dim()) {
    throw std::invalid_argument("realization_loss: dimension mismatch");
  }
  LossHead head;
  add_std_term(triple, reference_std(prior, spec, ref), head, false);
  add_realization_mean_term(triple, prior, spec, wiener_gain(prior, spec), obs, 1.0, head, false);
  return head.value;
}

double averaged_loss_analytic(const TransferTriple& triple, const SpectralPrior& prior, const DegradationSpec& spec,
                              VarianceReference ref) {
  if (triple.D1.size() != prior.dim()) throw std::invalid_argument("averaged_loss_analytic: dimension mismatch");
  LossHead head;
  add_std_term(triple, reference_std(prior, spec, ref), head, false);
  add_average_mean_term(triple, prior, spec, wiener_gain(prior, spec), head, false);
  return head.value;
}

double realization_loss(const WeightSchedule& weights, const LossContext& ctx) {
  if (ctx.observations.size() != 1) {
    throw std::invalid_argument(fmt::format("realization_loss needs one observation, got {}", ctx.observations.size()));
  }
  return realization_loss(sampler_transfer(ctx.schedule, ctx.prior, ctx.spec, weights), ctx.prior, ctx.spec,
                          ctx.observations.front(), ctx.variance_ref);
}

double averaged_loss_analytic(const WeightSchedule& weights, const LossContext& ctx) {
  return averaged_loss_analytic(sampler_transfer(ctx.schedule, ctx.prior, ctx.spec, weights), ctx.prior, ctx.spec,
                                ctx.variance_ref);
}

double averaged_loss_empirical(const WeightSchedule& weights, const LossContext& ctx) {
  if (ctx.observations.empty()) throw std::invalid_argument("averaged_loss_empirical needs K >= 1");
  const TransferTriple t = sampler_transfer(ctx.schedule, ctx.prior, ctx.spec, weights);
  double sum = 0.0;
  for (const Observation& obs : ctx.observations) sum += realization_loss(t, ctx.prior, ctx.spec, obs, ctx.variance_ref);
  return sum / static_cast<double>(ctx.observations.size());
}

double triple_loss(const TransferTriple& triple, const LossContext& ctx) {
  return loss_head(triple, ctx, false).value;
}

double evaluate_loss(const WeightSchedule& weights, const LossContext& ctx) {
  if (weights.kind != ctx.kind) throw std::invalid_argument("weight schedule kind does not match the loss context");
  const double v = triple_loss(sampler_transfer(ctx.schedule, ctx.prior, ctx.spec, weights), ctx);
  check_finite(v, "loss");
  return v;
}

double loss_and_gradient(const WeightSchedule& weights, const LossContext& ctx, RealVector& grad) {
  if (weights.kind != ctx.kind) throw std::invalid_argument("weight schedule kind does not match the loss context");
  const std::vector<StepTransfer> steps = sampler_steps(ctx.schedule, ctx.prior, ctx.spec, weights);
  const Index d = ctx.prior.dim();
  const std::size_t n_steps = steps.size();

  // Forward pass keeping the partial triple in front of every step.
  std::vector<TransferTriple> before(n_steps);
  TransferTriple cur{ComplexVector::Ones(d), ComplexVector::Zero(d), ComplexVector::Zero(d)};
  for (std::size_t j = 0; j < n_steps; ++j) {
    before[j] = cur;
    cur.D1.array() *= steps[j].G.array();
    cur.D2 = (steps[j].G.array() * cur.D2.array() + steps[j].Q.array()).matrix();
    cur.D3 = (steps[j].G.array() * cur.D3.array() + steps[j].M.array()).matrix();
  }
  const LossHead head = loss_head(cur, ctx, true);
  check_finite(head.value, "loss");

  const int S = ctx.schedule.steps();
  grad = RealVector::Zero(weights.params().size());
  auto contract = [&](const StepSensitivity& sens, const ComplexVector& after, const TransferTriple& b) {
    double acc = 0.0;
    for (Index i = 0; i < d; ++i) {
      const Complex dD1 = after[i] * b.D1[i] * sens.dG[i];
      const Complex dD2 = after[i] * (b.D2[i] * sens.dG[i] + sens.dQ[i]);
      const Complex dD3 = after[i] * (b.D3[i] * sens.dG[i] + sens.dM[i]);
      acc += (std::conj(head.g1[i]) * dD1 + std::conj(head.g2[i]) * dD2 + std::conj(head.g3[i]) * dD3).real();
    }
    return acc;
  };

  // Backward pass: `after` is the product of G over the steps applied later.
  ComplexVector after = ComplexVector::Ones(d);
  for (std::size_t jj = n_steps; jj-- > 0;) {
    const int s = S - static_cast<int>(jj);
    const StepCoeffs k = step_coeffs(ctx.schedule, s, ctx.prior);
    if (weights.kind == SamplerKind::Dps) {
      grad[s - 1] = contract(dps_step_sensitivity(k, ctx.spec), after, before[jj]);
    } else {
      const auto [dg, dr] = pigdm_step_sensitivity(k, ctx.spec, weights.g[s - 1], weights.r[s - 1]);
      grad[s - 1] = contract(dg, after, before[jj]);
      grad[S + s - 1] = contract(dr, after, before[jj]);
    }
    after.array() *= steps[jj].G.array();
  }
  return head.value;
}

}  // namespace specpost
