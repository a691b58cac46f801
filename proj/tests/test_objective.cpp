#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "specpost/errors.hpp"
#include "specpost/objective.hpp"
#include "specpost/optimizer.hpp"

using namespace specpost;

namespace {

Schedule steps_of(int S) { return ddim_subsequence(linear_ddpm_schedule(1000), S); }

std::vector<Observation> draw_observations(const SpectralPrior& p, const DegradationSpec& s, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Observation> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(degrade(sample_prior(p, rng), s, rng));
  return out;
}

WeightSchedule random_weights(std::mt19937_64& g, SamplerKind kind, int S) {
  std::uniform_real_distribution<double> u(-0.3, 0.6), pos(0.1, 1.0);
  RealVector a(S), b(S);
  for (int i = 0; i < S; ++i) a[i] = u(g), b[i] = pos(g);
  return kind == SamplerKind::Dps ? WeightSchedule::dps(a) : WeightSchedule::pigdm(a, b);
}

}  // namespace

TEST(W2, Examples) {
  std::mt19937_64 g(51);
  RealVector v = oracle::random_real(6, g), m = oracle::random_real(6, g);
  RealVector var = oracle::random_real(6, g).cwiseAbs();
  DiagGaussian p(dft(m), var), q(dft(RealVector(m + v)), var);
  EXPECT_EQ(w2_diag(p, p), 0.0);
  // Means live in DFT units; the distance matches the time-domain norm.
  EXPECT_NEAR(w2_diag(p, q), v.norm(), 1e-12);

  DiagGaussian a(ComplexVector::Zero(1), RealVector::Constant(1, 1.0));
  DiagGaussian b(ComplexVector::Zero(1), RealVector::Constant(1, 4.0));
  EXPECT_DOUBLE_EQ(w2_diag(a, b), 1.0);

  DiagGaussian c(ComplexVector::Zero(2), RealVector::Ones(2));
  EXPECT_THROW(w2_diag(a, c), std::invalid_argument);
}

TEST(Wiener, Examples) {
  SpectralPrior p(ComplexVector::Zero(2), RealVector::Ones(2));
  ComplexVector h(2);
  h << Complex(0.6, 0.8), Complex(0.6, -0.8);
  WienerGain w = wiener_gain(p, DegradationSpec(h, 1.0));
  EXPECT_LT(std::abs(w.A[0] - std::conj(h[0]) / 2.0), 1e-15);

  SpectralPrior q(ComplexVector::Zero(2), RealVector::Constant(2, 3.0));
  EXPECT_LT((wiener_gain(q, make_lpf(2, 1.0, 0.0)).A - ComplexVector::Ones(2)).norm(), 1e-15);
  EXPECT_EQ(wiener_gain(q, make_lpf(2, 0.5, 0.1)).A[1], Complex(0.0));

  SpectralPrior dead(ComplexVector::Zero(2), RealVector::Zero(2));
  EXPECT_THROW(wiener_gain(dead, make_lpf(2, 1.0, 0.0)), NumericalError);
}

TEST(Wiener, NeverOverInverts) {
  std::mt19937_64 g(52);
  for (int rep = 0; rep < 50; ++rep) {
    SpectralPrior p = oracle::random_prior(7, g);
    DegradationSpec s = oracle::random_spec(7, g, 0.01 * (rep + 1));
    WienerGain w = wiener_gain(p, s);
    for (Index i = 0; i < 7; ++i) EXPECT_LE(std::abs(w.A[i] * s.lambda_h()[i]), 1.0 + 1e-12);
  }
}

TEST(RealizationLoss, CrossPathMatchesW2) {
  std::mt19937_64 g(53);
  for (int rep = 0; rep < 100; ++rep) {
    const Index d = 2 + rep % 12;
    const int S = 1 + rep % 25;
    SpectralPrior p = oracle::random_prior(d, g);
    DegradationSpec s = oracle::random_spec(d, g, 0.05 + 0.1 * (rep % 3));
    Observation obs{oracle::to_spectrum(oracle::random_real(d, g)), {}};
    SamplerKind kind = rep % 2 ? SamplerKind::Pigdm : SamplerKind::Dps;
    TransferTriple t = sampler_transfer(steps_of(S), p, s, random_weights(g, kind, S));
    double w2 = w2_diag(output_distribution(t, obs, p), true_posterior(p, s, obs));
    double loss = realization_loss(t, p, s, obs);
    EXPECT_NEAR(loss, w2 * w2, 1e-10 * std::max(1.0, loss));
    EXPECT_GE(loss, 0.0);
  }
}

TEST(RealizationLoss, PerfectMatchIsZero) {
  std::mt19937_64 g(54);
  SpectralPrior p = oracle::random_prior(8, g);
  DegradationSpec s = oracle::random_spec(8, g, 0.2);
  Observation obs{oracle::to_spectrum(oracle::random_real(8, g)), {}};
  WienerGain w = wiener_gain(p, s);
  TransferTriple t{reference_std(p, s, VarianceReference::Posterior).cast<Complex>(), w.A,
                   (ComplexVector::Ones(8) - w.A.cwiseProduct(s.lambda_h())).eval()};
  EXPECT_LT(realization_loss(t, p, s, obs), 1e-28);
  EXPECT_LT(averaged_loss_analytic(t, p, s), 1e-28);
}

TEST(RealizationLoss, PriorReferenceMode) {
  std::mt19937_64 g(55);
  SpectralPrior p = oracle::random_prior(8, g);
  DegradationSpec s = oracle::random_spec(8, g, 0.2);
  Observation obs{oracle::to_spectrum(oracle::random_real(8, g)), {}};
  TransferTriple t = sampler_transfer(steps_of(6), p, s, random_weights(g, SamplerKind::Dps, 6));
  RealVector mag = t.D1.cwiseAbs();
  RealVector post = reference_std(p, s, VarianceReference::Posterior);
  RealVector prior_std = p.lambda0().cwiseSqrt();
  double expect = (prior_std - mag).squaredNorm() - (post - mag).squaredNorm();
  double got = realization_loss(t, p, s, obs, VarianceReference::Prior) - realization_loss(t, p, s, obs);
  EXPECT_NEAR(got, expect, 1e-12);
}

TEST(AveragedLoss, AnalyticMatchesMonteCarlo) {
  std::mt19937_64 g(56);
  SpectralPrior p = oracle::random_prior(8, g);
  DegradationSpec s = oracle::random_spec(8, g, 0.3);
  LossContext ctx = LossContext::for_observations(p, s, steps_of(10), SamplerKind::Dps, draw_observations(p, s, 100000, 7));
  WeightSchedule w = random_weights(g, SamplerKind::Dps, 10);
  double analytic = averaged_loss_analytic(w, ctx);
  EXPECT_NEAR(averaged_loss_empirical(w, ctx) / analytic, 1.0, 0.02);

  LossContext small = LossContext::for_observations(p, s, steps_of(10), SamplerKind::Dps, draw_observations(p, s, 100, 8));
  EXPECT_NEAR(averaged_loss_empirical(w, small) / analytic, 1.0, 0.25);
}

TEST(AveragedLoss, EmpiricalEdgeCases) {
  std::mt19937_64 g(57);
  SpectralPrior p = oracle::random_prior(6, g);
  DegradationSpec s = oracle::random_spec(6, g, 0.1);
  auto obs = draw_observations(p, s, 1, 3);
  WeightSchedule w = random_weights(g, SamplerKind::Dps, 5);
  LossContext one = LossContext::for_observations(p, s, steps_of(5), SamplerKind::Dps, obs);
  EXPECT_EQ(averaged_loss_empirical(w, one), realization_loss(w, one));
  LossContext dup = LossContext::for_observations(p, s, steps_of(5), SamplerKind::Dps, {obs[0], obs[0], obs[0]});
  EXPECT_NEAR(averaged_loss_empirical(w, dup), realization_loss(w, one), 1e-15);
  EXPECT_NEAR(evaluate_loss(w, dup), realization_loss(w, one), 1e-14);
}

TEST(AveragedLoss, NoiselessIdentityIdealSampler) {
  std::mt19937_64 g(58);
  SpectralPrior p = oracle::random_prior(6, g);
  DegradationSpec s = make_lpf(6, 1.0, 0.0);
  TransferTriple t = ideal_transfer(steps_of(20), p, s);
  for (int rep = 0; rep < 5; ++rep) {
    Observation obs{oracle::to_spectrum(oracle::random_real(6, g)), {}};
    EXPECT_NEAR(realization_loss(t, p, s, obs), averaged_loss_analytic(t, p, s), 1e-20);
  }
}

TEST(RealizationLoss, IdealImprovesWithLessNoise) {
  SpectralPrior p = make_synthetic_prior(50, 0.05);
  Observation obs = draw_observations(p, make_lpf(50, 0.5, 0.0), 1, 11)[0];
  double prev = 1e300;
  for (double sigma : {1.0, 0.5, 0.1, 0.01}) {
    DegradationSpec s = make_lpf(50, 0.5, sigma);
    double loss = realization_loss(ideal_transfer(steps_of(70), p, s), p, s, obs);
    EXPECT_LE(loss, prev * (1 + 1e-12)) << sigma;
    prev = loss;
  }
}

TEST(Gradient, AdjointMatchesFiniteDifferences) {
  std::mt19937_64 g(59);
  for (int rep = 0; rep < 20; ++rep) {
    const Index d = 6;
    const int S = 3 + rep % 8;
    SpectralPrior p = oracle::random_prior(d, g);
    DegradationSpec s = oracle::random_spec(d, g, 0.2);
    SamplerKind kind = rep % 2 ? SamplerKind::Pigdm : SamplerKind::Dps;
    LossContext ctx = rep % 4 < 2 ? LossContext::averaged(p, s, steps_of(S), kind)
                                  : LossContext::for_observations(p, s, steps_of(S), kind, draw_observations(p, s, 2, rep));
    WeightSchedule w = random_weights(g, kind, S);
    RealVector grad;
    double f = loss_and_gradient(w, ctx, grad);
    EXPECT_NEAR(f, evaluate_loss(w, ctx), 1e-12 * std::max(1.0, f));
    RealVector fd = finite_diff_gradient(
        [&](const RealVector& th) { return evaluate_loss(WeightSchedule::from_params(kind, th), ctx); }, w.params(), 1e-6,
        true);
    EXPECT_LT((grad - fd).norm() / std::max(1e-8, fd.norm()), 1e-4) << rep;
  }
}

TEST(Context, Validation) {
  SpectralPrior p = make_synthetic_prior(4, 0.1);
  EXPECT_THROW(LossContext::for_observations(p, make_lpf(4, 1.0, 0.1), steps_of(3), SamplerKind::Dps, {}).validate(),
               std::invalid_argument);
  EXPECT_THROW(LossContext::averaged(p, make_lpf(5, 1.0, 0.1), steps_of(3), SamplerKind::Dps).validate(),
               std::invalid_argument);
  LossContext ok = LossContext::averaged(p, make_lpf(4, 1.0, 0.1), steps_of(3), SamplerKind::Dps);
  EXPECT_THROW(evaluate_loss(pigdm_heuristic_weights(steps_of(3)), ok), std::invalid_argument);
}
