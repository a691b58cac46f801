#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "specpost/errors.hpp"
#include "specpost/schedule.hpp"

using namespace specpost;

TEST(Schedule, LinearDdpm) {
  EXPECT_DOUBLE_EQ(linear_ddpm_schedule(1).alpha_bar(1), 0.9999);

  Schedule full = linear_ddpm_schedule(1000);
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
    EXPECT_NEAR(full.alpha_bar(t), prod, 1e-15);
    EXPECT_GT(full.alpha_bar(t), 0.0);
    EXPECT_LT(full.alpha_bar(t), 1.0);
  }
  EXPECT_LT(full.alpha_bar(1000), 1e-4);
}

TEST(Schedule, Subsequence) {
  Schedule full = linear_ddpm_schedule(1000);
  Schedule five = ddim_subsequence(full, 5);
  EXPECT_EQ(five.timesteps(), (std::vector<int>{200, 400, 600, 800, 1000}));
  EXPECT_EQ(five.alpha_bar(5), full.alpha_bar(1000));

  Schedule same = ddim_subsequence(full, 1000);
  EXPECT_EQ(same.alpha_bars(), full.alpha_bars());

  EXPECT_THROW(ddim_subsequence(full, 1001), std::invalid_argument);
  EXPECT_THROW(ddim_subsequence(full, 0), std::invalid_argument);
}

TEST(Schedule, SubsequenceAlwaysDecreasing) {
  std::mt19937_64 rng(21);
  for (int rep = 0; rep < 200; ++rep) {
    int T = std::uniform_int_distribution<int>(1, 1200)(rng);
    int S = std::uniform_int_distribution<int>(1, T)(rng);
    Schedule sub = ddim_subsequence(linear_ddpm_schedule(T), S);
    EXPECT_EQ(sub.alpha_bar(sub.steps()), linear_ddpm_schedule(T).alpha_bar(T));
    for (int s = 2; s <= sub.steps(); ++s) EXPECT_LT(sub.alpha_bar(s), sub.alpha_bar(s - 1));
  }
}

TEST(Coeffs, ScalarExamples) {
  auto noop = ddim_coeffs(0.5, 0.5);
  EXPECT_DOUBLE_EQ(noop.a, 1.0);
  EXPECT_DOUBLE_EQ(noop.b, 0.0);

  auto ab = ddim_coeffs(0.9, 0.5);
  EXPECT_NEAR(ab.a, std::sqrt(0.2), 1e-15);
  EXPECT_NEAR(ab.b, std::sqrt(0.9) - std::sqrt(0.5) * std::sqrt(0.2), 1e-15);
  EXPECT_NEAR(ab.b, 0.632455532, 1e-9);

  auto last = ddim_coeffs(1.0, 0.3);
  EXPECT_EQ(last.a, 0.0);
  EXPECT_DOUBLE_EQ(last.b, 1.0);

  EXPECT_THROW(ddim_coeffs(1.0, 1.0), NumericalError);
}

TEST(Coeffs, FinalStepTerminates) {
  Schedule sched = ddim_subsequence(linear_ddpm_schedule(1000), 10);
  EXPECT_EQ(sched.alpha_bar_prev(1), 1.0);
  auto ab = step_coeffs_scalar(sched, 1);
  EXPECT_EQ(ab.a, 0.0);
  EXPECT_DOUBLE_EQ(ab.b, 1.0);
}

// If x_s is an exact forward-process sample and x0_hat = x0, the DDIM update
// lands on the forward-process sample at s-1 with the same noise.
TEST(Coeffs, DdimConsistency) {
  Schedule sched = ddim_subsequence(linear_ddpm_schedule(1000), 37);
  const double x0 = 0.8, eps = -1.3;
  for (int s = 1; s <= sched.steps(); ++s) {
    double ab = sched.alpha_bar(s), prev = sched.alpha_bar_prev(s);
    auto c = step_coeffs_scalar(sched, s);
    double xs = std::sqrt(ab) * x0 + std::sqrt(1 - ab) * eps;
    EXPECT_NEAR(c.a * xs + c.b * x0, std::sqrt(prev) * x0 + std::sqrt(1 - prev) * eps, 1e-13);
  }
}

TEST(Coeffs, Denoiser) {
  RealVector c, d;
  RealVector lam(3);
  lam << 1.0, 0.0, 2.0;
  denoiser_coeffs(1.0, RealVector::Ones(1), c, d);
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_DOUBLE_EQ(d[0], 0.0);

  denoiser_coeffs(0.5, lam, c, d);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_EQ(d[1], 1.0);
  EXPECT_NEAR(c[2], std::sqrt(0.5) * 2 / 1.5, 1e-15);
  EXPECT_NEAR(d[2], 1.0 / 3.0, 1e-15);

  EXPECT_THROW(denoiser_coeffs(1.0, lam, c, d), NumericalError);
}

TEST(Coeffs, DenoiserIdentity) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 3.0), a(0.001, 0.999);
  for (int rep = 0; rep < 100; ++rep) {
    RealVector lam(5);
    for (auto& v : lam) v = u(rng);
    double ab = a(rng);
    RealVector c, d;
    denoiser_coeffs(ab, lam, c, d);
    for (Index i = 0; i < 5; ++i) {
      double den = ab * lam[i] + 1 - ab;
      EXPECT_NEAR(den * c[i], std::sqrt(ab) * lam[i], 1e-14);
      EXPECT_NEAR(den * d[i], 1 - ab, 1e-14);
    }
  }
}
