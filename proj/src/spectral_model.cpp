#include "specpost/spectral_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include <fmt/core.h>

#include "specpost/errors.hpp"

namespace specpost {

SpectralPrior::SpectralPrior(ComplexVector mu_f, RealVector lambda0, Index signal_length)
    : mu_f_(std::move(mu_f)), lambda0_(std::move(lambda0)), signal_length_(signal_length) {
  if (mu_f_.size() == 0) throw std::invalid_argument("prior must have at least one bin");
  if (mu_f_.size() != lambda0_.size()) {
    throw std::invalid_argument(fmt::format("prior mean has {} bins but lambda0 has {}",
                                            mu_f_.size(), lambda0_.size()));
  }
  for (Index i = 0; i < lambda0_.size(); ++i) {
    if (!(lambda0_[i] >= 0.0) || !std::isfinite(lambda0_[i])) {
      throw std::invalid_argument(fmt::format("lambda0[{}] = {} is not a nonnegative number", i, lambda0_[i]));
    }
  }
  if (signal_length_ <= 0) signal_length_ = lambda0_.size();
}

DegradationSpec::DegradationSpec(ComplexVector lambda_h, double sigma_y)
    : lambda_h_(std::move(lambda_h)), sigma_y_(sigma_y) {
  if (lambda_h_.size() == 0) throw std::invalid_argument("degradation must have at least one bin");
  if (!(sigma_y_ >= 0.0) || !std::isfinite(sigma_y_)) {
    throw std::invalid_argument(fmt::format("sigma_y = {} must be finite and >= 0", sigma_y_));
  }
}

DiagGaussian::DiagGaussian(ComplexVector mean_, RealVector var_, Index signal_length_)
    : mean(std::move(mean_)), var(std::move(var_)), signal_length(signal_length_) {
  if (mean.size() != var.size()) throw std::invalid_argument("mean/var size mismatch");
  for (Index i = 0; i < var.size(); ++i) {
    if (!(var[i] >= 0.0)) throw std::invalid_argument(fmt::format("var[{}] = {} is negative", i, var[i]));
  }
  if (signal_length <= 0) signal_length = mean.size();
}

ComplexVector circulant_eigenvalues(const RealVector& first_row) {
  if (first_row.size() == 0) throw std::invalid_argument("empty row");
  return dft(first_row);
}

Eigen::MatrixXd circulant_matrix(const RealVector& first_row) {
  const Index d = first_row.size();
  Eigen::MatrixXd c(d, d);
  for (Index r = 0; r < d; ++r) {
    for (Index col = 0; col < d; ++col) c(r, col) = first_row[(col - r + d) % d];
  }
  return c;
}

RealVector synthetic_generator_row(Index d, double l) {
  if (d < 2) throw std::invalid_argument("synthetic prior needs d >= 2");
  return RealVector::LinSpaced(d, -l, l);
}

SpectralPrior make_synthetic_prior(Index d, double l, double mu_const) {
  if (d < 2) throw std::invalid_argument("synthetic prior needs d >= 2");
  if (!(l > 0.0)) throw std::invalid_argument("synthetic prior needs l > 0");
  const ComplexVector a_hat = circulant_eigenvalues(synthetic_generator_row(d, l));
  RealVector lambda0 = a_hat.cwiseAbs2();
  // |a_hat|^2 is symmetric up to rounding; enforce it exactly.
  for (Index i = 1; i < d - i; ++i) {
    const double avg = 0.5 * (lambda0[i] + lambda0[d - i]);
    lambda0[i] = lambda0[d - i] = avg;
  }
  ComplexVector mu_f = ComplexVector::Zero(d);
  mu_f[0] = Complex(static_cast<double>(d) * mu_const, 0.0);
  return SpectralPrior(std::move(mu_f), std::move(lambda0));
}

DegradationSpec make_lpf(Index d, double keep_fraction, double sigma_y) {
  if (d < 1) throw std::invalid_argument("LPF needs d >= 1");
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw std::invalid_argument(fmt::format("LPF fraction {} outside (0, 1]", keep_fraction));
  }
  const Index k = std::max<Index>(1, static_cast<Index>(std::llround(keep_fraction * static_cast<double>(d))));
  ComplexVector mask = ComplexVector::Zero(d);
  mask[0] = 1.0;
  Index kept = 1;
  for (Index i = 1; kept < k && i <= d - i; ++i) {
    if (i == d - i) {  // Nyquist bin pairs with itself
      mask[i] = 1.0;
      ++kept;
    } else if (k - kept >= 2) {
      mask[i] = 1.0;
      mask[d - i] = 1.0;
      kept += 2;
    } else {
      mask[i] = 1.0;
      ++kept;
    }
  }
  return DegradationSpec(std::move(mask), sigma_y);
}

RealVector sample_prior(const SpectralPrior& prior, Rng& rng) {
  const Index d = prior.dim();
  if (prior.signal_length() != d) throw std::invalid_argument("cannot sample a truncated prior");
  std::normal_distribution<double> normal(0.0, 1.0);
  RealVector z(d);
  for (Index i = 0; i < d; ++i) z[i] = normal(rng);
  const ComplexVector z_f = dft(z);
  const ComplexVector x_f = prior.mu_f() + (prior.lambda0().cwiseSqrt().cast<Complex>().array() * z_f.array()).matrix();
  return idft_real(x_f);
}

Observation degrade(const RealVector& x0, const DegradationSpec& spec, Rng& rng) {
  const Index d = spec.dim();
  if (x0.size() != d) {
    throw std::invalid_argument(fmt::format("signal has {} samples but operator has {} bins", x0.size(), d));
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  RealVector noise(d);
  for (Index i = 0; i < d; ++i) noise[i] = spec.sigma_y() * normal(rng);
  const ComplexVector x_f = dft(x0);
  Observation obs;
  obs.y_f = (spec.lambda_h().array() * x_f.array()).matrix() + dft(noise);
  obs.ground_truth_f = x_f;
  return obs;
}

DiagGaussian true_posterior(const SpectralPrior& prior, const DegradationSpec& spec, const Observation& obs) {
  const Index d = prior.dim();
  if (spec.dim() != d || obs.y_f.size() != d) throw std::invalid_argument("true_posterior: dimension mismatch");
  const double noise_var = spec.sigma_y() * spec.sigma_y();
  ComplexVector mean(d);
  RealVector var(d);
  for (Index i = 0; i < d; ++i) {
    const double lambda = prior.lambda0()[i];
    const Complex h = spec.lambda_h()[i];
    const Complex mu = prior.mu_f()[i];
    const double denom = lambda * std::norm(h) + noise_var;
    const Complex numer = lambda * std::conj(h) * (obs.y_f[i] - h * mu);
    if (denom == 0.0) {
      if (numer != Complex(0.0, 0.0)) throw NumericalError(fmt::format("degenerate posterior bin {}", i));
      mean[i] = mu;
      var[i] = lambda;
      continue;
    }
    mean[i] = mu + numer / denom;
    var[i] = std::max(0.0, lambda - lambda * lambda * std::norm(h) / denom);
  }
  return DiagGaussian(std::move(mean), std::move(var), prior.signal_length());
}

SpectralPrior estimate_spectral_prior(const Eigen::MatrixXd& samples) {
  const Index n = samples.rows();
  const Index d = samples.cols();
  if (n < 2) throw std::invalid_argument("need at least two samples");
  if (d < 1) throw std::invalid_argument("samples have no columns");
  const RealVector mean = samples.colwise().mean().transpose();
  RealVector power = RealVector::Zero(d);
  for (Index r = 0; r < n; ++r) {
    const RealVector centered = samples.row(r).transpose() - mean;
    power += dft(centered).cwiseAbs2();
  }
  power /= static_cast<double>(n) * static_cast<double>(d);
  return SpectralPrior(dft(mean), std::move(power));
}

}  // namespace specpost
