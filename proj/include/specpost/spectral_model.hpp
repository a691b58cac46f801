#pragma once

#include <cstdint>
#include <optional>
#include <random>

#include <Eigen/Core>

#include "specpost/fourier.hpp"

namespace specpost {

using Rng = std::mt19937_64;
using Index = Eigen::Index;

/// Gaussian prior N(mu, Sigma0) with circulant Sigma0, stored in the DFT basis:
/// `mu_f` is the (unnormalized) DFT of the time-domain mean and `lambda0` holds
/// the eigenvalues of Sigma0.
///
/// `signal_length` is the length of the time-domain signal the spectra were
/// taken from. It equals dim() except for eigen-truncated problems, where only
/// a subset of bins is kept but the DFT scaling of the retained bins is not.
class SpectralPrior {
 public:
  SpectralPrior(ComplexVector mu_f, RealVector lambda0, Index signal_length = 0);

  Index dim() const { return lambda0_.size(); }
  Index signal_length() const { return signal_length_; }
  const ComplexVector& mu_f() const { return mu_f_; }
  const RealVector& lambda0() const { return lambda0_; }

 private:
  ComplexVector mu_f_;
  RealVector lambda0_;
  Index signal_length_;
};

/// Circulant measurement operator H (by its eigenvalues) plus noise std.
class DegradationSpec {
 public:
  DegradationSpec(ComplexVector lambda_h, double sigma_y);

  Index dim() const { return lambda_h_.size(); }
  const ComplexVector& lambda_h() const { return lambda_h_; }
  double sigma_y() const { return sigma_y_; }
  DegradationSpec with_sigma(double sigma_y) const { return {lambda_h_, sigma_y}; }

 private:
  ComplexVector lambda_h_;
  double sigma_y_;
};

/// Per-frequency Gaussian. `mean` is in the unnormalized DFT basis, `var` is
/// the per-bin variance in the unitary basis (i.e. an eigenvalue of the
/// time-domain covariance).
struct DiagGaussian {
  ComplexVector mean;
  RealVector var;
  Index signal_length = 0;

  DiagGaussian() = default;
  DiagGaussian(ComplexVector mean, RealVector var, Index signal_length = 0);
  Index dim() const { return mean.size(); }
};

struct Observation {
  ComplexVector y_f;
  std::optional<ComplexVector> ground_truth_f;
};

/// Eigenvalues of the circulant matrix whose first row is `first_row`.
ComplexVector circulant_eigenvalues(const RealVector& first_row);

/// Dense circulant matrix with the given first row (row r is the row shifted
/// right by r). Used by oracles and tools, not by the spectral code paths.
Eigen::MatrixXd circulant_matrix(const RealVector& first_row);

/// First row of the synthetic generator A: d equally spaced points on [-l, l].
RealVector synthetic_generator_row(Index d, double l);

/// Sigma0 = A^T A with A circulant on `synthetic_generator_row(d, l)`, and a
/// constant time-domain mean `mu_const`.
SpectralPrior make_synthetic_prior(Index d, double l, double mu_const = 0.0);

/// 0/1 low-pass mask keeping round(V*d) bins: DC first, then conjugate pairs
/// (i, d-i) for i = 1, 2, ...; if only one slot remains for a pair, the lower
/// bin i is kept.
DegradationSpec make_lpf(Index d, double keep_fraction, double sigma_y = 0.0);

RealVector sample_prior(const SpectralPrior& prior, Rng& rng);

Observation degrade(const RealVector& x0, const DegradationSpec& spec, Rng& rng);

/// Exact p(x0 | y) in the spectral domain.
DiagGaussian true_posterior(const SpectralPrior& prior, const DegradationSpec& spec,
                            const Observation& obs);

/// Stationary prior from the rows of `samples` (n x d) via a 1/n periodogram.
SpectralPrior estimate_spectral_prior(const Eigen::MatrixXd& samples);

}  // namespace specpost
