#pragma once

#include <complex>

#include <Eigen/Core>

namespace specpost {

using Complex = std::complex<double>;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

// DFT convention used throughout: forward is unnormalized,
//   X[k] = sum_j x[j] exp(-2 pi i j k / n),
// inverse divides by n. Parseval then reads sum |X|^2 / n = sum |x|^2.
ComplexVector dft(const RealVector& x);
ComplexVector dft(const ComplexVector& x);
ComplexVector idft(const ComplexVector& spectrum);

/// Inverse DFT of a Hermitian-symmetric spectrum, returning the real part.
RealVector idft_real(const ComplexVector& spectrum);

/// True when v[n-i] == conj(v[i]) within `tol` and v[0] is real.
bool is_hermitian_symmetric(const ComplexVector& v, double tol = 1e-12);
bool is_hermitian_symmetric(const RealVector& v, double tol = 1e-12);

}  // namespace specpost
