#include "specpost/fourier.hpp"

#include <cmath>
#include <vector>

#include <unsupported/Eigen/FFT>

namespace specpost {

namespace {

// Eigen::FFT keeps plan caches internally, so one instance per thread.
Eigen::FFT<double>& fft_engine() {
  thread_local Eigen::FFT<double> engine;
  return engine;
}

}  // namespace

ComplexVector dft(const ComplexVector& x) {
  if (x.size() <= 1) return x;  // kissfft does not handle n = 1
  std::vector<Complex> in(x.data(), x.data() + x.size());
  std::vector<Complex> out;
  fft_engine().fwd(out, in);
  return Eigen::Map<const ComplexVector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

ComplexVector dft(const RealVector& x) {
  return dft(ComplexVector(x.cast<Complex>()));
}

ComplexVector idft(const ComplexVector& spectrum) {
  if (spectrum.size() <= 1) return spectrum;
  std::vector<Complex> in(spectrum.data(), spectrum.data() + spectrum.size());
  std::vector<Complex> out;
  fft_engine().inv(out, in);  // Eigen::FFT scales the inverse by 1/n
  return Eigen::Map<const ComplexVector>(out.data(), static_cast<Eigen::Index>(out.size()));
}

RealVector idft_real(const ComplexVector& spectrum) {
  return idft(spectrum).real();
}

bool is_hermitian_symmetric(const ComplexVector& v, double tol) {
  const Eigen::Index n = v.size();
  if (n == 0) return true;
  if (std::abs(v[0].imag()) > tol) return false;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (std::abs(v[n - i] - std::conj(v[i])) > tol) return false;
  }
  return true;
}

bool is_hermitian_symmetric(const RealVector& v, double tol) {
  const Eigen::Index n = v.size();
  for (Eigen::Index i = 1; i < n; ++i) {
    if (std::abs(v[n - i] - v[i]) > tol) return false;
  }
  return true;
}

}  // namespace specpost
