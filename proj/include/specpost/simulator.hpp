#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "specpost/schedule.hpp"
#include "specpost/spectral_model.hpp"
#include "specpost/transfer.hpp"

namespace specpost {

/// Real circulant operator applied through the FFT.
class CirculantOperator {
 public:
  explicit CirculantOperator(ComplexVector eigenvalues);
  /// The operator of circulant_matrix(first_row).
  static CirculantOperator from_row(const RealVector& first_row);
  static CirculantOperator identity(Index d);

  Index dim() const { return eig_.size(); }
  const ComplexVector& eigenvalues() const { return eig_; }
  RealVector apply(const RealVector& x) const;
  CirculantOperator adjoint() const;
  CirculantOperator inverse() const;
  CirculantOperator operator*(const CirculantOperator& other) const;
  CirculantOperator operator+(const CirculantOperator& other) const;
  CirculantOperator scaled(double a) const;

 private:
  ComplexVector eig_;
};

enum class GuidanceKind { None, DpsFixed, DpsHeuristic, Pigdm, Optimal };

struct Guidance {
  GuidanceKind kind = GuidanceKind::None;
  RealVector zeta;           // DpsFixed, indexed by s-1
  double zeta_prime = 0.0;   // DpsHeuristic
  double zeta_cap = 5.0;     // heuristic weight used when the residual vanishes
  RealVector g, r;           // Pigdm

  static Guidance none() { return {}; }
  static Guidance dps(RealVector zeta);
  static Guidance heuristic(double zeta_prime, double cap = 5.0);
  static Guidance pigdm(RealVector g, RealVector r);
  static Guidance optimal();
  static Guidance from_weights(const WeightSchedule& w);
};

struct SimConfig {
  SpectralPrior prior;
  DegradationSpec spec;
  Schedule schedule;
  Guidance guidance;
  int n_runs = 1;
  std::uint64_t seed = 0;
  int threads = 1;
};

struct StepOutput {
  RealVector x;
  double zeta = 0.0;  // realized DPS weight (0 for other guidance)
};

/// One time-domain DDIM step from x_s to x_{s-1}; `y` is the time-domain measurement.
StepOutput time_domain_step(const SimConfig& cfg, int s, const RealVector& x_s, const RealVector& y);

struct SimResult {
  RealVector x0;
  RealVector zeta;                           // realized weights, indexed by s-1
  std::optional<std::vector<RealVector>> trajectory;  // x_S, ..., x_1 when recorded
};

SimResult simulate_one(const SimConfig& cfg, const Observation& obs, const RealVector& x_S, bool record = false);

struct RunStats {
  ComplexVector emp_mean;  // spectral, unnormalized DFT
  RealVector emp_var;      // per-bin, unitary scaling
  int n_runs = 0;
  std::optional<Eigen::MatrixXd> per_step_zeta;  // S x n_runs
};

/// Starting noise of run `run`, drawn from its own child stream of `seed`.
RealVector draw_start(std::uint64_t seed, int run, Index d);

RunStats monte_carlo(const SimConfig& cfg, const Observation& obs, bool keep_zeta = false);

struct WeightProfile {
  RealVector mean;  // indexed by progression step k = S + 1 - s, stored at k-1
  RealVector std;
  Eigen::MatrixXd samples;  // S x n_runs, same ordering
};

WeightProfile heuristic_weight_profile(double zeta_prime, const SimConfig& cfg, const Observation& obs);

/// Realized heuristic weights along a recorded trajectory (indexed by s-1).
RealVector replay_heuristic_weights(double zeta_prime, double cap, const SimConfig& cfg, const Observation& obs,
                                    const std::vector<RealVector>& trajectory);

/// Mean realized heuristic profile converted to a fixed DPS schedule (indexed by s-1).
WeightSchedule heuristic_mean_schedule(const WeightProfile& profile);

}  // namespace specpost
