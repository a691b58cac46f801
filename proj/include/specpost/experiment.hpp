#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "specpost/io.hpp"
#include "specpost/objective.hpp"
#include "specpost/optimizer.hpp"

namespace specpost {

struct CommandOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> threads;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::optional<std::filesystem::path> prior_file;
  Index d = 50;
  double l = 0.05;
  double mu_const = 0.0;
  double keep_fraction = 0.5;
  double sigma_y = 0.1;
  int t_full = kDefaultDiffusionSteps;
  std::vector<int> steps{70};
  SamplerKind kind = SamplerKind::Dps;
  /// heuristic | optimize-k1 | optimize-averaged | pigdm-heuristic | ideal | none | file
  std::string weights = "optimize-k1";
  std::vector<double> zeta_primes;
  std::optional<std::filesystem::path> weights_file;
  double zeta_cap = 5.0;
  int realizations = 1;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  int threads = 1;
  int n_runs = 200;
  OptimizeOptions opt;
  VarianceReference variance_ref = VarianceReference::Posterior;
  std::optional<std::filesystem::path> samples_file;
  int n_samples = 1000;
  std::uint64_t config_hash = 0;

  SpectralPrior make_prior() const;
  DegradationSpec make_spec() const;
  Schedule make_schedule(int steps) const;
  CsvHeader header() const { return {config_hash, seed}; }
};

ExperimentConfig parse_experiment(const Config& cfg);
ExperimentConfig load_experiment(const CommandOptions& opts);

/// Independent child seed derived from (seed, a, b, c).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0);

/// Ground truth drawn from the prior and degraded, on realization k's own stream.
Observation make_realization(const SpectralPrior& prior, const DegradationSpec& spec, std::uint64_t seed, int k);

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg);

void cmd_optimize(const ExperimentConfig& cfg);
void cmd_sweep_wasserstein(const ExperimentConfig& cfg);
void cmd_simulate(const ExperimentConfig& cfg);
void cmd_estimate_prior(const ExperimentConfig& cfg);
void cmd_eval_loss(const ExperimentConfig& cfg);

/// Runs f(0..n-1) on up to `threads` workers; rethrows the first failure.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

}  // namespace specpost
