#include "specpost/experiment.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/core.h>

#include "specpost/errors.hpp"
#include "specpost/simulator.hpp"

namespace specpost {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kAllowedKeys = {
    "name",          "prior.d",          "prior.l",           "prior.mu_const",   "prior.file",
    "degradation.V", "degradation.sigma_y", "schedule.T",     "schedule.S",       "sampler.kind",
    "sampler.weights", "sampler.zeta_prime", "sampler.weights_file", "sampler.zeta_cap", "run.realizations",
    "run.seed",      "run.out",          "run.threads",       "run.n_runs",       "run.max_iters",
    "run.f_tol",     "run.lo",           "run.hi",            "run.ladder",       "run.keep_dims",
    "run.variance_ref", "estimate.samples", "estimate.n_samples"};

const std::set<std::string> kWeightSources = {"heuristic", "optimize-k1", "optimize-averaged", "pigdm-heuristic",
                                              "ideal",     "none",        "file"};

std::string zeta_tag(double z) { return fmt::format("{:g}", z); }

}  // namespace

SpectralPrior ExperimentConfig::make_prior() const {
  if (prior_file) return read_prior_file(*prior_file);
  return make_synthetic_prior(d, l, mu_const);
}

DegradationSpec ExperimentConfig::make_spec() const {
  return make_lpf(make_prior().dim(), keep_fraction, sigma_y);
}

Schedule ExperimentConfig::make_schedule(int steps) const {
  return ddim_subsequence(linear_ddpm_schedule(t_full), steps);
}

ExperimentConfig parse_experiment(const Config& cfg) {
  cfg.check_keys(kAllowedKeys);
  ExperimentConfig e;
  e.config_hash = fnv1a64(cfg.text());
  e.name = cfg.get_string("name", e.name);
  if (cfg.has("prior.file")) e.prior_file = cfg.get_string("prior.file");
  e.d = cfg.get_int("prior.d", e.d);
  e.l = cfg.get_double("prior.l", e.l);
  e.mu_const = cfg.get_double("prior.mu_const", e.mu_const);
  e.keep_fraction = cfg.get_double("degradation.V", e.keep_fraction);
  e.sigma_y = cfg.get_double("degradation.sigma_y", e.sigma_y);
  e.t_full = static_cast<int>(cfg.get_int("schedule.T", e.t_full));
  if (cfg.has("schedule.S")) e.steps = cfg.get_int_list("schedule.S");
  if (cfg.has("sampler.kind")) {
    try {
      e.kind = sampler_kind_from_string(cfg.get_string("sampler.kind"));
    } catch (const std::invalid_argument& ex) {
      throw ConfigError(fmt::format("sampler.kind: {}", ex.what()));
    }
  }
  e.weights = cfg.get_string("sampler.weights", e.weights);
  if (!kWeightSources.count(e.weights)) throw ConfigError(fmt::format("sampler.weights: unknown source '{}'", e.weights));
  if (cfg.has("sampler.zeta_prime")) e.zeta_primes = cfg.get_double_list("sampler.zeta_prime");
  if (cfg.has("sampler.weights_file")) e.weights_file = cfg.get_string("sampler.weights_file");
  e.zeta_cap = cfg.get_double("sampler.zeta_cap", e.opt.hi);
  e.realizations = static_cast<int>(cfg.get_int("run.realizations", e.realizations));
  e.seed = static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));
  e.out = cfg.get_string("run.out", e.out.string());
  e.threads = static_cast<int>(cfg.get_int("run.threads", e.threads));
  e.n_runs = static_cast<int>(cfg.get_int("run.n_runs", e.n_runs));
  e.opt.max_iters = static_cast<int>(cfg.get_int("run.max_iters", e.opt.max_iters));
  e.opt.f_tol = cfg.get_double("run.f_tol", e.opt.f_tol);
  e.opt.lo = cfg.get_double("run.lo", e.opt.lo);
  e.opt.hi = cfg.get_double("run.hi", e.opt.hi);
  if (!cfg.has("sampler.zeta_cap")) e.zeta_cap = e.opt.hi;
  if (cfg.has("run.ladder")) e.opt.ladder = cfg.get_int_list("run.ladder");
  if (cfg.has("run.keep_dims")) e.opt.keep_dims = cfg.get_int("run.keep_dims");
  const std::string ref = cfg.get_string("run.variance_ref", "posterior");
  if (ref == "posterior") {
    e.variance_ref = VarianceReference::Posterior;
  } else if (ref == "prior") {
    e.variance_ref = VarianceReference::Prior;
  } else {
    throw ConfigError(fmt::format("run.variance_ref: expected posterior or prior, got '{}'", ref));
  }
  if (cfg.has("estimate.samples")) e.samples_file = cfg.get_string("estimate.samples");
  e.n_samples = static_cast<int>(cfg.get_int("estimate.n_samples", e.n_samples));

  if (e.realizations < 1) throw ConfigError("run.realizations must be >= 1");
  if (e.threads < 1) throw ConfigError("run.threads must be >= 1");
  if (e.n_runs < 2) throw ConfigError("run.n_runs must be >= 2");
  if (e.t_full < 1) throw ConfigError("schedule.T must be >= 1");
  for (const int s : e.steps) {
    if (s < 1 || s > e.t_full) throw ConfigError(fmt::format("schedule.S: {} outside 1..{}", s, e.t_full));
  }
  try {
    e.opt.validate();
  } catch (const std::invalid_argument& ex) {
    throw ConfigError(fmt::format("run: {}", ex.what()));
  }
  return e;
}

ExperimentConfig load_experiment(const CommandOptions& opts) {
  ExperimentConfig e = parse_experiment(Config::load(opts.config));
  if (opts.seed) e.seed = *opts.seed;
  if (opts.out) e.out = *opts.out;
  if (opts.threads) {
    if (*opts.threads < 1) throw ConfigError("--threads must be >= 1");
    e.threads = *opts.threads;
  }
  if (e.prior_file && e.prior_file->is_relative()) e.prior_file = opts.config.parent_path() / *e.prior_file;
  if (e.weights_file && e.weights_file->is_relative()) e.weights_file = opts.config.parent_path() / *e.weights_file;
  if (e.samples_file && e.samples_file->is_relative()) e.samples_file = opts.config.parent_path() / *e.samples_file;
  return e;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(c)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

Observation make_realization(const SpectralPrior& prior, const DegradationSpec& spec, std::uint64_t seed, int k) {
  Rng rng(derive_seed(seed, 0x0b5e, static_cast<std::uint64_t>(k)));
  return degrade(sample_prior(prior, rng), spec, rng);
}

void parallel_for(int n, int threads, const std::function<void(int)>& f) {
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto run = [&] {
    for (int i = next++; i < n; i = next++) {
      {
        std::lock_guard<std::mutex> lock(mu);
        if (error) return;
      }
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < workers; ++t) pool.emplace_back(run);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace {

struct Problem {
  SpectralPrior prior;
  DegradationSpec spec;
  std::vector<Observation> observations;
};

Problem make_problem(const ExperimentConfig& cfg) {
  try {
    SpectralPrior prior = cfg.make_prior();
    DegradationSpec spec = make_lpf(prior.dim(), cfg.keep_fraction, cfg.sigma_y);
    std::vector<Observation> obs;
    for (int k = 0; k < cfg.realizations; ++k) obs.push_back(make_realization(prior, spec, cfg.seed, k));
    return {std::move(prior), std::move(spec), std::move(obs)};
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

OptimizeOptions rung_options(const OptimizeOptions& base, int steps) {
  OptimizeOptions o = base;
  o.ladder.clear();
  for (const int r : base.ladder) {
    if (r < steps) o.ladder.push_back(r);
  }
  o.ladder.push_back(steps);
  return o;
}

WeightSolution solve(const LossContext& ctx, const OptimizeOptions& base) {
  if (base.ladder.empty()) return optimize_weights(ctx, default_init(ctx.kind, ctx.schedule), base);
  return iterative_ladder(ctx, rung_options(base, ctx.schedule.steps()));
}

double w2_of(double loss) { return std::sqrt(std::max(0.0, loss)); }

void append_timing(const fs::path& out, const std::string& line) {
  fs::create_directories(out);
  std::ofstream f(out / "timing.log", std::ios::app);
  f << line << '\n';
}

WeightProfile profile_for(const ExperimentConfig& cfg, const Problem& p, const Schedule& sched, int k, double zp,
                          std::uint64_t tag) {
  SimConfig sim{p.prior, p.spec, sched, Guidance::heuristic(zp, cfg.zeta_cap), cfg.n_runs,
                derive_seed(cfg.seed, tag, static_cast<std::uint64_t>(sched.steps()), static_cast<std::uint64_t>(k)), 1};
  return heuristic_weight_profile(zp, sim, p.observations[static_cast<std::size_t>(k)]);
}

std::vector<std::pair<std::string, std::string>> solution_meta(const ExperimentConfig& cfg, int steps,
                                                               const std::string& k, const WeightSolution& sol) {
  return {{"S", std::to_string(steps)},
          {"K", k},
          {"bounds", fmt::format("{:g},{:g}", cfg.opt.lo, cfg.opt.hi)},
          {"seed", std::to_string(cfg.seed)},
          {"initial_loss", format_double(sol.initial_loss)},
          {"final_loss", format_double(sol.final_loss)},
          {"iterations", std::to_string(sol.iterations)},
          {"converged", sol.converged ? "1" : "0"}};
}

}  // namespace

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg) {
  if (cfg.zeta_primes.empty()) throw ConfigError("sweep-wasserstein needs sampler.zeta_prime");
  const Problem p = make_problem(cfg);
  const int n_s = static_cast<int>(cfg.steps.size());
  const int n_tasks = n_s * cfg.realizations;
  std::vector<std::vector<SweepRow>> slots(static_cast<std::size_t>(n_tasks));
  parallel_for(n_tasks, cfg.threads, [&](int task) {
    const int steps = cfg.steps[static_cast<std::size_t>(task / cfg.realizations)];
    const int k = task % cfg.realizations;
    const Schedule sched = cfg.make_schedule(steps);
    const Observation& obs = p.observations[static_cast<std::size_t>(k)];
    LossContext dps = LossContext::for_observations(p.prior, p.spec, sched, SamplerKind::Dps, {obs});
    dps.variance_ref = cfg.variance_ref;
    LossContext pigdm = dps;
    pigdm.kind = SamplerKind::Pigdm;
    auto& rows = slots[static_cast<std::size_t>(task)];
    for (std::size_t j = 0; j < cfg.zeta_primes.size(); ++j) {
      const double zp = cfg.zeta_primes[j];
      const WeightProfile prof = profile_for(cfg, p, sched, k, zp, 0x5ee0 + j);
      rows.push_back({"dps_heuristic_" + zeta_tag(zp), steps, k, w2_of(evaluate_loss(heuristic_mean_schedule(prof), dps))});
    }
    rows.push_back({"dps_optimized", steps, k, w2_of(solve(dps, cfg.opt).final_loss)});
    rows.push_back({"pigdm_heuristic", steps, k, w2_of(evaluate_loss(pigdm_heuristic_weights(sched), pigdm))});
    rows.push_back({"pigdm_optimized", steps, k, w2_of(solve(pigdm, cfg.opt).final_loss)});
    rows.push_back({"ideal", steps, k, w2_of(triple_loss(ideal_transfer(sched, p.prior, p.spec), dps))});
  });
  std::vector<SweepRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

void cmd_sweep_wasserstein(const ExperimentConfig& cfg) {
  const std::vector<SweepRow> rows = run_sweep(cfg);
  write_sweep_csv(cfg.out / "sweep_wasserstein.csv", cfg.header(), rows);
}

void cmd_optimize(const ExperimentConfig& cfg) {
  const bool averaged = cfg.weights == "optimize-averaged";
  if (!averaged && cfg.weights != "optimize-k1") {
    throw ConfigError(fmt::format("optimize needs sampler.weights = optimize-k1 or optimize-averaged, got {}", cfg.weights));
  }
  const Problem p = make_problem(cfg);
  const std::string kind(to_string(cfg.kind));
  const int per_s = averaged ? 1 : cfg.realizations;
  const int n_tasks = static_cast<int>(cfg.steps.size()) * per_s;
  std::vector<WeightSolution> sols(static_cast<std::size_t>(n_tasks));
  parallel_for(n_tasks, cfg.threads, [&](int task) {
    const int steps = cfg.steps[static_cast<std::size_t>(task / per_s)];
    const Schedule sched = cfg.make_schedule(steps);
    LossContext ctx = averaged ? LossContext::averaged(p.prior, p.spec, sched, cfg.kind)
                               : LossContext::for_observations(p.prior, p.spec, sched, cfg.kind,
                                                               {p.observations[static_cast<std::size_t>(task % per_s)]});
    ctx.variance_ref = cfg.variance_ref;
    sols[static_cast<std::size_t>(task)] = solve(ctx, cfg.opt);
  });

  std::vector<LossRecord> losses;
  for (std::size_t si = 0; si < cfg.steps.size(); ++si) {
    const int steps = cfg.steps[si];
    const Schedule sched = cfg.make_schedule(steps);
    write_schedule_csv(cfg.out / fmt::format("schedule_S{}.csv", steps), cfg.header(), sched);
    std::vector<WeightSchedule> runs;
    for (int k = 0; k < per_s; ++k) {
      const WeightSolution& sol = sols[si * static_cast<std::size_t>(per_s) + static_cast<std::size_t>(k)];
      const std::string k_label = averaged ? "inf" : "1";
      const std::string stem = averaged ? fmt::format("{}_S{}", kind, steps) : fmt::format("{}_S{}_r{}", kind, steps, k);
      write_solution_csv(cfg.out / ("weights_" + stem + ".csv"), cfg.header(), sol.weights,
                         solution_meta(cfg, steps, k_label, sol));
      write_triple_csv(cfg.out / ("triple_" + stem + ".csv"), cfg.header(),
                       sampler_transfer(sched, p.prior, p.spec, sol.weights));
      losses.push_back({kind, steps, k_label, sol.final_loss, cfg.seed});
      append_timing(cfg.out, fmt::format("{} wall_time_s={:.3f} iterations={}", stem, sol.wall_time_s, sol.iterations));
      runs.push_back(sol.weights);
    }
    if (!averaged) {
      write_weight_summary_csv(cfg.out / fmt::format("weights_{}_S{}_summary.csv", kind, steps), cfg.header(), runs);
    }
  }
  write_losses_csv(cfg.out / "losses.csv", cfg.header(), losses);
}

void cmd_simulate(const ExperimentConfig& cfg) {
  const Problem p = make_problem(cfg);
  const Observation& obs = p.observations.front();
  write_spectrum_csv(cfg.out / "observation_r0.csv", cfg.header(), obs.y_f);
  for (const int steps : cfg.steps) {
    const Schedule sched = cfg.make_schedule(steps);
    Guidance guidance;
    if (cfg.weights == "none") {
      guidance = Guidance::none();
    } else if (cfg.weights == "ideal") {
      guidance = Guidance::optimal();
    } else if (cfg.weights == "pigdm-heuristic") {
      guidance = Guidance::from_weights(pigdm_heuristic_weights(sched));
    } else if (cfg.weights == "heuristic") {
      if (cfg.zeta_primes.empty()) throw ConfigError("heuristic guidance needs sampler.zeta_prime");
      guidance = Guidance::heuristic(cfg.zeta_primes.front(), cfg.zeta_cap);
    } else if (cfg.weights == "file") {
      if (!cfg.weights_file) throw ConfigError("sampler.weights = file needs sampler.weights_file");
      guidance = Guidance::from_weights(read_solution_csv(*cfg.weights_file));
    } else {
      throw ConfigError(fmt::format("simulate does not support sampler.weights = {}", cfg.weights));
    }
    const SimConfig sim{p.prior, p.spec, sched, guidance, cfg.n_runs,
                        derive_seed(cfg.seed, 0x51a, static_cast<std::uint64_t>(steps)), cfg.threads};
    write_stats_csv(cfg.out / fmt::format("stats_S{}.csv", steps), cfg.header(), monte_carlo(sim, obs));
    for (std::size_t j = 0; j < cfg.zeta_primes.size(); ++j) {
      SimConfig hs = sim;
      hs.seed = derive_seed(cfg.seed, 0x9f0 + j, static_cast<std::uint64_t>(steps));
      const double zp = cfg.zeta_primes[j];
      write_profile_csv(cfg.out / fmt::format("profile_S{}_zeta{}.csv", steps, zeta_tag(zp)), cfg.header(),
                        heuristic_weight_profile(zp, hs, obs));
    }
  }
}

void cmd_estimate_prior(const ExperimentConfig& cfg) {
  Eigen::MatrixXd samples;
  if (cfg.samples_file) {
    samples = read_matrix_csv(*cfg.samples_file);
  } else {
    if (cfg.n_samples < 2) throw ConfigError("estimate.n_samples must be >= 2");
    const SpectralPrior truth = cfg.make_prior();
    Rng rng(derive_seed(cfg.seed, 0xe57));
    samples.resize(cfg.n_samples, truth.dim());
    for (int i = 0; i < cfg.n_samples; ++i) samples.row(i) = sample_prior(truth, rng).transpose();
  }
  SpectralPrior est = [&] {
    try {
      return estimate_spectral_prior(samples);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }();
  write_prior_file(cfg.out / "prior.txt", cfg.header(), est);
  write_spectrum_csv(cfg.out / "prior_mu_f.csv", cfg.header(), est.mu_f());
  write_time_csv(cfg.out / "prior_lambda0.csv", cfg.header(), est.lambda0());
}

void cmd_eval_loss(const ExperimentConfig& cfg) {
  const Problem p = make_problem(cfg);
  std::vector<LossRecord> rows;
  const std::string n_label = std::to_string(cfg.realizations);
  for (const int steps : cfg.steps) {
    const Schedule sched = cfg.make_schedule(steps);
    auto ctx_for = [&](SamplerKind kind, std::vector<Observation> obs) {
      LossContext c = obs.empty() ? LossContext::averaged(p.prior, p.spec, sched, kind)
                                  : LossContext::for_observations(p.prior, p.spec, sched, kind, std::move(obs));
      c.variance_ref = cfg.variance_ref;
      return c;
    };
    auto add_fixed = [&](const std::string& label, const WeightSchedule& w) {
      for (int k = 0; k < cfg.realizations; ++k) {
        rows.push_back({label, steps, "1", evaluate_loss(w, ctx_for(w.kind, {p.observations[static_cast<std::size_t>(k)]})),
                        cfg.seed});
      }
      rows.push_back({label, steps, n_label, evaluate_loss(w, ctx_for(w.kind, p.observations)), cfg.seed});
      rows.push_back({label, steps, "inf", evaluate_loss(w, ctx_for(w.kind, {})), cfg.seed});
    };
    if (cfg.weights == "ideal") {
      const TransferTriple t = ideal_transfer(sched, p.prior, p.spec);
      for (int k = 0; k < cfg.realizations; ++k) {
        rows.push_back({"ideal", steps, "1",
                        triple_loss(t, ctx_for(SamplerKind::Dps, {p.observations[static_cast<std::size_t>(k)]})), cfg.seed});
      }
      rows.push_back({"ideal", steps, n_label, triple_loss(t, ctx_for(SamplerKind::Dps, p.observations)), cfg.seed});
      rows.push_back({"ideal", steps, "inf", triple_loss(t, ctx_for(SamplerKind::Dps, {})), cfg.seed});
    } else if (cfg.weights == "pigdm-heuristic") {
      add_fixed("pigdm_heuristic", pigdm_heuristic_weights(sched));
    } else if (cfg.weights == "none") {
      add_fixed("dps_none", WeightSchedule::dps(RealVector::Zero(steps)));
    } else if (cfg.weights == "file") {
      if (!cfg.weights_file) throw ConfigError("sampler.weights = file needs sampler.weights_file");
      const WeightSchedule w = read_solution_csv(*cfg.weights_file);
      if (w.steps() != steps) throw ConfigError(fmt::format("weights file has {} steps, S = {}", w.steps(), steps));
      add_fixed(std::string(to_string(w.kind)) + "_file", w);
    } else if (cfg.weights == "heuristic") {
      if (cfg.zeta_primes.empty()) throw ConfigError("heuristic weights need sampler.zeta_prime");
      for (std::size_t j = 0; j < cfg.zeta_primes.size(); ++j) {
        const double zp = cfg.zeta_primes[j];
        for (int k = 0; k < cfg.realizations; ++k) {
          const WeightSchedule w = heuristic_mean_schedule(profile_for(cfg, p, sched, k, zp, 0x5ee0 + j));
          rows.push_back({"dps_heuristic_" + zeta_tag(zp), steps, "1",
                          evaluate_loss(w, ctx_for(SamplerKind::Dps, {p.observations[static_cast<std::size_t>(k)]})),
                          cfg.seed});
        }
      }
    } else {
      throw ConfigError(fmt::format("eval-loss does not support sampler.weights = {}", cfg.weights));
    }
  }
  write_losses_csv(cfg.out / "losses.csv", cfg.header(), rows);
}

}  // namespace specpost
