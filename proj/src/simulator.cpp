#include "specpost/simulator.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>

#include <fmt/core.h>

#include "specpost/errors.hpp"

namespace specpost {

CirculantOperator::CirculantOperator(ComplexVector eigenvalues) : eig_(std::move(eigenvalues)) {
  if (eig_.size() == 0) throw std::invalid_argument("circulant operator needs at least one bin");
}

CirculantOperator CirculantOperator::from_row(const RealVector& first_row) {
  // circulant_matrix(row) x correlates x with the row: multiplier conj(DFT(row)).
  return CirculantOperator(circulant_eigenvalues(first_row).conjugate());
}

CirculantOperator CirculantOperator::identity(Index d) { return CirculantOperator(ComplexVector::Ones(d)); }

RealVector CirculantOperator::apply(const RealVector& x) const {
  if (x.size() != dim()) throw std::invalid_argument(fmt::format("operator is {}-dim, vector has {}", dim(), x.size()));
  return idft(eig_.cwiseProduct(dft(x))).real();
}

CirculantOperator CirculantOperator::adjoint() const { return CirculantOperator(eig_.conjugate()); }

CirculantOperator CirculantOperator::inverse() const {
  ComplexVector inv(dim());
  for (Index i = 0; i < dim(); ++i) {
    if (eig_[i] == Complex(0.0, 0.0)) throw NumericalError(fmt::format("singular circulant operator at bin {}", i));
    inv[i] = 1.0 / eig_[i];
  }
  return CirculantOperator(std::move(inv));
}

CirculantOperator CirculantOperator::operator*(const CirculantOperator& other) const {
  return CirculantOperator(eig_.cwiseProduct(other.eig_));
}

CirculantOperator CirculantOperator::operator+(const CirculantOperator& other) const {
  return CirculantOperator(eig_ + other.eig_);
}

CirculantOperator CirculantOperator::scaled(double a) const { return CirculantOperator(a * eig_); }

Guidance Guidance::dps(RealVector zeta) {
  Guidance g;
  g.kind = GuidanceKind::DpsFixed;
  g.zeta = std::move(zeta);
  return g;
}

Guidance Guidance::heuristic(double zeta_prime, double cap) {
  if (!(zeta_prime >= 0.0)) throw std::invalid_argument("zeta' must be >= 0");
  Guidance g;
  g.kind = GuidanceKind::DpsHeuristic;
  g.zeta_prime = zeta_prime;
  g.zeta_cap = cap;
  return g;
}

Guidance Guidance::pigdm(RealVector g_, RealVector r_) {
  Guidance g;
  g.kind = GuidanceKind::Pigdm;
  g.g = std::move(g_);
  g.r = std::move(r_);
  return g;
}

Guidance Guidance::optimal() {
  Guidance g;
  g.kind = GuidanceKind::Optimal;
  return g;
}

Guidance Guidance::from_weights(const WeightSchedule& w) {
  return w.kind == SamplerKind::Dps ? dps(w.zeta) : pigdm(w.g, w.r);
}

namespace {

// Time-domain operators for one step. Everything is a circulant matrix
// expression built from Sigma0, H and identities.
struct StepOps {
  double a = 0.0;
  double b = 0.0;
  CirculantOperator denoise_x = CirculantOperator::identity(1);  // sqrt(ab) Sigma0 K
  RealVector denoise_mu;                                         // (1 - ab) K mu
  CirculantOperator guide = CirculantOperator::identity(1);      // J^T H^T [(r^2 H H^T + s^2 I)^-1]
  CirculantOperator post_x = CirculantOperator::identity(1);
  CirculantOperator post_y = CirculantOperator::identity(1);
  RealVector post_mu;
};

struct Model {
  CirculantOperator sigma0;
  CirculantOperator h;
  CirculantOperator eye;
  RealVector mu;
  double noise_var;
};

Model make_model(const SimConfig& cfg) {
  const Index d = cfg.prior.dim();
  if (cfg.prior.signal_length() != d) throw std::invalid_argument("simulator needs an untruncated prior");
  if (cfg.spec.dim() != d) throw std::invalid_argument("simulator: prior/degradation dimension mismatch");
  const double tol = 1e-12 * std::max(1.0, cfg.spec.lambda_h().cwiseAbs().maxCoeff());
  if (!is_hermitian_symmetric(cfg.spec.lambda_h(), tol)) {
    throw std::invalid_argument("simulator needs a real operator H (Hermitian-symmetric lambda_h)");
  }
  const double ptol = 1e-12 * std::max(1.0, cfg.prior.lambda0().maxCoeff());
  if (!is_hermitian_symmetric(cfg.prior.lambda0(), ptol) ||
      !is_hermitian_symmetric(cfg.prior.mu_f(), 1e-12 * std::max(1.0, cfg.prior.mu_f().cwiseAbs().maxCoeff()))) {
    throw std::invalid_argument("simulator needs a real prior (Hermitian-symmetric spectrum)");
  }
  return {CirculantOperator(cfg.prior.lambda0().cast<Complex>()), CirculantOperator(cfg.spec.lambda_h()),
          CirculantOperator::identity(d), idft_real(cfg.prior.mu_f()), cfg.spec.sigma_y() * cfg.spec.sigma_y()};
}

void check_guidance(const SimConfig& cfg) {
  const int S = cfg.schedule.steps();
  const Guidance& g = cfg.guidance;
  if (g.kind == GuidanceKind::DpsFixed && g.zeta.size() != S) {
    throw std::invalid_argument(fmt::format("guidance has {} weights, schedule has {} steps", g.zeta.size(), S));
  }
  if (g.kind == GuidanceKind::Pigdm && (g.g.size() != S || g.r.size() != S)) {
    throw std::invalid_argument(fmt::format("PiGDM guidance needs {} weights", S));
  }
}

StepOps make_step(const SimConfig& cfg, const Model& m, int s) {
  const double ab = cfg.schedule.alpha_bar(s);
  const ScalarCoeffs k = step_coeffs_scalar(cfg.schedule, s);
  StepOps ops;
  ops.a = k.a;
  ops.b = k.b;
  const CirculantOperator K = (m.sigma0.scaled(ab) + m.eye.scaled(1.0 - ab)).inverse();
  const CirculantOperator J = (m.sigma0 * K).scaled(std::sqrt(ab));
  ops.denoise_x = J;
  ops.denoise_mu = K.scaled(1.0 - ab).apply(m.mu);
  const Guidance& g = cfg.guidance;
  if (g.kind == GuidanceKind::DpsFixed || g.kind == GuidanceKind::DpsHeuristic) {
    ops.guide = J.adjoint() * m.h.adjoint();
  } else if (g.kind == GuidanceKind::Pigdm) {
    const double r = g.r[s - 1];
    const CirculantOperator cov = (m.h * m.h.adjoint()).scaled(r * r) + m.eye.scaled(m.noise_var);
    ops.guide = J.adjoint() * m.h.adjoint() * cov.inverse();
  } else if (g.kind == GuidanceKind::Optimal) {
    const CirculantOperator P = ((m.sigma0 * m.h.adjoint() * m.h).scaled(1.0 - ab) +
                                 m.sigma0.scaled(m.noise_var * ab) + m.eye.scaled(m.noise_var * (1.0 - ab)))
                                    .inverse();
    ops.post_x = (P * m.sigma0).scaled(m.noise_var * std::sqrt(ab));
    ops.post_y = (P * m.sigma0 * m.h.adjoint()).scaled(1.0 - ab);
    ops.post_mu = P.scaled(m.noise_var * (1.0 - ab)).apply(m.mu);
  }
  return ops;
}

StepOutput run_step(const SimConfig& cfg, const Model& m, const StepOps& ops, int s, const RealVector& x,
                    const RealVector& y) {
  const Guidance& g = cfg.guidance;
  StepOutput out;
  if (g.kind == GuidanceKind::Optimal) {
    const RealVector x0 = ops.post_x.apply(x) + ops.post_y.apply(y) + ops.post_mu;
    out.x = ops.a * x + ops.b * x0;
    return out;
  }
  const RealVector x0 = ops.denoise_x.apply(x) + ops.denoise_mu;
  out.x = ops.a * x + ops.b * x0;
  if (g.kind == GuidanceKind::None) return out;
  const RealVector residual = y - m.h.apply(x0);
  switch (g.kind) {
    case GuidanceKind::DpsFixed:
      out.zeta = g.zeta[s - 1];
      break;
    case GuidanceKind::DpsHeuristic: {
      const double norm = residual.norm();
      if (g.zeta_prime == 0.0) {
        out.zeta = 0.0;
      } else {
        out.zeta = norm > 0.0 ? g.zeta_prime / norm : g.zeta_cap;
      }
      break;
    }
    case GuidanceKind::Pigdm:
      out.x += g.g[s - 1] * ops.guide.apply(residual);
      return out;
    default:
      return out;
  }
  // -zeta * grad ||y - H x0(x)||^2 = 2 zeta J^T H^T (y - H x0)
  out.x += 2.0 * out.zeta * ops.guide.apply(residual);
  return out;
}

RealVector measurement_time(const Observation& obs, Index d) {
  if (obs.y_f.size() != d) throw std::invalid_argument("observation dimension mismatch");
  return idft_real(obs.y_f);
}

}  // namespace

StepOutput time_domain_step(const SimConfig& cfg, int s, const RealVector& x_s, const RealVector& y) {
  check_guidance(cfg);
  const Model m = make_model(cfg);
  return run_step(cfg, m, make_step(cfg, m, s), s, x_s, y);
}

namespace {

SimResult simulate_with(const SimConfig& cfg, const Model& m, const std::vector<StepOps>& ops, const RealVector& y,
                        const RealVector& x_S, bool record) {
  const int S = cfg.schedule.steps();
  SimResult res;
  res.zeta = RealVector::Zero(S);
  if (record) res.trajectory.emplace();
  RealVector x = x_S;
  for (int s = S; s >= 1; --s) {
    if (record) res.trajectory->push_back(x);
    StepOutput out = run_step(cfg, m, ops[static_cast<std::size_t>(s - 1)], s, x, y);
    if (!out.x.allFinite()) throw NumericalError(fmt::format("diverged at step {}", s));
    res.zeta[s - 1] = out.zeta;
    x = std::move(out.x);
  }
  res.x0 = std::move(x);
  return res;
}

std::vector<StepOps> make_steps(const SimConfig& cfg, const Model& m) {
  std::vector<StepOps> ops;
  for (int s = 1; s <= cfg.schedule.steps(); ++s) ops.push_back(make_step(cfg, m, s));
  return ops;
}

}  // namespace

SimResult simulate_one(const SimConfig& cfg, const Observation& obs, const RealVector& x_S, bool record) {
  check_guidance(cfg);
  const Model m = make_model(cfg);
  if (x_S.size() != cfg.prior.dim()) throw std::invalid_argument("starting noise has the wrong dimension");
  return simulate_with(cfg, m, make_steps(cfg, m), measurement_time(obs, cfg.prior.dim()), x_S, record);
}

RealVector draw_start(std::uint64_t seed, int run, Index d) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run), 0x5eedu};
  Rng rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  RealVector x(d);
  for (Index i = 0; i < d; ++i) x[i] = normal(rng);
  return x;
}

namespace {

struct Moments {
  int n = 0;
  ComplexVector mean;
  RealVector m2;
};

void merge(Moments& acc, const Moments& other) {
  if (other.n == 0) return;
  if (acc.n == 0) {
    acc = other;
    return;
  }
  const double na = acc.n;
  const double nb = other.n;
  const double n = na + nb;
  const ComplexVector delta = other.mean - acc.mean;
  acc.mean += delta * (nb / n);
  acc.m2 += other.m2 + delta.cwiseAbs2() * (na * nb / n);
  acc.n += other.n;
}

constexpr int kChunk = 1024;

}  // namespace

RunStats monte_carlo(const SimConfig& cfg, const Observation& obs, bool keep_zeta) {
  if (cfg.n_runs < 2) throw std::invalid_argument("monte_carlo needs n_runs >= 2");
  check_guidance(cfg);
  const Model m = make_model(cfg);
  const std::vector<StepOps> ops = make_steps(cfg, m);
  const Index d = cfg.prior.dim();
  const RealVector y = measurement_time(obs, d);
  const int S = cfg.schedule.steps();

  const int n_chunks = (cfg.n_runs + kChunk - 1) / kChunk;
  std::vector<Moments> chunks(static_cast<std::size_t>(n_chunks));
  RunStats stats;
  if (keep_zeta) stats.per_step_zeta = Eigen::MatrixXd::Zero(S, cfg.n_runs);

  std::atomic<int> next{0};
  std::atomic<bool> failed{false};
  std::string failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (int c = next++; c < n_chunks && !failed; c = next++) {
      Moments mom{0, ComplexVector::Zero(d), RealVector::Zero(d)};
      const int end = std::min(cfg.n_runs, (c + 1) * kChunk);
      try {
        for (int run = c * kChunk; run < end; ++run) {
          const SimResult res = simulate_with(cfg, m, ops, y, draw_start(cfg.seed, run, d), false);
          const ComplexVector xf = dft(res.x0);
          ++mom.n;
          const ComplexVector delta = xf - mom.mean;
          mom.mean += delta / static_cast<double>(mom.n);
          mom.m2 += (delta.array() * (xf - mom.mean).conjugate().array()).real().matrix();
          if (keep_zeta) stats.per_step_zeta->col(run) = res.zeta;
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failed.exchange(true)) failure = e.what();
        return;
      }
      chunks[static_cast<std::size_t>(c)] = std::move(mom);
    }
  };
  const int n_threads = std::max(1, std::min(cfg.threads, n_chunks));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failed) throw NumericalError(failure);

  Moments total;
  for (const Moments& c : chunks) merge(total, c);
  stats.n_runs = total.n;
  stats.emp_mean = total.mean;
  // |X - m|^2 of the unnormalized DFT carries a factor d.
  stats.emp_var = total.m2 / (static_cast<double>(total.n) * static_cast<double>(d));
  return stats;
}

WeightProfile heuristic_weight_profile(double zeta_prime, const SimConfig& cfg, const Observation& obs) {
  if (!(zeta_prime >= 0.0)) throw std::invalid_argument("zeta' must be >= 0");
  SimConfig c = cfg;
  c.guidance = Guidance::heuristic(zeta_prime, cfg.guidance.zeta_cap);
  const RunStats stats = monte_carlo(c, obs, true);
  const int S = cfg.schedule.steps();
  WeightProfile p;
  p.samples.resize(S, stats.n_runs);
  for (int k = 1; k <= S; ++k) p.samples.row(k - 1) = stats.per_step_zeta->row(S - k);
  p.mean = p.samples.rowwise().mean();
  p.std.resize(S);
  for (int k = 0; k < S; ++k) {
    const double var = (p.samples.row(k).array() - p.mean[k]).square().sum() / static_cast<double>(stats.n_runs - 1);
    p.std[k] = std::sqrt(var);
  }
  return p;
}

RealVector replay_heuristic_weights(double zeta_prime, double cap, const SimConfig& cfg, const Observation& obs,
                                    const std::vector<RealVector>& trajectory) {
  const int S = cfg.schedule.steps();
  if (static_cast<int>(trajectory.size()) != S) throw std::invalid_argument("trajectory length does not match S");
  SimConfig c = cfg;
  c.guidance = Guidance::heuristic(zeta_prime, cap);
  const Model m = make_model(c);
  const RealVector y = measurement_time(obs, c.prior.dim());
  RealVector zeta(S);
  for (int s = S; s >= 1; --s) {
    const StepOps ops = make_step(c, m, s);
    zeta[s - 1] = run_step(c, m, ops, s, trajectory[static_cast<std::size_t>(S - s)], y).zeta;
  }
  return zeta;
}

WeightSchedule heuristic_mean_schedule(const WeightProfile& profile) {
  const Index S = profile.mean.size();
  RealVector zeta(S);
  for (Index k = 1; k <= S; ++k) zeta[S - k] = profile.mean[k - 1];
  return WeightSchedule::dps(std::move(zeta));
}

}  // namespace specpost
