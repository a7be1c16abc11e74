#pragma once

// QC / QCF iterations with per-directed-link dithered quantization over
// sampled topologies, plus the seeded Monte Carlo ensemble harness.

#include "qcons/bounds.hpp"
#include "qcons/graph.hpp"
#include "qcons/quantize.hpp"
#include "qcons/weights.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qcons {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for trial t of a Monte Carlo ensemble.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial) {
  return splitmix64(splitmix64(master) ^ splitmix64(0x9E3779B97F4A7C15ULL * (trial + 1)));
}

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Dither sample uniform on [-step/2, step/2).
inline double uniform_dither(std::mt19937_64& rng, double step) {
  double v = (uniform01(rng) - 0.5) * step;
  const double half = 0.5 * step;
  if (v >= half) v = std::nextafter(half, 0.0);
  return v;
}

struct StepRecord {
  long long iteration = 0;
  std::vector<Edge> active_edges;  // realized edge set M(i)
  Vector upsilon;                  // dither aggregate
  Vector psi;                      // quantization-error aggregate

  Matrix sampled_laplacian(int n) const {
    Matrix L = Matrix::Zero(n, n);
    for (const Edge& e : active_edges) {
      L(e.u, e.u) += 1.0;
      L(e.v, e.v) += 1.0;
      L(e.u, e.v) -= 1.0;
      L(e.v, e.u) -= 1.0;
    }
    return L;
  }
};

struct StepResult {
  bool saturated = false;
  Vector next_state;
  StepRecord record;
};

// One QC/QCF iteration. Samples M(i), draws one dither per directed link,
// and applies x_n(i+1) = (1 - alpha d_n) x_n + alpha sum_l q(x_l + nu_nl).
// With a finite quantizer the step reports saturation (and no next state)
// as soon as any link input reaches (p + 1/2) * Delta in magnitude.
inline StepResult qc_step(const Vector& state, const LinkFailureModel& model,
                          const WeightSequence& weights, long long i,
                          const QuantizerSpec& spec, std::mt19937_64& rng) {
  const int n = static_cast<int>(state.size());
  if (n != model.base().n_nodes())
    throw std::invalid_argument("qc_step: state size does not match topology");
  const double alpha_i = weights.alpha(i);
  const double delta_i = weights.delta_at(i, spec.step);
  const double sat = spec.levels_p
                         ? (static_cast<double>(*spec.levels_p) + 0.5) * delta_i
                         : std::numeric_limits<double>::infinity();

  StepResult res;
  res.record.iteration = i;
  model.sample_edges(rng, res.record.active_edges);

  Vector q_sum = Vector::Zero(n);
  Vector degree = Vector::Zero(n);
  res.record.upsilon = Vector::Zero(n);
  res.record.psi = Vector::Zero(n);

  for (const Edge& e : res.record.active_edges) {
    // directed link u <- v, then v <- u
    for (int dir = 0; dir < 2; ++dir) {
      const int recv = dir == 0 ? e.u : e.v;
      const int send = dir == 0 ? e.v : e.u;
      const double nu = uniform_dither(rng, delta_i);
      const double input = state(send) + nu;
      if (std::abs(input) >= sat) {
        res.saturated = true;
        return res;
      }
      const double q = quantize(input, delta_i);
      q_sum(recv) += q;
      degree(recv) += 1.0;
      res.record.upsilon(recv) -= nu;
      res.record.psi(recv) -= q - input;
    }
  }

  res.next_state.resize(n);
  for (int k = 0; k < n; ++k)
    res.next_state(k) = (1.0 - alpha_i * degree(k)) * state(k) + alpha_i * q_sum(k);
  return res;
}

struct Trajectory {
  std::vector<long long> iterations;
  std::vector<double> averages;
  std::vector<double> residual_norms;
  std::vector<double> spreads;
  std::vector<Vector> states;  // populated only when requested
};

enum class RunStatus { Converged, MaxIterations, Saturated };

struct RunOutcome {
  RunStatus status = RunStatus::MaxIterations;
  double theta_hat = 0.0;  // x_avg at stop (0 after a QCF reset)
  long long stop_iteration = 0;
  Vector final_state;
  Trajectory trajectory;
  std::vector<std::string> warnings;
};

struct RunConfig {
  Vector x0;
  LinkFailureModel model;
  WeightSequence weights;
  QuantizerSpec spec;
  long long max_iter = 1000;
  long long record_every = -1;  // -1: stride 1 for N <= 32, else 100; 0: final only
  bool record_states = false;
  std::optional<double> b;  // initial-state bound, required for QCF
  std::optional<double> early_stop_tol;
};

namespace detail {

inline double spread_of(const Vector& x) { return x.maxCoeff() - x.minCoeff(); }

inline double residual_norm_of(const Vector& x) {
  const double avg = x.mean();
  return (x.array() - avg).matrix().norm();
}

// Shared QC/QCF driver; `finite` selects the saturation guard. The optional
// observer sees x(i) at every iteration (including i = 0 and the final state).
inline RunOutcome run_impl(const RunConfig& cfg, std::mt19937_64& rng, bool finite,
                           const std::function<void(long long, const Vector&)>& observer) {
  cfg.weights.validate();
  const int n = static_cast<int>(cfg.x0.size());
  if (n != cfg.model.base().n_nodes())
    throw std::invalid_argument("run: x0 size does not match topology");
  if (finite && !cfg.spec.levels_p)
    throw std::invalid_argument("run_qcf: quantizer must be finite");
  if (finite && cfg.b) {
    for (int k = 0; k < n; ++k)
      if (std::abs(cfg.x0(k)) > *cfg.b)
        throw std::invalid_argument("run_qcf: |x0| exceeds declared bound b");
  }

  RunOutcome out;
  {
    const Matrix lbar = cfg.model.mean_laplacian();
    const SpectralSummary sp = spectral(lbar);
    if (!sp.connected_on_average)
      out.warnings.push_back("mean Laplacian is not connected (lambda2 <= 0); no consensus expected");
    double max_deg = 0.0;
    std::vector<int> deg(n, 0);
    for (const Edge& e : cfg.model.base().edges()) {
      ++deg[e.u];
      ++deg[e.v];
    }
    for (int d : deg) max_deg = std::max(max_deg, static_cast<double>(d));
    if (cfg.weights.alpha(0) * max_deg >= 1.0)
      out.warnings.push_back("alpha(0) * max degree >= 1; early iterations may overshoot");
  }

  long long stride = cfg.record_every;
  if (stride < 0) stride = n <= 32 ? 1 : 100;

  Vector x = cfg.x0;
  long long consecutive_small = 0;
  auto record = [&](long long i) {
    out.trajectory.iterations.push_back(i);
    out.trajectory.averages.push_back(x.mean());
    out.trajectory.residual_norms.push_back(residual_norm_of(x));
    out.trajectory.spreads.push_back(spread_of(x));
    if (cfg.record_states) out.trajectory.states.push_back(x);
  };

  const double sat_base = cfg.spec.levels_p && finite
                              ? static_cast<double>(*cfg.spec.levels_p) + 0.5
                              : std::numeric_limits<double>::infinity();

  std::vector<Edge> active;
  Vector q_sum(n), degree(n), next(n);
  for (long long i = 0; i < cfg.max_iter; ++i) {
    if (observer) observer(i, x);
    if (stride > 0 && i % stride == 0) record(i);

    const double alpha_i = cfg.weights.alpha(i);
    const double delta_i = cfg.weights.delta_at(i, cfg.spec.step);
    const double sat = sat_base * delta_i;

    cfg.model.sample_edges(rng, active);
    q_sum.setZero();
    degree.setZero();
    bool saturated = false;
    for (const Edge& e : active) {
      for (int dir = 0; dir < 2 && !saturated; ++dir) {
        const int recv = dir == 0 ? e.u : e.v;
        const int send = dir == 0 ? e.v : e.u;
        const double nu = uniform_dither(rng, delta_i);
        const double input = x(send) + nu;
        if (std::abs(input) >= sat) {
          saturated = true;
          break;
        }
        q_sum(recv) += quantize(input, delta_i);
        degree(recv) += 1.0;
      }
      if (saturated) break;
    }
    if (saturated) {
      out.status = RunStatus::Saturated;
      out.stop_iteration = i;
      out.theta_hat = 0.0;
      if (stride > 0) record(i);  // reflects the pre-reset state at the stop step
      out.final_state = Vector::Zero(n);
      return out;
    }

    for (int k = 0; k < n; ++k)
      next(k) = (1.0 - alpha_i * degree(k)) * x(k) + alpha_i * q_sum(k);
    x.swap(next);

    if (cfg.early_stop_tol && stride > 0 && (i + 1) % stride == 0) {
      consecutive_small = spread_of(x) < *cfg.early_stop_tol ? consecutive_small + 1 : 0;
      if (consecutive_small >= 100) {
        if (observer) observer(i + 1, x);
        record(i + 1);
        out.status = RunStatus::Converged;
        out.stop_iteration = i + 1;
        out.theta_hat = x.mean();
        out.final_state = x;
        return out;
      }
    }
  }
  if (observer) observer(cfg.max_iter, x);
  if (stride > 0) record(cfg.max_iter);
  out.status = RunStatus::MaxIterations;
  out.stop_iteration = cfg.max_iter;
  out.theta_hat = x.mean();
  out.final_state = x;
  return out;
}

}  // namespace detail

inline RunOutcome run_qc(const RunConfig& cfg, std::mt19937_64& rng,
                         const std::function<void(long long, const Vector&)>& observer = {}) {
  RunConfig qc = cfg;
  qc.spec.levels_p.reset();  // QC uses the unbounded alphabet
  return detail::run_impl(qc, rng, /*finite=*/false, observer);
}

inline RunOutcome run_qcf(const RunConfig& cfg, std::mt19937_64& rng,
                          const std::function<void(long long, const Vector&)>& observer = {}) {
  return detail::run_impl(cfg, rng, /*finite=*/true, observer);
}

struct MonteCarloConfig {
  long long trials = 1;
  std::uint64_t master_seed = 0;
  double epsilon = 0.1;                   // for the eps-consensus frequency
  std::vector<long long> w_checkpoints;   // iterations for the mean W sequence
  std::optional<double> x0_uniform_b;     // per-trial x0 uniform in [-b, b]
  bool qcf = false;
  int threads = 0;  // 0: hardware concurrency
};

struct EnsembleStats {
  long long trials = 0;
  double mean_theta = 0.0;
  double std_theta = 0.0;
  double empirical_mse = 0.0;  // (1/T) sum (theta_t - r_t)^2
  double saturation_frequency = 0.0;
  double eps_consensus_frequency = 0.0;
  double mean_r = 0.0;
  std::vector<long long> w_iterations;
  std::vector<double> mean_w;
  std::vector<double> se_w;
  double spread_q10 = 0.0, spread_q50 = 0.0, spread_q90 = 0.0;
};

/// Seeded, embarrassingly parallel ensemble of QC/QCF runs; trial t derives
/// its RNG from (master_seed, t) so results are thread-count invariant.
inline EnsembleStats monte_carlo(const RunConfig& base, const MonteCarloConfig& mc) {
  if (mc.trials < 1) throw std::invalid_argument("monte_carlo: trials must be >= 1");
  const int n = static_cast<int>(base.model.base().n_nodes());

  // W(i, x) = (1 + x' Lbar x) prod_{j>=i} (1 + g(j)); precompute tail products.
  std::vector<double> w_tail;
  Matrix lbar;
  const bool track_w = !mc.w_checkpoints.empty();
  std::vector<long long> w_iters = mc.w_checkpoints;
  std::sort(w_iters.begin(), w_iters.end());
  if (track_w) {
    lbar = base.model.mean_laplacian();
    const SpectralSummary sp = spectral(lbar);
    BoundInputs in;
    in.n_nodes = n;
    in.m_edges = static_cast<double>(base.model.base().n_edges());
    in.delta = base.spec.step;
    in.lambda2 = sp.lambda2;
    in.lambdaN = sp.lambdaN;
    in.weights = base.weights;
    const double log_total = log_prod_one_plus_g(in);
    w_tail.reserve(w_iters.size());
    for (long long it : w_iters) {
      double prefix = 0.0;
      for (long long j = 0; j < it; ++j) prefix += std::log1p(g_factor(j, in));
      w_tail.push_back(std::exp(log_total - prefix));
    }
  }

  struct TrialOut {
    double theta = 0.0, r = 0.0, spread = 0.0;
    bool saturated = false, eps_ok = false;
    std::vector<double> w;
  };
  std::vector<TrialOut> results(static_cast<std::size_t>(mc.trials));

  auto run_trial = [&](long long t) {
    std::mt19937_64 rng(derive_seed(mc.master_seed, static_cast<std::uint64_t>(t)));
    RunConfig cfg = base;
    cfg.record_every = 0;
    cfg.record_states = false;
    if (mc.x0_uniform_b) {
      cfg.x0.resize(n);
      for (int k = 0; k < n; ++k) cfg.x0(k) = (2.0 * uniform01(rng) - 1.0) * *mc.x0_uniform_b;
    }
    TrialOut& o = results[static_cast<std::size_t>(t)];
    o.r = cfg.x0.mean();
    o.w.assign(w_iters.size(), 0.0);

    std::function<void(long long, const Vector&)> obs;
    if (track_w) {
      obs = [&](long long i, const Vector& x) {
        auto it = std::lower_bound(w_iters.begin(), w_iters.end(), i);
        if (it != w_iters.end() && *it == i) {
          const std::size_t k = static_cast<std::size_t>(it - w_iters.begin());
          o.w[k] = (1.0 + x.dot(lbar * x)) * w_tail[k];
        }
      };
    }

    RunOutcome out = mc.qcf ? run_qcf(cfg, rng, obs) : run_qc(cfg, rng, obs);
    o.theta = out.theta_hat;
    o.saturated = out.status == RunStatus::Saturated;
    o.spread = detail::spread_of(out.final_state);
    o.eps_ok = true;
    for (int k = 0; k < n; ++k)
      if (std::abs(out.final_state(k) - o.r) >= mc.epsilon) {
        o.eps_ok = false;
        break;
      }
  };

  int threads = mc.threads > 0 ? mc.threads
                               : static_cast<int>(std::thread::hardware_concurrency());
  threads = static_cast<int>(std::max<long long>(1, std::min<long long>(threads, mc.trials)));
  if (threads == 1) {
    for (long long t = 0; t < mc.trials; ++t) run_trial(t);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w)
      pool.emplace_back([&, w] {
        for (long long t = w; t < mc.trials; t += threads) run_trial(t);
      });
    for (auto& th : pool) th.join();
  }

  EnsembleStats st;
  st.trials = mc.trials;
  st.w_iterations = w_iters;
  const double T = static_cast<double>(mc.trials);
  double sum_theta = 0.0, sum_theta_sq = 0.0, sum_mse = 0.0, sum_r = 0.0;
  long long sat = 0, eps_ok = 0;
  std::vector<double> spreads;
  spreads.reserve(results.size());
  std::vector<double> w_sum(w_iters.size(), 0.0), w_sum_sq(w_iters.size(), 0.0);
  for (const TrialOut& o : results) {
    sum_theta += o.theta;
    sum_theta_sq += o.theta * o.theta;
    sum_mse += (o.theta - o.r) * (o.theta - o.r);
    sum_r += o.r;
    sat += o.saturated ? 1 : 0;
    eps_ok += o.eps_ok ? 1 : 0;
    spreads.push_back(o.spread);
    for (std::size_t k = 0; k < o.w.size(); ++k) {
      w_sum[k] += o.w[k];
      w_sum_sq[k] += o.w[k] * o.w[k];
    }
  }
  st.mean_theta = sum_theta / T;
  st.std_theta = T > 1 ? std::sqrt(std::max(0.0, (sum_theta_sq - T * st.mean_theta * st.mean_theta) / (T - 1.0)))
                       : 0.0;
  st.empirical_mse = sum_mse / T;
  st.saturation_frequency = static_cast<double>(sat) / T;
  st.eps_consensus_frequency = static_cast<double>(eps_ok) / T;
  st.mean_r = sum_r / T;
  st.mean_w.resize(w_iters.size());
  st.se_w.resize(w_iters.size());
  for (std::size_t k = 0; k < w_iters.size(); ++k) {
    st.mean_w[k] = w_sum[k] / T;
    const double var = T > 1 ? std::max(0.0, (w_sum_sq[k] - T * st.mean_w[k] * st.mean_w[k]) / (T - 1.0))
                             : 0.0;
    st.se_w[k] = std::sqrt(var / T);
  }
  std::sort(spreads.begin(), spreads.end());
  auto quantile = [&](double q) {
    const double pos = q * (static_cast<double>(spreads.size()) - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, spreads.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return spreads[lo] * (1.0 - frac) + spreads[hi] * frac;
  };
  st.spread_q10 = quantile(0.1);
  st.spread_q50 = quantile(0.5);
  st.spread_q90 = quantile(0.9);
  return st;
}

}  // namespace qcons
