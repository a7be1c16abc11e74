#pragma once

// Closed-form performance bounds for dithered quantized consensus: MSE,
// excursion, epsilon-consensus, zero-rate, mean/m.s.s. rates, the
// time-varying-step generalization, and the quantizer step design problem.

#include "qcons/graph.hpp"
#include "qcons/weights.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcons {

struct X0Stats {
  double avg0 = 0.0;   // x_avg(0)
  double quad0 = 0.0;  // x0' Lbar x0
};

struct BoundInputs {
  int n_nodes = 0;
  double m_edges = 0.0;  // |M|, the realizable edge count
  double delta = 1.0;
  double lambda2 = 0.0;  // of the mean Laplacian
  double lambdaN = 0.0;
  double b = 0.0;        // initial-state bound
  long long p = 0;       // finite-quantizer level parameter
  double epsilon = 0.0;  // accuracy tolerance
  WeightSequence weights;
  std::optional<X0Stats> x0_stats;
};

struct BoundReport {
  std::string name;
  double value = 0.0;    // raw; probability bounds may leave [0,1]
  double clamped = 0.0;  // presentation value, clipped to [0,1]
  bool is_probability = false;
};

inline BoundReport make_report(std::string name, double value, bool is_probability) {
  BoundReport r;
  r.name = std::move(name);
  r.value = value;
  r.clamped = is_probability ? std::clamp(value, 0.0, 1.0) : value;
  r.is_probability = is_probability;
  return r;
}

namespace detail {

// sum_{n>=1} n^{-q} for q > 1: exact for q = 2, otherwise partial sum plus
// Euler-Maclaurin tail, converged to relative 1e-10.
inline double sum_inv_pow(double q) {
  if (q <= 1.0) throw std::invalid_argument("sum_inv_pow: divergent exponent");
  if (q == 2.0) return std::numbers::pi * std::numbers::pi / 6.0;
  const long long J = 200000;
  double s = 0.0;
  for (long long n = J; n >= 1; --n) s += std::pow(static_cast<double>(n), -q);
  const double x = static_cast<double>(J) + 1.0;
  s += std::pow(x, 1.0 - q) / (q - 1.0) + 0.5 * std::pow(x, -q) +
       q / 12.0 * std::pow(x, -q - 1.0);
  return s;
}

// log(sinh(x)/x), stable for large x.
inline double log_sinh_over_x(double x) {
  if (x == 0.0) return 0.0;
  if (x < 20.0) return std::log(std::sinh(x) / x);
  return x - std::numbers::ln2 + std::log1p(-std::exp(-2.0 * x)) - std::log(x);
}

// log prod_{j>=0} (1 + C/(j+1)^{2 tau}).
// tau = 1 has the closed form sinh(pi sqrt(C))/(pi sqrt(C)).
inline double log_prod_one_plus_tail(double C, double tau) {
  if (C < 0.0) throw std::invalid_argument("log_prod_one_plus_tail: negative coefficient");
  if (C == 0.0) return 0.0;
  if (tau <= 0.5) throw std::invalid_argument("log_prod_one_plus_tail: divergent product");
  if (tau == 1.0) {
    const double x = std::numbers::pi * std::sqrt(C);
    return log_sinh_over_x(x);
  }
  const double q = 2.0 * tau;
  double s = 0.0;
  long long j = 0;
  for (; j < 50'000'000; ++j) {
    const double g = C * std::pow(static_cast<double>(j) + 1.0, -q);
    s += std::log1p(g);
    const double tail = C * std::pow(static_cast<double>(j) + 2.0, 1.0 - q) / (q - 1.0);
    if (tail < 1e-12 * (1.0 + s)) return s;
  }
  // remaining terms are tiny; log1p(g) ~ g there
  const double x = static_cast<double>(j) + 1.0;
  s += C * (std::pow(x, 1.0 - q) / (q - 1.0) + 0.5 * std::pow(x, -q));
  return s;
}

}  // namespace detail

/// sum_{j>=0} alpha(j)^2, scale s included.
inline double sum_alpha_sq(const WeightSequence& w) {
  w.validate();
  if (w.tau <= 0.5) throw std::invalid_argument("sum_alpha_sq: divergent for tau <= 0.5");
  const double sa = w.scale_s * w.a;
  return sa * sa * detail::sum_inv_pow(2.0 * w.tau);
}

/// sum_{j>=0} alpha(j)^2 Delta(j)^2 for the time-varying step schedule.
inline double sum_alpha_sq_delta_sq(const WeightSequence& w, double base_delta) {
  w.validate();
  if (!w.delta_schedule) return sum_alpha_sq(w) * base_delta * base_delta;
  if (!persistence_check(w).generalized_persistent)
    throw std::invalid_argument("sum_alpha_sq_delta_sq: generalized persistence fails");
  const double c = w.scale_s * w.a * w.delta_schedule->d0;
  return c * c * detail::sum_inv_pow(2.0 * (w.tau - w.delta_schedule->tau_d));
}

// Lyapunov drift coefficient:
// c_g = max(lambdaN^3/lambda2 + 4 N^2 lambdaN/lambda2, 2 |M| Delta^2 lambdaN / 3).
inline double lyapunov_c_g(const BoundInputs& in) {
  if (in.lambda2 <= 0.0) throw std::invalid_argument("lyapunov_c_g: lambda2 must be positive");
  const double N = static_cast<double>(in.n_nodes);
  const double spectral_term =
      in.lambdaN * in.lambdaN * in.lambdaN / in.lambda2 + 4.0 * N * N * in.lambdaN / in.lambda2;
  const double noise_term = 2.0 * in.m_edges * in.delta * in.delta * in.lambdaN / 3.0;
  return std::max(spectral_term, noise_term);
}

inline double g_factor(long long i, const BoundInputs& in) {
  const double al = in.weights.alpha(i);
  return al * al * lyapunov_c_g(in);
}

inline double log_prod_one_plus_g(const BoundInputs& in) {
  const double sa = in.weights.scale_s * in.weights.a;
  return detail::log_prod_one_plus_tail(sa * sa * lyapunov_c_g(in), in.weights.tau);
}

inline double prod_one_plus_g(const BoundInputs& in) {
  return std::exp(log_prod_one_plus_g(in));
}

enum class MseVariant { General, Gossip, Refined, TimeVarying };

// M.S.E. bound on the consensus value theta vs the initial average r.
//   General:     2 |M| Delta^2 / (3 N^2) * sum alpha^2
//   Gossip:      |M| -> 1
//   Refined:     uses E|M(i)|^2 in place of |M| (supplied via m_sq)
//   TimeVarying: 2 |M| / (3 N^2) * sum alpha^2(i) Delta^2(i)
inline BoundReport mse_bound(const BoundInputs& in, MseVariant variant = MseVariant::General,
                             std::optional<double> m_sq = std::nullopt) {
  const double N = static_cast<double>(in.n_nodes);
  const double base = 2.0 / (3.0 * N * N);
  double v = 0.0;
  switch (variant) {
    case MseVariant::General:
      v = base * in.m_edges * in.delta * in.delta * sum_alpha_sq(in.weights);
      break;
    case MseVariant::Gossip:
      v = base * in.delta * in.delta * sum_alpha_sq(in.weights);
      break;
    case MseVariant::Refined:
      if (!m_sq) throw std::invalid_argument("mse_bound: Refined variant needs E|M|^2");
      v = base * in.delta * in.delta * sum_alpha_sq(in.weights) * *m_sq;
      break;
    case MseVariant::TimeVarying:
      v = base * in.m_edges * sum_alpha_sq_delta_sq(in.weights, in.delta);
      break;
  }
  return make_report("mse_bound", v, false);
}

enum class SupBoundForm { FromX0, FromBall };

// P[sup_j ||x(j)|| > a] (FromX0) or P[sup_{n,j} |x_n(j)| > a] (FromBall).
inline BoundReport state_sup_bound(double a, const BoundInputs& in, SupBoundForm form) {
  if (a <= 0.0) throw std::invalid_argument("state_sup_bound: a must be positive");
  const double N = static_cast<double>(in.n_nodes);
  const double S = sum_alpha_sq(in.weights);
  double avg_sq = 0.0, quad = 0.0;
  if (form == SupBoundForm::FromX0) {
    if (!in.x0_stats) throw std::invalid_argument("state_sup_bound: x0 stats required");
    avg_sq = in.x0_stats->avg0 * in.x0_stats->avg0;
    quad = in.x0_stats->quad0;
  } else {
    if (in.b <= 0.0) throw std::invalid_argument("state_sup_bound: b must be positive");
    avg_sq = in.b * in.b;
    quad = N * in.lambdaN * in.b * in.b;
  }
  const double t1 =
      std::sqrt(2.0 * N * avg_sq + 4.0 * in.m_edges * in.delta * in.delta / (3.0 * N) * S) / a;
  const double log_t2 = std::log1p(quad) + log_prod_one_plus_g(in) -
                        std::log1p(0.5 * a * a * in.lambda2);
  return make_report("state_sup_bound", t1 + std::exp(log_t2), true);
}

struct EpsConsensusTerms {
  double mse_term = 0.0;        // Chebyshev term on |theta - r|
  double avg_sup_term = 0.0;    // average-excursion term at level p*Delta
  double residual_term = 0.0;   // supermartingale residual term
  double deviation() const { return mse_term + avg_sup_term + residual_term; }
};

inline EpsConsensusTerms eps_consensus_terms(const BoundInputs& in) {
  if (in.epsilon <= 0.0) throw std::invalid_argument("eps_consensus: epsilon must be positive");
  if (in.p < 1) throw std::invalid_argument("eps_consensus: p must be >= 1");
  if (in.b <= 0.0) throw std::invalid_argument("eps_consensus: b must be positive");
  const double N = static_cast<double>(in.n_nodes);
  const double S = sum_alpha_sq(in.weights);
  const double pd = static_cast<double>(in.p) * in.delta;
  EpsConsensusTerms t;
  t.mse_term = 2.0 * in.m_edges * in.delta * in.delta /
               (3.0 * N * N * in.epsilon * in.epsilon) * S;
  t.avg_sup_term =
      std::sqrt(2.0 * N * in.b * in.b + 4.0 * in.m_edges * in.delta * in.delta / (3.0 * N) * S) /
      pd;
  const double log_t3 = std::log1p(N * in.lambdaN * in.b * in.b) + log_prod_one_plus_g(in) -
                        std::log1p(0.5 * pd * pd * in.lambda2);
  t.residual_term = std::exp(log_t3);
  return t;
}

/// Lower bound on the probability of epsilon-consensus for QCF.
inline BoundReport eps_consensus_lb(const BoundInputs& in) {
  return make_report("eps_consensus_lb", 1.0 - eps_consensus_terms(in).deviation(), true);
}

inline BoundReport theta_deviation_bound(const BoundInputs& in) {
  return make_report("theta_deviation_bound", eps_consensus_terms(in).deviation(), true);
}

/// Zero-rate (s -> 0) lower bound on the epsilon-consensus probability.
inline BoundReport zero_rate_lb(const BoundInputs& in) {
  if (in.p < 1) throw std::invalid_argument("zero_rate_lb: p must be >= 1");
  if (in.b <= 0.0) throw std::invalid_argument("zero_rate_lb: b must be positive");
  const double N = static_cast<double>(in.n_nodes);
  const double pd = static_cast<double>(in.p) * in.delta;
  const double v = 1.0 - std::sqrt(2.0 * N * in.b * in.b) / pd -
                   (1.0 + N * in.lambdaN * in.b * in.b) /
                       (1.0 + 0.5 * pd * pd * in.lambda2);
  return make_report("zero_rate_lb", v, true);
}

/// Large-argument approximation of the zero-rate residual term.
inline double ratio_approx(const BoundInputs& in) {
  const double N = static_cast<double>(in.n_nodes);
  const double pd = static_cast<double>(in.p) * in.delta;
  return 2.0 * N * in.b * in.b / (pd * pd) * (in.lambdaN / in.lambda2);
}

struct DeltaOptimum {
  double delta_star = 0.0;
  double objective = 0.0;           // deviation sum at delta_star
  double grid_min_objective = 0.0;  // optimality certificate reference
  double t_star_raw = 0.0;          // 1 - objective
  double t_star_clamped = 0.0;
};

// Minimize over Delta > 0 the three-term epsilon-consensus deviation; both
// the Delta^2 terms and the product through c_g depend on Delta. 200-point
// log grid on [1e-6 b, 1e4 b] then golden-section refinement.
inline DeltaOptimum optimize_delta(BoundInputs in) {
  if (in.b <= 0.0) throw std::invalid_argument("optimize_delta: b must be positive");
  auto objective = [&in](double delta) {
    BoundInputs probe = in;
    probe.delta = delta;
    return eps_consensus_terms(probe).deviation();
  };

  const int grid_points = 200;
  const double lo = 1e-6 * in.b, hi = 1e4 * in.b;
  const double log_lo = std::log(lo), log_hi = std::log(hi);
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> grid(grid_points);
  for (int k = 0; k < grid_points; ++k) {
    grid[k] = std::exp(log_lo + (log_hi - log_lo) * k / (grid_points - 1));
    const double v = objective(grid[k]);
    if (v < best_val) {
      best_val = v;
      best = k;
    }
  }
  const double grid_min = best_val;

  // golden section on the bracketing grid cells, in log space
  double a = std::log(grid[std::max(0, best - 1)]);
  double b = std::log(grid[std::min(grid_points - 1, best + 1)]);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a), x2 = a + inv_phi * (b - a);
  double f1 = objective(std::exp(x1)), f2 = objective(std::exp(x2));
  while (b - a > 1e-6 * std::max(1.0, std::abs(a) + std::abs(b))) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = objective(std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = objective(std::exp(x2));
    }
  }
  double delta_star = std::exp(0.5 * (a + b));
  double obj_star = objective(delta_star);
  if (grid_min < obj_star) {
    delta_star = grid[best];
    obj_star = grid_min;
  }

  DeltaOptimum out;
  out.delta_star = delta_star;
  out.objective = obj_star;
  out.grid_min_objective = grid_min;
  out.t_star_raw = 1.0 - obj_star;
  out.t_star_clamped = std::clamp(out.t_star_raw, 0.0, 1.0);
  return out;
}

/// Deterministic mean-state recursion m(i+1) = (I - alpha(i) Lbar) m(i).
/// Requires alpha(i) <= 2/(lambda2 + lambdaN) over the horizon.
inline std::vector<Vector> mean_propagate(const Matrix& lbar, const WeightSequence& w,
                                          const Vector& m0, long long horizon) {
  const SpectralSummary sp = spectral(lbar);
  const double cap = 2.0 / (sp.lambda2 + sp.lambdaN);
  for (long long i = 0; i < horizon; ++i) {
    if (w.alpha(i) > cap)
      throw std::invalid_argument("mean_propagate: alpha(" + std::to_string(i) +
                                  ") exceeds 2/(lambda2+lambdaN)");
  }
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(horizon) + 1);
  out.push_back(m0);
  Vector m = m0;
  for (long long i = 0; i < horizon; ++i) {
    m = m - w.alpha(i) * (lbar * m);
    out.push_back(m);
  }
  return out;
}

/// ||m(i) - r 1|| <= exp(-lambda2 * sum_{j<i} alpha(j)) * ||m(0) - r 1||.
inline double mean_contraction_bound(double lambda2, const WeightSequence& w, long long i,
                                     double initial_distance) {
  double s = 0.0;
  for (long long j = 0; j < i; ++j) s += w.alpha(j);
  return std::exp(-lambda2 * s) * initial_distance;
}

/// Smallest i with varepsilon * alpha(j) >= g(j) for all j >= i; monotone in
/// the parametric family, so a closed-form threshold with a local fix-up.
inline long long i_epsilon(const BoundInputs& in, double varepsilon) {
  if (varepsilon <= 0.0) throw std::invalid_argument("i_epsilon: varepsilon must be positive");
  const double cg = lyapunov_c_g(in);
  auto ok = [&](long long j) { return cg * in.weights.alpha(j) <= varepsilon; };
  const double sa = in.weights.scale_s * in.weights.a;
  long long i = static_cast<long long>(
      std::ceil(std::pow(sa * cg / varepsilon, 1.0 / in.weights.tau) - 1.0));
  i = std::max<long long>(i, 0);
  while (i > 0 && ok(i - 1)) --i;
  while (!ok(i)) ++i;
  return i;
}

/// M.s.s. error bound at iteration i >= i_epsilon, with the residual second
/// moment E||x_perp(i_eps)||^2 supplied by the caller.
inline double mss_bound(const BoundInputs& in, long long i, double varepsilon,
                        double residual_at_i_eps) {
  const double rate_cap = 2.0 * in.lambda2 * in.lambda2 / in.lambdaN;
  if (varepsilon <= 0.0 || varepsilon >= rate_cap)
    throw std::invalid_argument("mss_bound: varepsilon out of (0, 2 lambda2^2/lambdaN)");
  const long long ie = i_epsilon(in, varepsilon);
  if (i < ie) throw std::invalid_argument("mss_bound: i below i_epsilon");
  const double rate = rate_cap - varepsilon;
  const double cg = lyapunov_c_g(in);

  double alpha_sum = 0.0;  // sum_{j=ie}^{i-1} alpha(j)
  for (long long j = ie; j < i; ++j) alpha_sum += in.weights.alpha(j);
  const double t1 = in.lambdaN / in.lambda2 * std::exp(-rate * alpha_sum) * residual_at_i_eps;

  // suffix sums of alpha over (j, i-1]
  double t2 = 0.0, suffix = 0.0;
  for (long long j = i - 1; j >= ie; --j) {
    const double al = in.weights.alpha(j);
    t2 += std::exp(-rate * suffix) * (al * al * cg);
    suffix += al;
  }
  t2 /= in.lambda2;

  double t3 = 0.0;
  for (long long j = 0; j < i; ++j) {
    const double al = in.weights.alpha(j);
    t3 += al * al;
  }
  t3 *= 2.0 * in.m_edges * in.delta * in.delta / 3.0;
  return t1 + t2 + t3;
}

}  // namespace qcons
