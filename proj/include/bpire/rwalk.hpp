#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bpire/env_model.hpp"

namespace bpire {

// Exact mixture moments of X = log m_1.
struct WalkStats {
  double mu = 0.0;      // E X
  double sigma2 = 0.0;  // Var X
  double kappa3 = 0.0;  // third cumulant
  double kappa4 = 0.0;  // fourth cumulant
  double sigma() const;
};

// Characteristic function of log m_1: sum_a w_a exp(i s log m_a).
std::complex<double> walk_char_fn(const EnvironmentModel& model, double s);

WalkStats walk_stats(const EnvironmentModel& model);

// Indices nu(0)=0 < nu(1) < ... where every strictly later value exceeds the
// value at the index. The last index never qualifies (it has no later value).
std::vector<std::size_t> prospective_minima(std::span<const double> walk);

struct MinimaDensityResult {
  double epsilon = 0.0;        // the density threshold actually used
  double eps_drift = 0.0;      // drift subtracted from the truncated walk
  double truncated_mean = 0.0; // E[Xbar] after level-a truncation
  double mean_nu1 = 0.0;       // pilot estimate of E[nu(1)]
  double tail_prob = 0.0;      // empirical P(#{j: nu(j) <= n} < epsilon n)
  double tail_se = 0.0;
  std::size_t horizon = 0;
  std::string note;
};

// Empirical check of the prospective-minima density bound. Walks use the
// level-a truncated increments minus eps_drift (defaults: a = 10, drift =
// half the truncated mean when eps_drift <= 0). Minima are computed on a 4n
// horizon, which can only over-count the infinite-horizon definition; the
// note records that bias.
MinimaDensityResult minima_density_check(const EnvironmentModel& model, std::int64_t a,
                                         double eps_drift, std::size_t n, std::size_t R,
                                         std::uint64_t seed, double epsilon = 0.0);

struct EdgeworthSpec {
  int order = 3;
  double shift_b = 0.0;  // survival-conditioned location correction
  WalkStats stats;
};

// First-order Edgeworth CDF for the survival-conditioned statistic:
//   G_3(x) = Phi(x) - phi(x) n^{-1/2} P_3(x),
//   P_3(x) = kappa3/(6 sigma^3) (x^2 - 1) + b/sigma.
// Requires sigma2 > 0 and order 3 (higher orders are not supported).
double edgeworth_g3(double x, std::size_t n, const EdgeworthSpec& spec);

// Smallest n for which G_3 is nondecreasing on [-4,4] (grid argument bound).
std::size_t edgeworth_monotone_threshold(const EdgeworthSpec& spec);

struct CramerResult {
  double sup_lambda = 0.0;  // max |lambda(s)| over the scanned grid
  double s_at_sup = 0.0;
  bool flag = false;  // true iff sup <= 1 - 1e-3 on the grid (heuristic)
};

// Finite-grid scan of |lambda| over |s| in [1, s_max]. Finite mixtures are
// almost periodic, so this can only ever be a heuristic, never a proof.
CramerResult cramer_check(const EnvironmentModel& model, double s_max, std::size_t grid);

}  // namespace bpire
