#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpire/env_model.hpp"
#include "bpire/pgf_engine.hpp"
#include "bpire/rwalk.hpp"

namespace bpire {

// One point of a decay curve: a positive estimate with its standard error.
struct FitPoint {
  double n = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct DecayFit {
  struct LogPoint {
    double n = 0.0;
    double log_p = 0.0;
    double err = 0.0;  // delta-method error of log_p
  };
  std::vector<LogPoint> points;
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_se = 0.0;
  // One-sided 99% upper confidence bound for the slope.
  double slope_ucb99() const { return slope + 2.3263478740408408 * slope_se; }
};

// Weighted least squares of log(estimate) against n, weights 1/err^2 with
// err = std_error/estimate (delta method). Points with n < min_n or with
// nonpositive estimates are dropped; fewer than 3 surviving points throw.
DecayFit fit_log_decay(std::span<const FitPoint> points, double min_n = 5.0);

struct KSReport {
  std::size_t n_samples = 0;
  double ks_stat = 0.0;
  std::string target;  // "normal" or "edgeworth_g3"
};

// ---------------------------------------------------------------------------
// Small-value decay (rate rho) and its relatives.

struct DecayRateResult {
  DecayFit fit;          // log P_k(Z_n = j) against n
  DecayFit range_fit;    // log P_1(1 <= Z_n <= k_n), k_n = ceil(log n)
  std::vector<FitPoint> raw;       // the annealed estimates behind `fit`
  std::vector<FitPoint> range_raw;
};

// Exact-quenched conditional Monte Carlo estimates of P_k(Z_n = j) over
// n_list, fitted on the log scale. K only needs to cover the queried states.
DecayRateResult decay_rate(const EnvironmentModel& model, std::int64_t k, std::int64_t j,
                           const std::vector<std::size_t>& n_list, std::size_t R,
                           std::uint64_t seed, std::size_t K = 32, unsigned workers = 0);

struct SupermultRow {
  std::size_t n = 0, m = 0;
  double lhs = 0.0, lhs_se = 0.0;   // P_1(Z_{n+m} = 1)
  double rhs = 0.0, rhs_se = 0.0;   // P_1(Z_n = 1) P_1(Z_m = 1)
  bool pass = false;                // lhs >= rhs - 3 * combined SE
};

std::vector<SupermultRow> supermultiplicativity_check(
    const EnvironmentModel& model, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
    std::size_t R, std::uint64_t seed, std::size_t K = 32, unsigned workers = 0);

struct ExtinctionDecayResult {
  DecayFit fit;
  std::vector<FitPoint> raw;
  bool degenerate = false;  // all probabilities zero (e.g. forced immigration)
};

ExtinctionDecayResult extinction_decay(const EnvironmentModel& model, std::int64_t k,
                                       const std::vector<std::size_t>& n_list, std::size_t R,
                                       std::uint64_t seed, unsigned workers = 0);

struct LowerDeviationResult {
  DecayFit fit;
  std::vector<FitPoint> raw;
  std::vector<std::int64_t> thresholds;  // floor(e^{theta n}) per n
  std::string method;                    // "exact_series"
};

// P_k(1 <= Z_n <= e^{theta n}) with theta in (0, mu), by exact quenched laws
// truncated just past the threshold. Throws when theta >= mu or when the
// threshold exceeds the exact cutoff cap.
LowerDeviationResult lower_deviation(const EnvironmentModel& model, std::int64_t k, double theta,
                                     const std::vector<std::size_t>& n_list, std::size_t R,
                                     std::uint64_t seed, std::size_t k_cap = 65536,
                                     unsigned workers = 0);

struct HarmonicMomentResult {
  DecayFit fit;
  std::vector<FitPoint> raw;   // bracket midpoints; std_error includes the bracket
  std::vector<double> bracket_halfwidth;  // deterministic truncation bracket per n
  bool bracket_dominated = false;
};

// E_k[Z_n^{-alpha}; Z_n > 0] via the exact law for j <= K plus the
// deterministic bracket [0, K^{-alpha} tail] for the remainder, averaged over
// R environments. `constrained` switches to the pathwise variant
// E_k[Z_n^{-alpha}; Z_1 >= n0, ..., Z_n >= n0] by simulation.
HarmonicMomentResult harmonic_moment(const EnvironmentModel& model, std::int64_t k, double alpha,
                                     const std::vector<std::size_t>& n_list, std::size_t R,
                                     std::uint64_t seed, std::size_t K = 1024,
                                     bool constrained = false, std::int64_t n0 = 2,
                                     unsigned workers = 0);

struct LogMomentExtinctionResult {
  std::vector<FitPoint> estimates;  // per n: E_k[(log Z_n)^j; Z_{n+1}=0, Z_n>0]
  double sign_test_pvalue = 1.0;    // one-sided, H1 = decreasing over n_list
  bool decreasing = false;          // p-value <= 0.01
  std::size_t zero_event_points = 0;
};

// Paths are simulated to n; the step to extinction is integrated exactly
// (E_atom[f(0)^{Z_n} h(0)]), so the doubly-rare event needs no rare-path luck.
LogMomentExtinctionResult log_moment_on_extinction_step(
    const EnvironmentModel& model, std::int64_t k, int j_power,
    const std::vector<std::size_t>& n_list, std::size_t R, std::uint64_t seed,
    unsigned workers = 0);

// ---------------------------------------------------------------------------
// Survival-conditioned limit theorems.

struct SurvivorSample {
  std::vector<double> log_z;  // log Z_n over surviving paths
  std::size_t attempts = 0;   // total paths simulated
};

// Simulates until at least `target` surviving paths at horizon n are
// collected (whole batches are kept, so the count can exceed target).
SurvivorSample collect_survivors(const EnvironmentModel& model, std::int64_t k, std::size_t n,
                                 std::size_t target, std::uint64_t seed, unsigned workers = 0);

KSReport clt_test(const EnvironmentModel& model, std::int64_t k, std::size_t n, std::size_t R,
                  std::uint64_t seed, unsigned workers = 0);

struct ShiftEstimate {
  double b_hat = 0.0;
  double b_se = 0.0;
  double residual_slope = 0.0;
  double residual_slope_se = 0.0;
  bool drift_warning = false;  // residual slope significantly nonzero
  std::vector<FitPoint> points;  // per n: mean(log Z_n | survival) - n mu
};

// Fits E[log Z_n | Z_n > 0] - n mu to a constant over the largest half of
// n_list; the residual slope is the convergence diagnostic.
ShiftEstimate estimate_shift(const EnvironmentModel& model, std::int64_t k,
                             const std::vector<std::size_t>& n_list, std::size_t R,
                             std::uint64_t seed, unsigned workers = 0);

struct EdgeworthTestRow {
  std::size_t n = 0;
  double d_edgeworth = 0.0;  // sup_x |F_hat - G_3|
  double d_normal = 0.0;     // sup_x |F_hat - Phi|
  std::size_t survivors = 0;
};

// Sup-norm distances on the grid x in [-4, 4] step 0.01.
std::vector<EdgeworthTestRow> edgeworth_test(const EnvironmentModel& model, std::int64_t k,
                                             const std::vector<std::size_t>& n_list,
                                             std::size_t R, double shift_b, std::uint64_t seed,
                                             unsigned workers = 0);

struct EdgeworthOracleResult {
  double d_edgeworth = 0.0;
  double d_normal = 0.0;
  std::size_t n = 0;
};

// Exact small-n comparison: the annealed law of log Z_n from exact quenched
// laws (R environments) against G_3 and Phi. Reported, never asserted.
EdgeworthOracleResult edgeworth_exact_oracle(const EnvironmentModel& model, std::int64_t k,
                                             std::size_t n, std::size_t R, double shift_b,
                                             std::uint64_t seed, unsigned workers = 0);

struct PhiConvergenceRow {
  double s = 0.0;
  std::size_t n = 0;
  std::complex<double> phi_hat;  // E_k[Z_n^{is}; Z_n>0] / lambda(s)^n
  double successive_diff = 0.0;  // |phi_hat(n+1) - phi_hat(n)|, 0 at the last n
};

struct PhiConvergenceResult {
  std::vector<PhiConvergenceRow> rows;
  // Per s: regression slope of log successive difference against n.
  std::vector<std::pair<double, double>> diff_slopes;  // (s, slope)
  double survival_rate_at_max_n = 0.0;
};

// phi_hat over a common path sample (differences are computed path by path,
// so the exponentially small increments are not drowned by independent MC
// noise). s_list entries must keep |lambda(s)| away from 0.
PhiConvergenceResult phi_convergence(const EnvironmentModel& model, std::int64_t k,
                                     const std::vector<double>& s_list,
                                     const std::vector<std::size_t>& n_list, std::size_t R,
                                     std::uint64_t seed, unsigned workers = 0);

struct RenewalCountRow {
  double y = 0.0;
  double mean_count = 0.0;
  double std_error = 0.0;
};

struct RenewalCountResult {
  std::vector<RenewalCountRow> rows;
  double expected = 0.0;  // (C - B) / mu
  std::size_t n_max = 0;
  bool traversal_ok = false;  // log(e^C y_max) + 6 sigma sqrt(n_max) < n_max mu
  std::string criterion;
};

// Mean number of generations with e^B y <= Z_n <= e^C y, per y. n_max = 0
// picks the smallest horizon satisfying the traversal criterion.
RenewalCountResult renewal_count(const EnvironmentModel& model, std::int64_t k,
                                 const std::vector<double>& y_list, double B, double C,
                                 std::size_t n_max, std::size_t R, std::uint64_t seed,
                                 unsigned workers = 0);

}  // namespace bpire
