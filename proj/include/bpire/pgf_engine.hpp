#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "bpire/env_model.hpp"

namespace bpire {

// Coefficients [s^0..s^K] of a probability generating function, truncated
// at K, with the unaccounted upper mass kept explicit. For series built by
// composition of nonnegative-coefficient pgfs the retained coefficients are
// exact (truncation only removes mass above K); tail_mass = 1 - sum(coeffs).
struct TruncatedPGF {
  std::vector<double> coeffs;
  double tail_mass = 0.0;
  std::size_t cutoff() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
};

enum class LawMethod { SeriesComposition, DFTExtraction };

// Exact conditional law of Z_n given an environment realization.
// coeffs[j] ~ P_k(Z_n = j | env) for j = 0..K. For the series method the
// coefficients are exact up to roundoff; for the DFT method each carries
// aliasing error bounded by tail_mass.
struct QuenchedLaw {
  std::size_t n = 0;
  std::int64_t k = 0;
  std::vector<double> coeffs;
  double tail_mass = 0.0;
  LawMethod method = LawMethod::SeriesComposition;
  std::size_t cutoff() const { return coeffs.empty() ? 0 : coeffs.size() - 1; }
  // Per-coefficient error bar: roundoff-level for series, aliasing bound for DFT.
  double coeff_error() const;
};

// Scalar evaluation of the quenched pgf g_n(k,s) by the backward recursion
// t_n = s, t_{i-1} = f_i(t_i), returning t_0^k * prod_i h_i(t_i).
// Exact up to floating point; requires |s| <= 1.
std::complex<double> quenched_eval(const EnvPath& env, std::int64_t k, std::complex<double> s);
double quenched_eval(const EnvPath& env, std::int64_t k, double s);

// Truncated-series backward pass through the same recursion. Coefficients
// j <= K are exact because composition of nonnegative series is lower
// triangular in the coefficient index.
QuenchedLaw quenched_law_series(const EnvPath& env, std::int64_t k, std::size_t K);

// Series law with the cutoff doubling from k_start until tail_mass < tail_goal
// or the cap is reached (default cap 2^16).
QuenchedLaw quenched_law_series_adaptive(const EnvPath& env, std::int64_t k,
                                         std::size_t k_start = 1024,
                                         double tail_goal = 1e-8,
                                         std::size_t k_cap = 65536);

// Independent extraction oracle: evaluates g at the M-th roots of unity and
// inverts with a radix-2 FFT. coeffs[j] = P(Z=j) plus aliased mass from
// j+M, j+2M, ...; tail_mass is a Chernoff bound on P(Z >= M), which bounds
// the aliasing of every coefficient. M must be a power of two >= 2.
QuenchedLaw quenched_law_dft(const EnvPath& env, std::int64_t k, std::size_t M);

// Closed-form Moebius oracle for environments whose offspring laws are all
// linear fractional: computes f_{0,n}(s)^k through 2x2 matrix products,
// ignoring immigration (the classic process).
std::complex<double> lf_closed_form(const EnvPath& env, std::int64_t k,
                                    std::complex<double> s);

struct ProbValue {
  double value = 0.0;
  double error = 0.0;  // deterministic bound, not a statistical error
};

struct LawQueries {
  ProbValue p_zero;
  ProbValue p_survive;
  std::vector<ProbValue> p_at;  // aligned with the queried j_list
  ProbValue p_range;            // P(1 <= Z <= t)
};

// Reads probabilities off a law. Queries beyond the cutoff throw.
LawQueries law_queries(const QuenchedLaw& law, const std::vector<std::int64_t>& j_list,
                       std::int64_t t);

enum class QueryKind { PZero, PSurvive, PAt, PRange };

struct LawQuery {
  QueryKind kind = QueryKind::PZero;
  std::int64_t j = 0;  // for PAt
  std::int64_t t = 0;  // for PRange: P(1 <= Z <= t)
};

struct MCEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t replications = 0;
  bool tail_dominated = false;  // deterministic bounds exceed the estimate
};

// Conditional Monte Carlo over the environment: samples R environments,
// computes the exact quenched query on each, and averages. The only
// randomness is environmental, so exponentially small probabilities are
// estimated without simulating rare paths. Deterministic in seed and
// independent of the worker count.
MCEstimate annealed_prob(const EnvironmentModel& model, std::int64_t k, std::size_t n,
                         const LawQuery& query, std::size_t R, std::size_t K,
                         std::uint64_t seed, unsigned workers = 0);

// Serializes a law as CSV: j,probability,method,tail_bound (header included).
std::string law_to_csv(const QuenchedLaw& law);

namespace series {
// Truncated power-series helpers (all vectors are coefficient arrays of the
// same length K+1; inputs have nonnegative coefficients).
std::vector<double> mul(const std::vector<double>& a, const std::vector<double>& b);
std::vector<double> pow_int(const std::vector<double>& a, std::int64_t e);
// Applies the analytic outer pgf to a truncated inner series.
std::vector<double> apply_outer(const DistSpec& outer, const std::vector<double>& t);
double eval_horner(const std::vector<double>& coeffs, double s);
}  // namespace series

}  // namespace bpire
