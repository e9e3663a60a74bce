#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "bpire/env_model.hpp"
#include "bpire/rng.hpp"

namespace bpire {

// Exact counts are kept while the next generation is guaranteed to stay
// below 2^53 (the integer resolution of double, which the aggregated
// samplers rely on). Past that the path tracks log Z_n through a normal
// approximation of the one-step sum; the switch generation is recorded and
// the per-step relative error is O(Z^{-1/2}).
constexpr double kExactLimit = 9.0e15;

// One-step evolution of a population. Aggregated draws are used so a step
// costs O(1) regardless of z:
//   point_mass(j): z*j deterministically
//   poisson(m):    Poisson(z*m)
//   linear_fractional(a,b): B ~ Binomial(z, 1-a) nonzero families, then
//                  B + NegBinomial(B, b) via the Poisson-Gamma mixture
//   finite:        multinomial counts via sequential binomials
// Each aggregate equals the law of the sum of z i.i.d. draws.
std::int64_t sample_offspring_sum(const DistSpec& spec, std::int64_t z, Rng& rng);

// Single draw (used for immigration and small founder groups).
std::int64_t sample_one(const DistSpec& spec, Rng& rng);

// Walks one trajectory generation by generation.
class PathState {
 public:
  explicit PathState(std::int64_t k);

  void step(const EnvStep& env, Rng& rng);           // offspring + immigration
  void step_offspring_only(const DistSpec& f, Rng& rng);

  bool alive() const { return approx_ || z_ > 0; }
  bool exact() const { return !approx_; }
  // Valid only while exact().
  std::int64_t count() const { return z_; }
  // log Z; -inf when extinct. Exact log of the count while exact().
  double log_count() const;
  std::optional<std::size_t> approx_from() const { return approx_from_; }

 private:
  std::int64_t z_ = 0;
  double log_z_ = 0.0;
  bool approx_ = false;
  std::optional<std::size_t> approx_from_;
  std::size_t gen_ = 0;

  void maybe_switch(const EnvStep& env);
  void approx_step(double m, double v, double im, double iv, Rng& rng);
};

struct PathSample {
  std::vector<std::int64_t> z;  // exact counts; -1 past the approx switch
  std::vector<double> log_z;    // log Z_i (usable in every regime)
  std::vector<bool> survived_at;
  std::uint64_t env_seed = 0;
  std::uint64_t path_seed = 0;
  std::optional<std::size_t> approx_from;
  std::size_t length() const { return z.empty() ? 0 : z.size() - 1; }
};

// Simulates Z_0 = k, ..., Z_n under a fixed environment. Reproducible in seed.
PathSample simulate_quenched(const EnvPath& env, std::int64_t k, std::uint64_t seed);

// Samples an environment from the model, then a path in it; the two streams
// are independent substreams of seed.
std::pair<EnvPath, PathSample> simulate_annealed(const EnvironmentModel& model, std::int64_t k,
                                                 std::size_t n, std::uint64_t seed);

struct DecomposedSample {
  std::vector<std::int64_t> z0;           // founders' classic line
  std::vector<std::int64_t> immig_lines;  // Z0_{i,n} at the horizon, i = 1..n
  std::vector<std::int64_t> z;            // the full path; z[g] = z0[g] + sum_i lines
};

// Couples the process to its ancestral decomposition: the founders' classic
// line plus, for each generation i, an independent classic subprocess seeded
// by the immigrants Y_i in the shifted environment. The identity
// z[g] = z0[g] + sum_{i<=g} Z0_{i,g} holds exactly by construction.
// Throws std::overflow_error if any line leaves the exact regime.
DecomposedSample simulate_decomposed(const EnvPath& env, std::int64_t k, std::uint64_t seed);

struct DeltaSummary {
  // Mean with standard error and the number of contributing paths.
  struct Term {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t count = 0;
  };
  Term abs_delta_pow;          // E[|Delta_n - 1|^p; Z_n > 0]
  Term weighted_abs_delta_pow; // E[|log(m Z_n)|^r |Delta_n - 1|^p; Z_n > 0]
  Term abs_log_delta;          // E[|log Delta_n|; Z_{n+1} > 0, Z_n > 0]
  std::size_t paths = 0;
  std::size_t alive_at_n = 0;
};

// Monte Carlo estimates of the one-step deviation statistics at a fixed
// generation n. Events with Z_n = 0 contribute zero (indicator convention).
DeltaSummary delta_records(const EnvironmentModel& model, std::int64_t k, std::size_t n,
                           std::size_t R, double p, double r, std::uint64_t seed,
                           unsigned workers = 0);

}  // namespace bpire
