#pragma once

#include <cstdint>
#include <vector>

namespace bpire {

// SplitMix64 step. Advances `state` and returns the next output.
std::uint64_t splitmix64(std::uint64_t& state);

// Derives the seed of a named substream from a root seed.
//
// The scheme is fixed (see docs/rng.md): each key is folded in turn,
//   h <- splitmix64_out(h XOR (key + 0x9E3779B97F4A7C15))
// so substream(root, {a, b}) == substream(substream(root, {a}), {b}).
// Experiments address replication r of kind t as substream(seed, {t, r}).
std::uint64_t substream(std::uint64_t root, std::initializer_list<std::uint64_t> keys);
std::uint64_t substream(std::uint64_t root, std::uint64_t key);
std::uint64_t substream(std::uint64_t root, std::uint64_t k1, std::uint64_t k2);

// xoshiro256++ generator, seeded via SplitMix64 expansion of a 64-bit seed.
// All distribution samplers below are our own implementations so that
// streams are identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform double in [0,1), 53 usable bits.
  double next_double();
  // Uniform double in (0,1], safe for log().
  double next_double_open();

  // Standard normal (Box-Muller, one spare cached per instance).
  double normal();

  // Poisson with arbitrary mean >= 0. Inversion for small means,
  // transformed rejection (PTRS) for mean >= 10.
  std::int64_t poisson(double mean);

  // Binomial(n, p). Inversion when n*min(p,1-p) < 10, else transformed
  // rejection (BTRS).
  std::int64_t binomial(std::int64_t n, double p);

  // Gamma(shape, scale=1) by Marsaglia-Tsang squeeze; shape < 1 boosted.
  double gamma(double shape);

  // Number of failures G with P(G=g) = (1-b) b^g, g >= 0.
  std::int64_t geometric(double b);

  // Index i with probability weights[i] / sum(weights).
  std::size_t categorical(const std::vector<double>& weights);

 private:
  std::uint64_t s_[4];
  double spare_normal_ = 0.0;
  bool has_spare_ = false;

  std::int64_t poisson_inversion(double mean);
  std::int64_t poisson_ptrs(double mean);
  std::int64_t binomial_inversion(std::int64_t n, double p);
  std::int64_t binomial_btrs(std::int64_t n, double p);
};

}  // namespace bpire
