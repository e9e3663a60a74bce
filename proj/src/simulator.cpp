#include "bpire/simulator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "bpire/numeric.hpp"

namespace bpire {

namespace {
constexpr std::uint64_t kEnvTag = 0x01;
constexpr std::uint64_t kPathTag = 0x02;
}  // namespace

std::int64_t sample_one(const DistSpec& spec, Rng& rng) {
  switch (spec.kind()) {
    case DistKind::PointMass:
      return spec.point();
    case DistKind::Poisson:
      return rng.poisson(spec.poisson_mean());
    case DistKind::LinearFractional:
      if (rng.next_double() < spec.lf_a()) return 0;
      return 1 + rng.geometric(spec.lf_b());
    case DistKind::Finite: {
      const auto& p = spec.finite_probs();
      const double u = rng.next_double();
      double acc = 0.0;
      for (std::size_t j = 0; j + 1 < p.size(); ++j) {
        acc += p[j];
        if (u < acc) return static_cast<std::int64_t>(j);
      }
      return static_cast<std::int64_t>(p.size() - 1);
    }
  }
  return 0;
}

std::int64_t sample_offspring_sum(const DistSpec& spec, std::int64_t z, Rng& rng) {
  if (z < 0) throw std::invalid_argument("sample_offspring_sum: z must be >= 0");
  if (z == 0) return 0;
  switch (spec.kind()) {
    case DistKind::PointMass:
      return z * spec.point();
    case DistKind::Poisson:
      return rng.poisson(static_cast<double>(z) * spec.poisson_mean());
    case DistKind::LinearFractional: {
      const std::int64_t families = rng.binomial(z, 1.0 - spec.lf_a());
      if (families == 0) return 0;
      const double b = spec.lf_b();
      if (b == 0.0) return families;
      // Sum of `families` shifted geometrics: families + NB(families, b),
      // with NB drawn as Poisson(Gamma(families) * b/(1-b)).
      const double rate = rng.gamma(static_cast<double>(families)) * b / (1.0 - b);
      return families + rng.poisson(rate);
    }
    case DistKind::Finite: {
      const auto& p = spec.finite_probs();
      std::int64_t remaining = z;
      double mass_left = 1.0;
      std::int64_t total = 0;
      for (std::size_t j = 0; j < p.size() && remaining > 0; ++j) {
        if (j + 1 == p.size()) {
          total += static_cast<std::int64_t>(j) * remaining;
          break;
        }
        const double cond = mass_left > 0.0 ? std::min(1.0, p[j] / mass_left) : 1.0;
        const std::int64_t c = rng.binomial(remaining, cond);
        total += static_cast<std::int64_t>(j) * c;
        remaining -= c;
        mass_left -= p[j];
      }
      return total;
    }
  }
  return 0;
}

PathState::PathState(std::int64_t k) : z_(k) {
  if (k < 0) throw std::invalid_argument("PathState: initial count must be >= 0");
}

double PathState::log_count() const {
  if (approx_) return log_z_;
  if (z_ == 0) return -std::numeric_limits<double>::infinity();
  return std::log(static_cast<double>(z_));
}

void PathState::maybe_switch(const EnvStep& env) {
  if (approx_ || z_ == 0) return;
  const double zd = static_cast<double>(z_);
  const double predicted = zd * env.offspring.mean() + env.immigration.mean() +
                           10.0 * std::sqrt(zd * env.offspring.variance() +
                                            env.immigration.variance() + 1.0);
  if (predicted > kExactLimit) {
    approx_ = true;
    approx_from_ = gen_;
    log_z_ = std::log(zd);
  }
}

void PathState::approx_step(double m, double v, double im, double iv, Rng& rng) {
  // Z' = Z m + im + sqrt(Z v + iv) G; computed in log space since Z overflows.
  const double g = rng.normal();
  const double inv_sqrt_z = std::exp(-0.5 * log_z_);
  double ratio =
      (im * inv_sqrt_z * inv_sqrt_z + std::sqrt(v + iv * inv_sqrt_z * inv_sqrt_z) * inv_sqrt_z * g) /
      m;
  if (ratio < -0.999999) ratio = -0.999999;  // Z here is astronomically large
  log_z_ += std::log(m) + std::log1p(ratio);
}

void PathState::step(const EnvStep& env, Rng& rng) {
  maybe_switch(env);
  ++gen_;
  if (!approx_) {
    z_ = sample_offspring_sum(env.offspring, z_, rng) + sample_one(env.immigration, rng);
    return;
  }
  approx_step(env.offspring.mean(), env.offspring.variance(), env.immigration.mean(),
              env.immigration.variance(), rng);
}

void PathState::step_offspring_only(const DistSpec& f, Rng& rng) {
  EnvStep probe{f, DistSpec::point_mass(0)};
  maybe_switch(probe);
  ++gen_;
  if (!approx_) {
    z_ = sample_offspring_sum(f, z_, rng);
    return;
  }
  approx_step(f.mean(), f.variance(), 0.0, 0.0, rng);
}

PathSample simulate_quenched(const EnvPath& env, std::int64_t k, std::uint64_t seed) {
  Rng rng(seed);
  PathState state(k);
  PathSample out;
  out.path_seed = seed;
  const std::size_t n = env.steps.size();
  out.z.reserve(n + 1);
  out.log_z.reserve(n + 1);
  out.survived_at.reserve(n + 1);
  auto record = [&]() {
    out.z.push_back(state.exact() ? state.count() : -1);
    out.log_z.push_back(state.log_count());
    out.survived_at.push_back(state.alive());
  };
  record();
  for (std::size_t i = 0; i < n; ++i) {
    state.step(env.steps[i], rng);
    record();
  }
  out.approx_from = state.approx_from();
  return out;
}

std::pair<EnvPath, PathSample> simulate_annealed(const EnvironmentModel& model, std::int64_t k,
                                                 std::size_t n, std::uint64_t seed) {
  const std::uint64_t env_seed = substream(seed, kEnvTag);
  const std::uint64_t path_seed = substream(seed, kPathTag);
  EnvPath env = sample_env(model, n, env_seed);
  PathSample path = simulate_quenched(env, k, path_seed);
  path.env_seed = env_seed;
  return {std::move(env), std::move(path)};
}

DecomposedSample simulate_decomposed(const EnvPath& env, std::int64_t k, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = env.steps.size();
  constexpr std::int64_t kGuard = std::int64_t(1) << 60;

  std::vector<std::int64_t> lines;  // lines[i-1] = current value of Z0_{i,.}
  lines.reserve(n);
  DecomposedSample out;
  out.z0.reserve(n + 1);
  out.z.reserve(n + 1);
  std::int64_t z0 = k;
  out.z0.push_back(z0);
  out.z.push_back(z0);
  for (std::size_t g = 1; g <= n; ++g) {
    const DistSpec& f = env.steps[g - 1].offspring;
    z0 = sample_offspring_sum(f, z0, rng);
    for (auto& line : lines) line = sample_offspring_sum(f, line, rng);
    lines.push_back(sample_one(env.steps[g - 1].immigration, rng));  // Y_g founds line g
    std::int64_t total = z0;
    for (std::int64_t line : lines) {
      total += line;
      if (total > kGuard || line > kGuard) {
        throw std::overflow_error("simulate_decomposed: population left the exact regime");
      }
    }
    out.z0.push_back(z0);
    out.z.push_back(total);
  }
  out.immig_lines = std::move(lines);
  return out;
}

DeltaSummary delta_records(const EnvironmentModel& model, std::int64_t k, std::size_t n,
                           std::size_t R, double p, double r, std::uint64_t seed,
                           unsigned workers) {
  if (R < 100) throw std::invalid_argument("delta_records: R must be >= 100");
  if (!(p > 1.0 && p <= 2.0)) throw std::invalid_argument("delta_records: p must be in (1,2]");
  if (!(r >= 0.0)) throw std::invalid_argument("delta_records: r must be >= 0");

  std::vector<double> term_a(R, 0.0), term_b(R, 0.0), term_c(R, 0.0);
  std::vector<unsigned char> alive_n(R, 0), alive_both(R, 0);
  parallel_for(R, workers, [&](std::size_t rep) {
    Rng env_rng(substream(seed, kEnvTag, rep));
    Rng path_rng(substream(seed, kPathTag, rep));
    PathState state(k);
    // Steps 1..n, then record the transition n -> n+1.
    for (std::size_t g = 0; g < n; ++g) {
      const auto& atom = model.atoms()[model.sample_atom(env_rng)];
      state.step(EnvStep{atom.offspring, atom.immigration}, path_rng);
    }
    if (!state.alive()) return;
    alive_n[rep] = 1;
    const double log_zn = state.log_count();
    const auto& atom = model.atoms()[model.sample_atom(env_rng)];
    const double m = atom.offspring.mean();
    state.step(EnvStep{atom.offspring, atom.immigration}, path_rng);
    const double log_mz = std::log(m) + log_zn;
    // log Delta_n = log Z_{n+1} - log(m_{n+1} Z_n); expm1 keeps |Delta-1|
    // accurate when the ratio is within rounding of 1.
    const double log_delta = state.log_count() - log_mz;
    const double abs_dm1 = std::fabs(std::expm1(log_delta));
    term_a[rep] = std::pow(abs_dm1, p);
    term_b[rep] = std::pow(std::fabs(log_mz), r) * term_a[rep];
    if (state.alive()) {
      alive_both[rep] = 1;
      term_c[rep] = std::fabs(log_delta);
    }
  });

  DeltaSummary out;
  out.paths = R;
  for (auto f : alive_n) out.alive_at_n += f;
  if (out.alive_at_n == 0) {
    throw std::runtime_error("delta_records: all paths extinct at n");
  }
  auto fill = [&](const std::vector<double>& vals, DeltaSummary::Term& term,
                  const std::vector<unsigned char>& mask) {
    const MeanSE ms = mean_and_se(vals);
    term.estimate = ms.mean;
    term.std_error = ms.std_error;
    std::size_t c = 0;
    for (auto f : mask) c += f;
    term.count = c;
  };
  fill(term_a, out.abs_delta_pow, alive_n);
  fill(term_b, out.weighted_abs_delta_pow, alive_n);
  fill(term_c, out.abs_log_delta, alive_both);
  return out;
}

}  // namespace bpire
