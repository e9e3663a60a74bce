#include "bpire/rwalk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bpire/numeric.hpp"
#include "bpire/rng.hpp"

namespace bpire {

double WalkStats::sigma() const { return std::sqrt(sigma2); }

std::complex<double> walk_char_fn(const EnvironmentModel& model, double s) {
  std::complex<double> acc = 0.0;
  for (const auto& atom : model.atoms()) {
    const double x = std::log(atom.offspring.mean());
    acc += atom.weight * std::complex<double>(std::cos(s * x), std::sin(s * x));
  }
  return acc;
}

WalkStats walk_stats(const EnvironmentModel& model) {
  double m1 = 0.0, m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (const auto& atom : model.atoms()) {
    const double x = std::log(atom.offspring.mean());
    m1 += atom.weight * x;
    m2 += atom.weight * x * x;
    m3 += atom.weight * x * x * x;
    m4 += atom.weight * x * x * x * x;
  }
  WalkStats ws;
  ws.mu = m1;
  ws.sigma2 = std::max(0.0, m2 - m1 * m1);
  ws.kappa3 = m3 - 3.0 * m1 * m2 + 2.0 * m1 * m1 * m1;
  ws.kappa4 = m4 - 4.0 * m3 * m1 - 3.0 * m2 * m2 + 12.0 * m2 * m1 * m1 - 6.0 * m1 * m1 * m1 * m1;
  return ws;
}

std::vector<std::size_t> prospective_minima(std::span<const double> walk) {
  std::vector<std::size_t> out;
  if (walk.empty()) return out;
  out.push_back(0);  // nu(0) = 0 by definition
  if (walk.size() < 2) return out;
  // suffix_min[i] = min over k > i; an interior index qualifies iff every
  // later value strictly exceeds it.
  std::vector<double> suffix_min(walk.size());
  suffix_min[walk.size() - 1] = walk[walk.size() - 1];
  for (std::size_t i = walk.size() - 1; i-- > 0;) {
    suffix_min[i] = std::min(walk[i + 1], suffix_min[i + 1]);
  }
  for (std::size_t i = 1; i + 1 < walk.size(); ++i) {
    if (suffix_min[i] > walk[i]) out.push_back(i);
  }
  return out;
}

MinimaDensityResult minima_density_check(const EnvironmentModel& model, std::int64_t a,
                                         double eps_drift, std::size_t n, std::size_t R,
                                         std::uint64_t seed, double epsilon) {
  if (a < 1) throw std::invalid_argument("minima_density_check: truncation level a must be >= 1");
  if (n < 1 || R < 1) throw std::invalid_argument("minima_density_check: need n >= 1, R >= 1");

  // Per-atom truncated increments Xbar = log E[min(N, a)].
  std::vector<double> xbar;
  std::vector<double> weights;
  double mean_xbar = 0.0;
  for (const auto& atom : model.atoms()) {
    const double tm = atom.offspring.truncated_mean(a);
    if (!(tm > 0.0)) {
      throw std::invalid_argument("minima_density_check: truncated mean vanished for atom");
    }
    xbar.push_back(std::log(tm));
    weights.push_back(atom.weight);
    mean_xbar += atom.weight * std::log(tm);
  }
  if (eps_drift <= 0.0) eps_drift = 0.5 * mean_xbar;
  if (!(eps_drift < mean_xbar)) {
    throw std::invalid_argument("minima_density_check: drift must stay below E[Xbar]");
  }

  const std::size_t horizon = 4 * n;
  std::vector<double> walk(horizon + 1, 0.0);

  // Pilot pass: estimate E[nu(1)] to place the density threshold.
  double nu1_sum = 0.0;
  std::size_t nu1_count = 0;
  double count_rate_sum = 0.0;
  const std::size_t pilot = std::min<std::size_t>(R, 256);
  for (std::size_t rep = 0; rep < pilot; ++rep) {
    Rng rng(substream(seed, 0x70, rep));
    double s = 0.0;
    walk[0] = 0.0;
    for (std::size_t i = 1; i <= horizon; ++i) {
      s += xbar[rng.categorical(weights)] - eps_drift;
      walk[i] = s;
    }
    const auto minima = prospective_minima(walk);
    if (minima.size() >= 2) {
      nu1_sum += static_cast<double>(minima[1]);
      ++nu1_count;
    }
    std::size_t within = 0;
    for (std::size_t idx : minima) within += idx <= n ? 1 : 0;
    count_rate_sum += static_cast<double>(within) / static_cast<double>(n);
  }
  const double mean_nu1 = nu1_count > 0 ? nu1_sum / static_cast<double>(nu1_count) : 0.0;
  if (epsilon <= 0.0) {
    // Stay below the empirical density (and below 1/E[nu(1)]).
    epsilon = 0.8 * count_rate_sum / static_cast<double>(pilot);
    if (mean_nu1 > 0.0) epsilon = std::min(epsilon, 0.9 / mean_nu1);
  }

  std::vector<double> hits(R, 0.0);
  parallel_for(R, 0, [&](std::size_t rep) {
    Rng rng(substream(seed, 0x71, rep));
    std::vector<double> w(horizon + 1, 0.0);
    double s = 0.0;
    for (std::size_t i = 1; i <= horizon; ++i) {
      s += xbar[rng.categorical(weights)] - eps_drift;
      w[i] = s;
    }
    const auto minima = prospective_minima(w);
    std::size_t within = 0;
    for (std::size_t idx : minima) within += idx <= n ? 1 : 0;
    hits[rep] = (static_cast<double>(within) < epsilon * static_cast<double>(n)) ? 1.0 : 0.0;
  });
  const MeanSE ms = mean_and_se(hits);

  MinimaDensityResult out;
  out.epsilon = epsilon;
  out.eps_drift = eps_drift;
  out.truncated_mean = mean_xbar;
  out.mean_nu1 = mean_nu1;
  out.tail_prob = ms.mean;
  out.tail_se = ms.std_error;
  out.horizon = horizon;
  out.note = "minima computed on a 4n horizon; the finite horizon can only over-count, "
             "so the reported tail probability is not inflated";
  return out;
}

double edgeworth_g3(double x, std::size_t n, const EdgeworthSpec& spec) {
  if (spec.order != 3) throw std::invalid_argument("edgeworth_g3: only order 3 is supported");
  if (!(spec.stats.sigma2 > 0.0)) throw std::invalid_argument("edgeworth_g3: sigma2 must be > 0");
  if (n < 1) throw std::invalid_argument("edgeworth_g3: n must be >= 1");
  const double sigma = spec.stats.sigma();
  const double p3 = spec.stats.kappa3 / (6.0 * sigma * sigma * sigma) * (x * x - 1.0) +
                    spec.shift_b / sigma;
  return normal_cdf(x) - normal_pdf(x) * p3 / std::sqrt(static_cast<double>(n));
}

std::size_t edgeworth_monotone_threshold(const EdgeworthSpec& spec) {
  const double sigma = spec.stats.sigma();
  const double c3 = spec.stats.kappa3 / (6.0 * sigma * sigma * sigma);
  const double c0 = spec.shift_b / sigma;
  // d/dx G_3 = phi(x) (1 + n^{-1/2} (x P_3(x) - P_3'(x))); positive once
  // n > sup_x |x P_3 - P_3'|^2 over the grid range.
  double worst = 0.0;
  for (double x = -4.0; x <= 4.0 + 1e-9; x += 0.01) {
    const double p3 = c3 * (x * x - 1.0) + c0;
    const double dp3 = 2.0 * c3 * x;
    worst = std::max(worst, std::fabs(x * p3 - dp3));
  }
  return static_cast<std::size_t>(std::ceil(worst * worst)) + 1;
}

CramerResult cramer_check(const EnvironmentModel& model, double s_max, std::size_t grid) {
  if (!(s_max >= 1.0)) throw std::invalid_argument("cramer_check: s_max must be >= 1");
  if (grid < 2) throw std::invalid_argument("cramer_check: grid must be >= 2");
  CramerResult out;
  for (std::size_t i = 0; i < grid; ++i) {
    const double s =
        1.0 + (s_max - 1.0) * static_cast<double>(i) / static_cast<double>(grid - 1);
    const double v = std::abs(walk_char_fn(model, s));
    if (v > out.sup_lambda) {
      out.sup_lambda = v;
      out.s_at_sup = s;
    }
  }
  out.flag = out.sup_lambda <= 1.0 - 1e-3;
  return out;
}

}  // namespace bpire
