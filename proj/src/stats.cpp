#include "bpire/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "bpire/numeric.hpp"
#include "bpire/rng.hpp"
#include "bpire/simulator.hpp"

namespace bpire {

namespace {

constexpr std::uint64_t kEnvTag = 0x01;
constexpr std::uint64_t kPathTag = 0x02;

// Deterministic chunked reduction: fn fills one accumulator per chunk, the
// chunks are reduced in index order afterwards.
constexpr std::size_t kChunk = 1024;

double binomial_tail_half(std::size_t m, std::size_t s) {
  // P(Bin(m, 1/2) >= s)
  double total = 0.0;
  for (std::size_t i = s; i <= m; ++i) {
    total += std::exp(std::lgamma(static_cast<double>(m) + 1.0) -
                      std::lgamma(static_cast<double>(i) + 1.0) -
                      std::lgamma(static_cast<double>(m - i) + 1.0) -
                      static_cast<double>(m) * 0.6931471805599453094);
  }
  return std::min(1.0, total);
}

}  // namespace

DecayFit fit_log_decay(std::span<const FitPoint> points, double min_n) {
  DecayFit fit;
  for (const auto& pt : points) {
    if (pt.n < min_n) continue;
    if (!(pt.estimate > 0.0)) continue;
    DecayFit::LogPoint lp;
    lp.n = pt.n;
    lp.log_p = std::log(pt.estimate);
    lp.err = std::max(pt.std_error / pt.estimate, 1e-12);
    fit.points.push_back(lp);
  }
  if (fit.points.size() < 3) {
    throw std::runtime_error("fit_log_decay: fewer than 3 usable points");
  }
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& lp : fit.points) {
    const double w = 1.0 / (lp.err * lp.err);
    sw += w;
    sx += w * lp.n;
    sy += w * lp.log_p;
    sxx += w * lp.n * lp.n;
    sxy += w * lp.n * lp.log_p;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0)) throw std::runtime_error("fit_log_decay: singular design (constant n?)");
  fit.slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sxx * sy - sx * sxy) / det;

  double ss_res = 0.0, ss_tot = 0.0;
  const double ybar = sy / sw;
  for (const auto& lp : fit.points) {
    const double w = 1.0 / (lp.err * lp.err);
    const double pred = fit.intercept + fit.slope * lp.n;
    ss_res += w * (lp.log_p - pred) * (lp.log_p - pred);
    ss_tot += w * (lp.log_p - ybar) * (lp.log_p - ybar);
  }
  fit.r_squared = ss_tot > 0.0 ? std::max(0.0, 1.0 - ss_res / ss_tot) : 1.0;
  // Known-variance slope error, inflated when the scatter exceeds the
  // stated errors (chi2/dof > 1).
  double inflation = 1.0;
  if (fit.points.size() > 2) {
    inflation = std::max(1.0, std::sqrt(ss_res / static_cast<double>(fit.points.size() - 2)));
  }
  fit.slope_se = std::sqrt(sw / det) * inflation;
  return fit;
}

DecayRateResult decay_rate(const EnvironmentModel& model, std::int64_t k, std::int64_t j,
                           const std::vector<std::size_t>& n_list, std::size_t R,
                           std::uint64_t seed, std::size_t K, unsigned workers) {
  if (n_list.size() < 3) throw std::invalid_argument("decay_rate: n_list too short");
  for (std::size_t i = 1; i < n_list.size(); ++i) {
    if (n_list[i] <= n_list[i - 1]) throw std::invalid_argument("decay_rate: n_list must increase");
  }
  if (n_list.front() < 2) throw std::invalid_argument("decay_rate: min n must be >= 2");

  DecayRateResult out;
  for (std::size_t n : n_list) {
    const std::int64_t kn =
        std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(std::log(static_cast<double>(n)))));
    const std::size_t cutoff = std::max<std::size_t>(K, static_cast<std::size_t>(std::max(j, kn)) + 2);
    LawQuery at{QueryKind::PAt, j, 0};
    const MCEstimate e = annealed_prob(model, k, n, at, R, cutoff, substream(seed, 0xD1, n), workers);
    out.raw.push_back({static_cast<double>(n), e.estimate, e.std_error});
    LawQuery range{QueryKind::PRange, 0, kn};
    const MCEstimate er =
        annealed_prob(model, 1, n, range, R, cutoff, substream(seed, 0xD2, n), workers);
    out.range_raw.push_back({static_cast<double>(n), er.estimate, er.std_error});
  }
  out.fit = fit_log_decay(out.raw);
  out.range_fit = fit_log_decay(out.range_raw);
  return out;
}

std::vector<SupermultRow> supermultiplicativity_check(
    const EnvironmentModel& model, const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
    std::size_t R, std::uint64_t seed, std::size_t K, unsigned workers) {
  std::map<std::size_t, MCEstimate> cache;
  auto p1 = [&](std::size_t n) -> MCEstimate {
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    LawQuery q{QueryKind::PAt, 1, 0};
    MCEstimate e = annealed_prob(model, 1, n, q, R, K, substream(seed, 0x5A, n), workers);
    cache.emplace(n, e);
    return e;
  };
  std::vector<SupermultRow> rows;
  for (const auto& [n, m] : pairs) {
    const MCEstimate lhs = p1(n + m);
    const MCEstimate an = p1(n);
    const MCEstimate am = p1(m);
    SupermultRow row;
    row.n = n;
    row.m = m;
    row.lhs = lhs.estimate;
    row.lhs_se = lhs.std_error;
    row.rhs = an.estimate * am.estimate;
    row.rhs_se = std::sqrt(am.estimate * am.estimate * an.std_error * an.std_error +
                           an.estimate * an.estimate * am.std_error * am.std_error);
    const double combined = std::sqrt(row.lhs_se * row.lhs_se + row.rhs_se * row.rhs_se);
    row.pass = row.lhs >= row.rhs - 3.0 * combined;
    rows.push_back(row);
  }
  return rows;
}

ExtinctionDecayResult extinction_decay(const EnvironmentModel& model, std::int64_t k,
                                       const std::vector<std::size_t>& n_list, std::size_t R,
                                       std::uint64_t seed, unsigned workers) {
  ExtinctionDecayResult out;
  for (std::size_t n : n_list) {
    LawQuery q{QueryKind::PZero, 0, 0};
    const MCEstimate e = annealed_prob(model, k, n, q, R, 4, substream(seed, 0xE0, n), workers);
    out.raw.push_back({static_cast<double>(n), e.estimate, e.std_error});
  }
  std::size_t positive = 0;
  for (const auto& pt : out.raw) positive += pt.estimate > 0.0 ? 1 : 0;
  if (positive < 3) {
    out.degenerate = true;
    return out;
  }
  out.fit = fit_log_decay(out.raw);
  return out;
}

LowerDeviationResult lower_deviation(const EnvironmentModel& model, std::int64_t k, double theta,
                                     const std::vector<std::size_t>& n_list, std::size_t R,
                                     std::uint64_t seed, std::size_t k_cap, unsigned workers) {
  const WalkStats ws = walk_stats(model);
  if (!(theta > 0.0 && theta < ws.mu)) {
    throw std::invalid_argument("lower_deviation: theta must lie in (0, mu)");
  }
  LowerDeviationResult out;
  out.method = "exact_series";
  for (std::size_t n : n_list) {
    const double bound = std::exp(theta * static_cast<double>(n));
    const auto t = static_cast<std::int64_t>(std::floor(bound));
    if (static_cast<std::size_t>(t) + 2 > k_cap) {
      throw std::runtime_error(
          "lower_deviation: threshold e^{theta n} = " + std::to_string(t) +
          " exceeds the exact-series cutoff cap; shrink n_list or raise the cap");
    }
    out.thresholds.push_back(std::max<std::int64_t>(t, 1));
    LawQuery q{QueryKind::PRange, 0, std::max<std::int64_t>(t, 1)};
    const std::size_t K = static_cast<std::size_t>(std::max<std::int64_t>(t, 1)) + 2;
    const MCEstimate e = annealed_prob(model, k, n, q, R, K, substream(seed, 0x1D, n), workers);
    out.raw.push_back({static_cast<double>(n), e.estimate, e.std_error});
  }
  out.fit = fit_log_decay(out.raw);
  return out;
}

HarmonicMomentResult harmonic_moment(const EnvironmentModel& model, std::int64_t k, double alpha,
                                     const std::vector<std::size_t>& n_list, std::size_t R,
                                     std::uint64_t seed, std::size_t K, bool constrained,
                                     std::int64_t n0, unsigned workers) {
  if (!(alpha > 0.0)) throw std::invalid_argument("harmonic_moment: alpha must be > 0");
  HarmonicMomentResult out;

  if (constrained) {
    for (std::size_t n : n_list) {
      std::vector<double> vals(R, 0.0);
      parallel_for(R, workers, [&](std::size_t r) {
        Rng env_rng(substream(seed, {0x31, n, r}));
        Rng path_rng(substream(seed, {0x32, n, r}));
        PathState state(k);
        bool ok = true;
        for (std::size_t g = 0; g < n && ok; ++g) {
          const auto& atom = model.atoms()[model.sample_atom(env_rng)];
          state.step(EnvStep{atom.offspring, atom.immigration}, path_rng);
          ok = state.exact() ? state.count() >= n0 : true;
        }
        if (ok) vals[r] = std::exp(-alpha * state.log_count());
      });
      const MeanSE ms = mean_and_se(vals);
      out.raw.push_back({static_cast<double>(n), ms.mean, ms.std_error});
      out.bracket_halfwidth.push_back(0.0);
    }
    out.fit = fit_log_decay(out.raw);
    return out;
  }

  // Precompute j^{-alpha} once.
  std::vector<double> inv_pow(K + 1, 0.0);
  for (std::size_t j = 1; j <= K; ++j) inv_pow[j] = std::pow(static_cast<double>(j), -alpha);
  const double tail_factor = std::pow(static_cast<double>(K), -alpha);

  for (std::size_t n : n_list) {
    std::vector<double> mids(R, 0.0);
    std::vector<double> halves(R, 0.0);
    parallel_for(R, workers, [&](std::size_t r) {
      const EnvPath env = sample_env(model, n, substream(seed, {0x30, n, r}));
      const QuenchedLaw law = quenched_law_series(env, k, K);
      double low = 0.0;
      for (std::size_t j = 1; j <= K; ++j) low += inv_pow[j] * law.coeffs[j];
      const double half = 0.5 * tail_factor * law.tail_mass;
      mids[r] = low + half;
      halves[r] = half;
    });
    const MeanSE ms = mean_and_se(mids);
    double mean_half = 0.0;
    for (double h : halves) mean_half += h;
    mean_half /= static_cast<double>(R);
    out.raw.push_back({static_cast<double>(n), ms.mean,
                       std::sqrt(ms.std_error * ms.std_error + mean_half * mean_half)});
    out.bracket_halfwidth.push_back(mean_half);
    if (mean_half > 0.5 * ms.mean) out.bracket_dominated = true;
  }
  out.fit = fit_log_decay(out.raw);
  return out;
}

LogMomentExtinctionResult log_moment_on_extinction_step(
    const EnvironmentModel& model, std::int64_t k, int j_power,
    const std::vector<std::size_t>& n_list, std::size_t R, std::uint64_t seed, unsigned workers) {
  if (j_power < 0) throw std::invalid_argument("log_moment_on_extinction_step: j must be >= 0");
  if (n_list.size() < 2) throw std::invalid_argument("log_moment_on_extinction_step: n_list too short");
  const std::size_t max_n = *std::max_element(n_list.begin(), n_list.end());

  // One-step-ahead annealed extinction weight: E_atom[f(0)^z h(0)].
  std::vector<double> log_f0;
  std::vector<double> h0w;
  for (const auto& atom : model.atoms()) {
    const double f0 = atom.offspring.pmf(0);
    log_f0.push_back(f0 > 0.0 ? std::log(f0) : -std::numeric_limits<double>::infinity());
    h0w.push_back(atom.weight * atom.immigration.pmf(0));
  }
  auto extinct_weight = [&](double log_z_count, double z_exact) {
    double w = 0.0;
    for (std::size_t a = 0; a < log_f0.size(); ++a) {
      if (h0w[a] == 0.0) continue;
      double e;
      if (z_exact >= 0.0) {
        e = std::isinf(log_f0[a]) ? (z_exact == 0.0 ? 1.0 : 0.0) : std::exp(z_exact * log_f0[a]);
      } else {
        e = std::isinf(log_f0[a]) ? 0.0 : std::exp(std::exp(log_z_count) * log_f0[a]);
      }
      w += h0w[a] * e;
    }
    return w;
  };

  const std::size_t chunks = (R + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> sums(chunks, std::vector<double>(n_list.size(), 0.0));
  std::vector<std::vector<double>> sqs(chunks, std::vector<double>(n_list.size(), 0.0));
  parallel_for(chunks, workers, [&](std::size_t c) {
    for (std::size_t r = c * kChunk; r < std::min(R, (c + 1) * kChunk); ++r) {
      Rng env_rng(substream(seed, kEnvTag, r));
      Rng path_rng(substream(seed, kPathTag, r));
      PathState state(k);
      std::size_t idx = 0;
      for (std::size_t g = 1; g <= max_n; ++g) {
        const auto& atom = model.atoms()[model.sample_atom(env_rng)];
        state.step(EnvStep{atom.offspring, atom.immigration}, path_rng);
        while (idx < n_list.size() && n_list[idx] == g) {
          if (state.alive()) {
            const double lz = state.log_count();
            const double w =
                extinct_weight(lz, state.exact() ? static_cast<double>(state.count()) : -1.0);
            const double v = std::pow(lz, static_cast<double>(j_power)) * w;
            sums[c][idx] += v;
            sqs[c][idx] += v * v;
          }
          ++idx;
        }
      }
    }
  });

  LogMomentExtinctionResult out;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      s += sums[c][i];
      s2 += sqs[c][i];
    }
    const double mean = s / static_cast<double>(R);
    const double var = std::max(0.0, s2 / static_cast<double>(R) - mean * mean);
    out.estimates.push_back(
        {static_cast<double>(n_list[i]), mean, std::sqrt(var / static_cast<double>(R))});
    if (mean == 0.0) ++out.zero_event_points;
  }
  std::size_t decreases = 0;
  for (std::size_t i = 1; i < out.estimates.size(); ++i) {
    if (out.estimates[i].estimate < out.estimates[i - 1].estimate) ++decreases;
  }
  out.sign_test_pvalue = binomial_tail_half(out.estimates.size() - 1, decreases);
  out.decreasing = out.sign_test_pvalue <= 1e-2;
  return out;
}

SurvivorSample collect_survivors(const EnvironmentModel& model, std::int64_t k, std::size_t n,
                                 std::size_t target, std::uint64_t seed, unsigned workers) {
  SurvivorSample out;
  std::size_t next = 0;
  std::size_t wave = target + target / 8 + 64;
  while (out.log_z.size() < target) {
    std::vector<double> slot(wave, std::numeric_limits<double>::quiet_NaN());
    parallel_for(wave, workers, [&](std::size_t i) {
      const std::size_t r = next + i;
      Rng env_rng(substream(seed, kEnvTag, r));
      Rng path_rng(substream(seed, kPathTag, r));
      PathState state(k);
      for (std::size_t g = 0; g < n; ++g) {
        const auto& atom = model.atoms()[model.sample_atom(env_rng)];
        state.step(EnvStep{atom.offspring, atom.immigration}, path_rng);
      }
      if (state.alive()) slot[i] = state.log_count();
    });
    for (double v : slot) {
      if (!std::isnan(v)) out.log_z.push_back(v);
    }
    next += wave;
    wave = std::max<std::size_t>(256, target / 4);
    if (next > 1000 * target + 100000) {
      throw std::runtime_error("collect_survivors: survivor shortfall (extinction dominates)");
    }
  }
  out.attempts = next;
  return out;
}

KSReport clt_test(const EnvironmentModel& model, std::int64_t k, std::size_t n, std::size_t R,
                  std::uint64_t seed, unsigned workers) {
  const WalkStats ws = walk_stats(model);
  if (!(ws.sigma2 > 0.0)) throw std::invalid_argument("clt_test: sigma2 must be > 0");
  SurvivorSample sample = collect_survivors(model, k, n, R, seed, workers);
  const double denom = ws.sigma() * std::sqrt(static_cast<double>(n));
  std::vector<double> standardized;
  standardized.reserve(sample.log_z.size());
  for (double lz : sample.log_z) {
    standardized.push_back((lz - static_cast<double>(n) * ws.mu) / denom);
  }
  KSReport rep;
  rep.n_samples = standardized.size();
  rep.ks_stat = ks_statistic(std::move(standardized), [](double x) { return normal_cdf(x); });
  rep.target = "normal";
  return rep;
}

ShiftEstimate estimate_shift(const EnvironmentModel& model, std::int64_t k,
                             const std::vector<std::size_t>& n_list, std::size_t R,
                             std::uint64_t seed, unsigned workers) {
  if (n_list.size() < 2) throw std::invalid_argument("estimate_shift: n_list too short");
  const WalkStats ws = walk_stats(model);
  ShiftEstimate out;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    const std::size_t n = n_list[i];
    SurvivorSample sample = collect_survivors(model, k, n, R, substream(seed, 0xB0, n), workers);
    const MeanSE ms = mean_and_se(sample.log_z);
    out.points.push_back(
        {static_cast<double>(n), ms.mean - static_cast<double>(n) * ws.mu, ms.std_error});
  }
  // Constant fit over the largest half of the n's.
  const std::size_t start = n_list.size() / 2;
  double sw = 0.0, sy = 0.0;
  for (std::size_t i = start; i < out.points.size(); ++i) {
    const double err = std::max(out.points[i].std_error, 1e-12);
    const double w = 1.0 / (err * err);
    sw += w;
    sy += w * out.points[i].estimate;
  }
  out.b_hat = sy / sw;
  out.b_se = std::sqrt(1.0 / sw);
  // Drift diagnostic: linear trend over all points should be flat.
  double swx = 0.0, sx = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& pt : out.points) {
    const double err = std::max(pt.std_error, 1e-12);
    const double w = 1.0 / (err * err);
    swx += w;
    sx += w * pt.n;
    sxx += w * pt.n * pt.n;
    sxy += w * pt.n * pt.estimate;
    syy += w * pt.estimate;
  }
  const double det = swx * sxx - sx * sx;
  out.residual_slope = (swx * sxy - sx * syy) / det;
  out.residual_slope_se = std::sqrt(swx / det);
  out.drift_warning = std::fabs(out.residual_slope) > 3.0 * out.residual_slope_se;
  return out;
}

namespace {

// Sup distance between the empirical CDF of a sorted sample and a model CDF
// over the grid x in [-4, 4] step 0.01.
double sup_grid_distance(const std::vector<double>& sorted, const std::function<double(double)>& cdf) {
  const double n = static_cast<double>(sorted.size());
  double worst = 0.0;
  for (int i = -400; i <= 400; ++i) {
    const double x = static_cast<double>(i) * 0.01;
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
    const double emp = static_cast<double>(it - sorted.begin()) / n;
    worst = std::max(worst, std::fabs(emp - cdf(x)));
  }
  return worst;
}

}  // namespace

std::vector<EdgeworthTestRow> edgeworth_test(const EnvironmentModel& model, std::int64_t k,
                                             const std::vector<std::size_t>& n_list,
                                             std::size_t R, double shift_b, std::uint64_t seed,
                                             unsigned workers) {
  const WalkStats ws = walk_stats(model);
  if (!(ws.sigma2 > 0.0)) throw std::invalid_argument("edgeworth_test: sigma2 must be > 0");
  EdgeworthSpec spec{3, shift_b, ws};
  std::vector<EdgeworthTestRow> rows;
  for (std::size_t n : n_list) {
    SurvivorSample sample = collect_survivors(model, k, n, R, substream(seed, 0xE4, n), workers);
    const double denom = ws.sigma() * std::sqrt(static_cast<double>(n));
    std::vector<double> std_sample;
    std_sample.reserve(sample.log_z.size());
    for (double lz : sample.log_z) {
      std_sample.push_back((lz - static_cast<double>(n) * ws.mu) / denom);
    }
    std::sort(std_sample.begin(), std_sample.end());
    EdgeworthTestRow row;
    row.n = n;
    row.survivors = std_sample.size();
    row.d_edgeworth =
        sup_grid_distance(std_sample, [&](double x) { return edgeworth_g3(x, n, spec); });
    row.d_normal = sup_grid_distance(std_sample, [](double x) { return normal_cdf(x); });
    rows.push_back(row);
  }
  return rows;
}

EdgeworthOracleResult edgeworth_exact_oracle(const EnvironmentModel& model, std::int64_t k,
                                             std::size_t n, std::size_t R, double shift_b,
                                             std::uint64_t seed, unsigned workers) {
  const WalkStats ws = walk_stats(model);
  EdgeworthSpec spec{3, shift_b, ws};
  const double denom = ws.sigma() * std::sqrt(static_cast<double>(n));
  // Cutoff covering the grid edge x = 4.
  const double top = std::exp(static_cast<double>(n) * ws.mu + 4.2 * denom);
  std::size_t K = 64;
  while (static_cast<double>(K) < top + 2 && K < (1u << 20)) K *= 2;

  std::vector<double> surv(R, 0.0);
  std::vector<std::vector<double>> cdf_rows(R);
  parallel_for(R, workers, [&](std::size_t r) {
    const EnvPath env = sample_env(model, n, substream(seed, 0xE5, r));
    const QuenchedLaw law = quenched_law_series(env, k, K);
    surv[r] = 1.0 - law.coeffs[0];
    std::vector<double>& row = cdf_rows[r];
    row.resize(801);
    std::vector<double> prefix(law.coeffs.size());
    double acc = 0.0;
    for (std::size_t j = 0; j < law.coeffs.size(); ++j) {
      acc += law.coeffs[j];
      prefix[j] = acc;
    }
    for (int i = -400; i <= 400; ++i) {
      const double x = static_cast<double>(i) * 0.01;
      const double bound = std::exp(static_cast<double>(n) * ws.mu + x * denom);
      const auto t = static_cast<std::int64_t>(std::floor(bound));
      double mass;
      if (t <= 0) {
        mass = 0.0;
      } else {
        const std::size_t idx = std::min<std::size_t>(static_cast<std::size_t>(t), law.cutoff());
        mass = prefix[idx] - law.coeffs[0];
      }
      row[static_cast<std::size_t>(i + 400)] = mass;
    }
  });

  double surv_mean = 0.0;
  for (double v : surv) surv_mean += v;
  surv_mean /= static_cast<double>(R);
  EdgeworthOracleResult out;
  out.n = n;
  for (int i = -400; i <= 400; ++i) {
    double mass = 0.0;
    for (std::size_t r = 0; r < R; ++r) mass += cdf_rows[r][static_cast<std::size_t>(i + 400)];
    mass /= static_cast<double>(R);
    const double f = mass / surv_mean;
    const double x = static_cast<double>(i) * 0.01;
    out.d_edgeworth = std::max(out.d_edgeworth, std::fabs(f - edgeworth_g3(x, n, spec)));
    out.d_normal = std::max(out.d_normal, std::fabs(f - normal_cdf(x)));
  }
  return out;
}

PhiConvergenceResult phi_convergence(const EnvironmentModel& model, std::int64_t k,
                                     const std::vector<double>& s_list,
                                     const std::vector<std::size_t>& n_list, std::size_t R,
                                     std::uint64_t seed, unsigned workers) {
  if (n_list.size() < 2) throw std::invalid_argument("phi_convergence: n_list too short");
  std::vector<double> ss;
  ss.push_back(0.0);
  for (double s : s_list) {
    if (s != 0.0) ss.push_back(s);
  }
  for (double s : ss) {
    if (std::abs(walk_char_fn(model, s)) < 0.7) {
      throw std::invalid_argument("phi_convergence: |lambda(s)| too small at s = " +
                                  std::to_string(s));
    }
  }
  const std::size_t max_n = *std::max_element(n_list.begin(), n_list.end());
  const std::size_t ns = ss.size();
  const std::size_t nn = n_list.size();

  // lambda(s)^{-n} for every listed n.
  std::vector<std::vector<std::complex<double>>> inv_lambda_pow(ns,
                                                                std::vector<std::complex<double>>(nn));
  for (std::size_t si = 0; si < ns; ++si) {
    const std::complex<double> lam = walk_char_fn(model, ss[si]);
    for (std::size_t ni = 0; ni < nn; ++ni) {
      inv_lambda_pow[si][ni] =
          1.0 / std::pow(lam, static_cast<double>(n_list[ni]));
    }
  }

  const std::size_t chunks = (R + kChunk - 1) / kChunk;
  struct Acc {
    std::vector<std::complex<double>> phi;   // ns*nn
    std::vector<std::complex<double>> diff;  // ns*(nn-1): per-path successive increments
    double surv_max_n = 0.0;
  };
  std::vector<Acc> accs(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    Acc& acc = accs[c];
    acc.phi.assign(ns * nn, 0.0);
    acc.diff.assign(ns * (nn - 1), 0.0);
    std::vector<std::complex<double>> prev(ns), cur(ns);
    for (std::size_t r = c * kChunk; r < std::min(R, (c + 1) * kChunk); ++r) {
      Rng env_rng(substream(seed, kEnvTag, r));
      Rng path_rng(substream(seed, kPathTag, r));
      PathState state(k);
      std::size_t idx = 0;
      for (std::size_t g = 1; g <= max_n && idx < nn; ++g) {
        const auto& atom = model.atoms()[model.sample_atom(env_rng)];
        state.step(EnvStep{atom.offspring, atom.immigration}, path_rng);
        if (n_list[idx] != g) continue;
        const double lz = state.alive() ? state.log_count() : 0.0;
        const bool alive = state.alive();
        for (std::size_t si = 0; si < ns; ++si) {
          std::complex<double> v = 0.0;
          if (alive) {
            v = std::complex<double>(std::cos(ss[si] * lz), std::sin(ss[si] * lz)) *
                inv_lambda_pow[si][idx];
          }
          cur[si] = v;
          acc.phi[si * nn + idx] += v;
          if (idx > 0) acc.diff[si * (nn - 1) + (idx - 1)] += v - prev[si];
        }
        std::swap(prev, cur);
        if (idx + 1 == nn && alive) acc.surv_max_n += 1.0;
        ++idx;
      }
    }
  });

  PhiConvergenceResult out;
  std::vector<std::complex<double>> phi(ns * nn, 0.0);
  std::vector<std::complex<double>> diff(ns * (nn - 1), 0.0);
  double surv = 0.0;
  for (const auto& acc : accs) {
    for (std::size_t i = 0; i < phi.size(); ++i) phi[i] += acc.phi[i];
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] += acc.diff[i];
    surv += acc.surv_max_n;
  }
  const double rd = static_cast<double>(R);
  out.survival_rate_at_max_n = surv / rd;
  for (std::size_t si = 0; si < ns; ++si) {
    std::vector<double> xs, ys;
    for (std::size_t ni = 0; ni < nn; ++ni) {
      PhiConvergenceRow row;
      row.s = ss[si];
      row.n = n_list[ni];
      row.phi_hat = phi[si * nn + ni] / rd;
      row.successive_diff =
          ni + 1 < nn ? std::abs(diff[si * (nn - 1) + ni]) / rd : 0.0;
      if (ni + 1 < nn && row.successive_diff > 0.0) {
        xs.push_back(static_cast<double>(row.n));
        ys.push_back(std::log(row.successive_diff));
      }
      out.rows.push_back(row);
    }
    // Ordinary least squares slope of log|diff| against n.
    double slope = 0.0;
    if (xs.size() >= 2) {
      double mx = 0.0, my = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
      }
      mx /= static_cast<double>(xs.size());
      my /= static_cast<double>(xs.size());
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        num += (xs[i] - mx) * (ys[i] - my);
        den += (xs[i] - mx) * (xs[i] - mx);
      }
      slope = num / den;
    }
    out.diff_slopes.emplace_back(ss[si], slope);
  }
  return out;
}

RenewalCountResult renewal_count(const EnvironmentModel& model, std::int64_t k,
                                 const std::vector<double>& y_list, double B, double C,
                                 std::size_t n_max, std::size_t R, std::uint64_t seed,
                                 unsigned workers) {
  if (!(B >= 0.0 && C >= B)) throw std::invalid_argument("renewal_count: need 0 <= B <= C");
  if (y_list.empty()) throw std::invalid_argument("renewal_count: empty y_list");
  const WalkStats ws = walk_stats(model);
  if (!(ws.mu > 0.0)) throw std::invalid_argument("renewal_count: model must be supercritical");

  double y_max = 0.0;
  for (double y : y_list) y_max = std::max(y, y_max);
  auto traversed = [&](std::size_t n) {
    return C + std::log(y_max) + 6.0 * ws.sigma() * std::sqrt(static_cast<double>(n)) <
           static_cast<double>(n) * ws.mu;
  };
  if (n_max == 0) {
    std::size_t n = 1;
    while (!traversed(n) && n < 4000000) ++n;
    n_max = n + n / 4;  // slack past the crossing point
  }

  RenewalCountResult out;
  out.n_max = n_max;
  out.traversal_ok = traversed(n_max);
  out.criterion = "log(e^C y_max) + 6 sigma sqrt(n_max) < n_max mu";
  out.expected = ws.mu > 0.0 ? (C - B) / ws.mu : 0.0;

  std::vector<double> lo(y_list.size()), hi(y_list.size());
  for (std::size_t i = 0; i < y_list.size(); ++i) {
    lo[i] = B + std::log(y_list[i]);
    hi[i] = C + std::log(y_list[i]);
  }

  const std::size_t chunks = (R + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> sums(chunks, std::vector<double>(y_list.size(), 0.0));
  std::vector<std::vector<double>> sqs(chunks, std::vector<double>(y_list.size(), 0.0));
  parallel_for(chunks, workers, [&](std::size_t c) {
    std::vector<double> counts(y_list.size());
    for (std::size_t r = c * kChunk; r < std::min(R, (c + 1) * kChunk); ++r) {
      Rng env_rng(substream(seed, kEnvTag, r));
      Rng path_rng(substream(seed, kPathTag, r));
      PathState state(k);
      std::fill(counts.begin(), counts.end(), 0.0);
      for (std::size_t g = 1; g <= n_max; ++g) {
        const auto& atom = model.atoms()[model.sample_atom(env_rng)];
        state.step(EnvStep{atom.offspring, atom.immigration}, path_rng);
        if (!state.alive()) continue;
        const double lz = state.log_count();
        for (std::size_t i = 0; i < y_list.size(); ++i) {
          if (lz >= lo[i] && lz <= hi[i]) counts[i] += 1.0;
        }
      }
      for (std::size_t i = 0; i < y_list.size(); ++i) {
        sums[c][i] += counts[i];
        sqs[c][i] += counts[i] * counts[i];
      }
    }
  });

  for (std::size_t i = 0; i < y_list.size(); ++i) {
    double s = 0.0, s2 = 0.0;
    for (std::size_t c = 0; c < chunks; ++c) {
      s += sums[c][i];
      s2 += sqs[c][i];
    }
    const double mean = s / static_cast<double>(R);
    const double var = std::max(0.0, s2 / static_cast<double>(R) - mean * mean);
    out.rows.push_back({y_list[i], mean, std::sqrt(var / static_cast<double>(R))});
  }
  return out;
}

}  // namespace bpire
