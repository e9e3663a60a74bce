#include "bpire/pgf_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "bpire/numeric.hpp"
#include "bpire/rng.hpp"

namespace bpire {

namespace {

constexpr double kNegClamp = -1e-12;

void clamp_nonnegative(std::vector<double>& c) {
  for (double& x : c) {
    if (x < 0.0) {
      if (x < kNegClamp) {
        throw std::runtime_error("series arithmetic produced a negative coefficient: " +
                                 std::to_string(x));
      }
      x = 0.0;
    }
  }
}

}  // namespace

namespace series {

std::vector<double> mul(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double ai = a[i];
    if (ai == 0.0) continue;
    const std::size_t lim = n - i;
    for (std::size_t j = 0; j < lim; ++j) out[i + j] += ai * b[j];
  }
  return out;
}

std::vector<double> pow_int(const std::vector<double>& a, std::int64_t e) {
  std::vector<double> result(a.size(), 0.0);
  result[0] = 1.0;
  if (e == 0) return result;
  std::vector<double> base = a;
  while (e > 0) {
    if (e & 1) result = mul(result, base);
    e >>= 1;
    if (e > 0) base = mul(base, base);
  }
  return result;
}

namespace {

// exp(c * (t - t[0])) by the standard recurrence B[n] = (1/n) sum k A[k] B[n-k]
// with A = c*(t - t0); all terms nonnegative for c >= 0.
std::vector<double> exp_shifted(const std::vector<double>& t, double c) {
  const std::size_t n = t.size();
  std::vector<double> b(n, 0.0);
  b[0] = 1.0;
  for (std::size_t m = 1; m < n; ++m) {
    double acc = 0.0;
    for (std::size_t k = 1; k <= m; ++k) {
      acc += static_cast<double>(k) * c * t[k] * b[m - k];
    }
    b[m] = acc / static_cast<double>(m);
  }
  return b;
}

// 1 / (1 - b*t) with b*t[0] < 1; subtraction-free recurrence.
std::vector<double> geometric_recip(const std::vector<double>& t, double b) {
  const std::size_t n = t.size();
  const double d0 = 1.0 - b * t[0];
  if (!(d0 > 0.0)) throw std::runtime_error("series reciprocal: 1 - b*t0 must be positive");
  std::vector<double> r(n, 0.0);
  r[0] = 1.0 / d0;
  for (std::size_t m = 1; m < n; ++m) {
    double acc = 0.0;
    for (std::size_t k = 1; k <= m; ++k) acc += t[k] * r[m - k];
    r[m] = r[0] * b * acc;
  }
  return r;
}

}  // namespace

std::vector<double> apply_outer(const DistSpec& outer, const std::vector<double>& t) {
  switch (outer.kind()) {
    case DistKind::PointMass:
      return pow_int(t, outer.point());
    case DistKind::Poisson: {
      const double m = outer.poisson_mean();
      std::vector<double> out = exp_shifted(t, m);
      const double scale = std::exp(m * (t[0] - 1.0));
      for (double& x : out) x *= scale;
      return out;
    }
    case DistKind::LinearFractional: {
      const double a = outer.lf_a();
      const double b = outer.lf_b();
      std::vector<double> out = mul(t, geometric_recip(t, b));
      const double scale = (1.0 - a) * (1.0 - b);
      for (double& x : out) x *= scale;
      out[0] += a;
      return out;
    }
    case DistKind::Finite: {
      const auto& p = outer.finite_probs();
      std::vector<double> out(t.size(), 0.0);
      out[0] = p.back();
      for (std::size_t j = p.size() - 1; j-- > 0;) {
        out = mul(out, t);
        out[0] += p[j];
      }
      return out;
    }
  }
  throw std::logic_error("apply_outer: unknown spec kind");
}

double eval_horner(const std::vector<double>& coeffs, double s) {
  double r = 0.0;
  for (std::size_t j = coeffs.size(); j-- > 0;) r = r * s + coeffs[j];
  return r;
}

}  // namespace series

double QuenchedLaw::coeff_error() const {
  if (method == LawMethod::DFTExtraction) return tail_mass;
  // Series coefficients are exact up to accumulated roundoff.
  return 1e-13 * static_cast<double>(n + 1);
}

std::complex<double> quenched_eval(const EnvPath& env, std::int64_t k,
                                   std::complex<double> s) {
  if (env.steps.empty()) throw std::invalid_argument("quenched_eval: empty environment");
  if (k < 0) throw std::invalid_argument("quenched_eval: k must be >= 0");
  if (std::abs(s) > 1.0 + 1e-12) throw std::domain_error("quenched_eval: |s| must be <= 1");
  std::complex<double> t = s;
  std::complex<double> prod = 1.0;
  for (std::size_t i = env.steps.size(); i-- > 0;) {
    prod *= env.steps[i].immigration.pgf(t);
    t = env.steps[i].offspring.pgf(t);
  }
  std::complex<double> tk = 1.0;
  std::complex<double> base = t;
  std::int64_t e = k;
  while (e > 0) {
    if (e & 1) tk *= base;
    base *= base;
    e >>= 1;
  }
  return tk * prod;
}

double quenched_eval(const EnvPath& env, std::int64_t k, double s) {
  return quenched_eval(env, k, std::complex<double>(s, 0.0)).real();
}

QuenchedLaw quenched_law_series(const EnvPath& env, std::int64_t k, std::size_t K) {
  if (K < 1) throw std::invalid_argument("quenched_law_series: K must be >= 1");
  if (env.steps.empty()) throw std::invalid_argument("quenched_law_series: empty environment");
  if (k < 0) throw std::invalid_argument("quenched_law_series: k must be >= 0");

  // Backward pass: t holds the series of f_{i,n}, starting from f_{n,n}(s) = s.
  std::vector<double> t(K + 1, 0.0);
  t[1] = 1.0;
  std::vector<double> prod(K + 1, 0.0);
  prod[0] = 1.0;
  for (std::size_t i = env.steps.size(); i-- > 0;) {
    prod = series::mul(prod, series::apply_outer(env.steps[i].immigration, t));
    t = series::apply_outer(env.steps[i].offspring, t);
  }
  std::vector<double> law = series::mul(prod, series::pow_int(t, k));
  clamp_nonnegative(law);

  QuenchedLaw out;
  out.n = env.steps.size();
  out.k = k;
  out.coeffs = std::move(law);
  double total = 0.0;
  for (double c : out.coeffs) total += c;
  if (total > 1.0 + 1e-9) {
    throw std::runtime_error("quenched_law_series: coefficient mass exceeds 1");
  }
  out.tail_mass = std::max(0.0, 1.0 - total);
  out.method = LawMethod::SeriesComposition;
  return out;
}

QuenchedLaw quenched_law_series_adaptive(const EnvPath& env, std::int64_t k,
                                         std::size_t k_start, double tail_goal,
                                         std::size_t k_cap) {
  std::size_t K = std::max<std::size_t>(1, k_start);
  for (;;) {
    QuenchedLaw law = quenched_law_series(env, k, K);
    if (law.tail_mass < tail_goal || K >= k_cap) return law;
    K = std::min(k_cap, K * 2);
  }
}

namespace {

// In-place radix-2 Cooley-Tukey, inverse transform (unscaled).
void fft_inverse(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * 3.141592653589793238462643383279 / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t j2 = 0; j2 < len / 2; ++j2) {
        const std::complex<double> u = a[i + j2];
        const std::complex<double> v = a[i + j2 + len / 2] * w;
        a[i + j2] = u + v;
        a[i + j2 + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// Guarded real evaluation of g at x >= 1; +inf when any intermediate value
// leaves the domain of an analytic pgf expression.
double quenched_eval_extended(const EnvPath& env, std::int64_t k, double x) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double t = x;
  double prod = 1.0;
  for (std::size_t i = env.steps.size(); i-- > 0;) {
    const double h = env.steps[i].immigration.pgf_extended(t);
    if (!std::isfinite(h)) return inf;
    prod *= h;
    t = env.steps[i].offspring.pgf_extended(t);
    if (!std::isfinite(t) || t > 1e100 || prod > 1e100) return inf;
  }
  const double tk = std::pow(t, static_cast<double>(k));
  if (!std::isfinite(tk)) return inf;
  return tk * prod;
}

// Chernoff-style bound on P(Z >= M): min over x > 1 of g(x) / x^M, scanned
// on the fixed 64-point log grid x = 1/s, s in (0.5, 1). Capped at 1.
double dft_tail_bound(const EnvPath& env, std::int64_t k, std::size_t M) {
  double best = 1.0;
  for (int i = 0; i < 64; ++i) {
    const double s = std::pow(0.5, (64.0 - static_cast<double>(i)) / 64.0);
    const double g = quenched_eval_extended(env, k, 1.0 / s);
    if (!std::isfinite(g)) continue;
    // g(1/s) * s^M in log space to avoid underflow of s^M.
    const double log_bound = std::log(g) + static_cast<double>(M) * std::log(s);
    if (log_bound < std::log(best)) best = std::exp(log_bound);
  }
  return best;
}

}  // namespace

QuenchedLaw quenched_law_dft(const EnvPath& env, std::int64_t k, std::size_t M) {
  if (M < 2 || (M & (M - 1)) != 0) {
    throw std::invalid_argument("quenched_law_dft: M must be a power of two >= 2");
  }
  std::vector<std::complex<double>> values(M);
  for (std::size_t l = 0; l < M; ++l) {
    const double ang =
        2.0 * 3.141592653589793238462643383279 * static_cast<double>(l) / static_cast<double>(M);
    values[l] = quenched_eval(env, k, std::complex<double>(std::cos(ang), std::sin(ang)));
  }
  fft_inverse(values);

  QuenchedLaw out;
  out.n = env.steps.size();
  out.k = k;
  out.coeffs.resize(M);
  for (std::size_t j = 0; j < M; ++j) {
    double c = values[j].real() / static_cast<double>(M);
    if (c < 0.0) c = 0.0;  // FFT noise
    out.coeffs[j] = std::min(c, 1.0);
  }
  out.method = LawMethod::DFTExtraction;
  out.tail_mass = dft_tail_bound(env, k, M);
  return out;
}

std::complex<double> lf_closed_form(const EnvPath& env, std::int64_t k,
                                    std::complex<double> s) {
  if (env.steps.empty()) throw std::invalid_argument("lf_closed_form: empty environment");
  for (const auto& step : env.steps) {
    if (step.offspring.kind() != DistKind::LinearFractional) {
      throw std::invalid_argument("lf_closed_form: requires all-linear-fractional offspring");
    }
  }
  // f(s) = (p s + a) / (-b s + 1) with p = (1-a)(1-b) - a b, as a Moebius map;
  // composition is the matrix product in composition order f_1 o ... o f_n.
  double m00 = 1.0, m01 = 0.0, m10 = 0.0, m11 = 1.0;
  for (const auto& step : env.steps) {
    const double a = step.offspring.lf_a();
    const double b = step.offspring.lf_b();
    const double p = (1.0 - a) * (1.0 - b) - a * b;
    const double n00 = m00 * p + m01 * (-b);
    const double n01 = m00 * a + m01 * 1.0;
    const double n10 = m10 * p + m11 * (-b);
    const double n11 = m10 * a + m11 * 1.0;
    // Normalize to keep entries in range over long products.
    const double scale = std::fabs(n00) + std::fabs(n01) + std::fabs(n10) + std::fabs(n11);
    m00 = n00 / scale;
    m01 = n01 / scale;
    m10 = n10 / scale;
    m11 = n11 / scale;
  }
  const std::complex<double> f0n = (m00 * s + m01) / (m10 * s + m11);
  std::complex<double> r = 1.0;
  std::complex<double> base = f0n;
  std::int64_t e = k;
  while (e > 0) {
    if (e & 1) r *= base;
    base *= base;
    e >>= 1;
  }
  return r;
}

LawQueries law_queries(const QuenchedLaw& law, const std::vector<std::int64_t>& j_list,
                       std::int64_t t) {
  const std::int64_t K = static_cast<std::int64_t>(law.cutoff());
  const double err = law.coeff_error();
  LawQueries out;
  out.p_zero = {law.coeffs[0], err};
  out.p_survive = {1.0 - law.coeffs[0], err};
  for (std::int64_t j : j_list) {
    if (j < 0 || j > K) {
      throw std::out_of_range("law_queries: j = " + std::to_string(j) +
                              " beyond cutoff K = " + std::to_string(K));
    }
    out.p_at.push_back({law.coeffs[static_cast<std::size_t>(j)], err});
  }
  if (t > 0) {
    if (t > K) {
      throw std::out_of_range("law_queries: range bound t = " + std::to_string(t) +
                              " beyond cutoff K = " + std::to_string(K));
    }
    double sum = 0.0;
    for (std::int64_t j = 1; j <= t; ++j) sum += law.coeffs[static_cast<std::size_t>(j)];
    out.p_range = {sum, err * static_cast<double>(t)};
  }
  return out;
}

MCEstimate annealed_prob(const EnvironmentModel& model, std::int64_t k, std::size_t n,
                         const LawQuery& query, std::size_t R, std::size_t K,
                         std::uint64_t seed, unsigned workers) {
  if (R < 2) throw std::invalid_argument("annealed_prob: R must be >= 2");
  std::vector<double> values(R, 0.0);
  std::vector<double> errors(R, 0.0);
  parallel_for(R, workers, [&](std::size_t r) {
    const EnvPath env = sample_env(model, n, substream(seed, 0x45, r));
    const QuenchedLaw law = quenched_law_series(env, k, K);
    LawQueries q;
    switch (query.kind) {
      case QueryKind::PZero:
      case QueryKind::PSurvive:
        q = law_queries(law, {}, 0);
        break;
      case QueryKind::PAt:
        q = law_queries(law, {query.j}, 0);
        break;
      case QueryKind::PRange:
        q = law_queries(law, {}, query.t);
        break;
    }
    switch (query.kind) {
      case QueryKind::PZero: values[r] = q.p_zero.value; errors[r] = q.p_zero.error; break;
      case QueryKind::PSurvive: values[r] = q.p_survive.value; errors[r] = q.p_survive.error; break;
      case QueryKind::PAt: values[r] = q.p_at[0].value; errors[r] = q.p_at[0].error; break;
      case QueryKind::PRange: values[r] = q.p_range.value; errors[r] = q.p_range.error; break;
    }
  });
  const MeanSE ms = mean_and_se(values);
  double mean_bound = 0.0;
  for (double e : errors) mean_bound += e;
  mean_bound /= static_cast<double>(R);
  MCEstimate out;
  out.estimate = ms.mean;
  out.std_error = ms.std_error;
  out.replications = R;
  out.tail_dominated = mean_bound > 0.5 * std::fabs(ms.mean) && ms.mean != 0.0;
  return out;
}

std::string law_to_csv(const QuenchedLaw& law) {
  std::ostringstream os;
  os << "j,probability,method,tail_bound\n";
  const char* method =
      law.method == LawMethod::SeriesComposition ? "series" : "dft";
  char buf[64];
  for (std::size_t j = 0; j < law.coeffs.size(); ++j) {
    std::snprintf(buf, sizeof(buf), "%.17g", law.coeffs[j]);
    os << j << ',' << buf << ',' << method << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", law.coeff_error());
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace bpire
