#include "bpire/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bpire/env_model.hpp"
#include "bpire/numeric.hpp"
#include "bpire/pgf_engine.hpp"
#include "bpire/rng.hpp"
#include "bpire/rwalk.hpp"
#include "bpire/simulator.hpp"
#include "bpire/stats.hpp"

namespace bpire::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

const std::vector<std::string>& experiment_registry() {
  static const std::vector<std::string> names = {
      "decay",  "extinction", "lowerdev", "harmonic", "logmoment", "clt",
      "edgeworth", "phi",     "renewal",  "delta",    "minima",    "exactlaw"};
  return names;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Parse with a line-numbered diagnostic on failure.
json parse_json(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') ++line;
    }
    throw UsageError(origin + ":" + std::to_string(line) + ": JSON parse error: " + e.what());
  }
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- parameter access with named diagnostics ----

struct Params {
  const json& j;
  const std::string& experiment;

  void require(const char* name) const {
    if (!j.contains(name)) {
      throw UsageError("experiment '" + experiment + "' is missing required parameter '" +
                       name + "'");
    }
  }
  double num(const char* name) const {
    require(name);
    return j.at(name).get<double>();
  }
  double num_or(const char* name, double fallback) const {
    return j.contains(name) ? j.at(name).get<double>() : fallback;
  }
  std::int64_t integer(const char* name) const {
    require(name);
    return j.at(name).get<std::int64_t>();
  }
  std::int64_t integer_or(const char* name, std::int64_t fallback) const {
    return j.contains(name) ? j.at(name).get<std::int64_t>() : fallback;
  }
  std::vector<std::size_t> n_list(const char* name) const {
    require(name);
    auto v = j.at(name).get<std::vector<std::int64_t>>();
    std::vector<std::size_t> out;
    for (auto x : v) {
      if (x < 0) throw UsageError("parameter '" + std::string(name) + "' must be nonnegative");
      out.push_back(static_cast<std::size_t>(x));
    }
    return out;
  }
  std::vector<double> num_list(const char* name) const {
    require(name);
    return j.at(name).get<std::vector<double>>();
  }
};

struct CsvRow {
  std::string parameter;
  double n = 0.0;
  double estimate = 0.0;
  double std_error = 0.0;
};

struct RunOutput {
  bool pass = false;
  json metrics;
  std::vector<CsvRow> rows;
  // extra named artifacts (filename suffix -> full file content)
  std::vector<std::pair<std::string, std::string>> extra_files;
};

void fit_to_metrics(const DecayFit& fit, const std::string& prefix, json& metrics) {
  metrics[prefix + "slope"] = fit.slope;
  metrics[prefix + "intercept"] = fit.intercept;
  metrics[prefix + "r_squared"] = fit.r_squared;
  metrics[prefix + "slope_se"] = fit.slope_se;
  metrics[prefix + "slope_ucb99"] = fit.slope_ucb99();
}

void points_to_rows(const std::vector<FitPoint>& pts, const std::string& parameter,
                    std::vector<CsvRow>& rows) {
  for (const auto& p : pts) rows.push_back({parameter, p.n, p.estimate, p.std_error});
}

// ---- experiment runners ----

RunOutput run_decay(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                    unsigned workers) {
  const auto k = p.integer("k");
  const auto j = p.integer("j");
  const auto R = static_cast<std::size_t>(p.integer("R"));
  const auto K = static_cast<std::size_t>(p.integer_or("K", 32));
  const auto res = decay_rate(model, k, j, p.n_list("n_list"), R, seed, K, workers);
  RunOutput out;
  fit_to_metrics(res.fit, "", out.metrics);
  fit_to_metrics(res.range_fit, "range_", out.metrics);
  points_to_rows(res.raw, "p_at_j", out.rows);
  points_to_rows(res.range_raw, "p_range_kn", out.rows);
  out.pass = res.fit.slope < 0.0 && res.fit.slope_ucb99() < 0.0;
  return out;
}

RunOutput run_extinction(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                         unsigned workers) {
  const auto res = extinction_decay(model, p.integer("k"), p.n_list("n_list"),
                                    static_cast<std::size_t>(p.integer("R")), seed, workers);
  RunOutput out;
  out.metrics["degenerate"] = res.degenerate;
  if (!res.degenerate) fit_to_metrics(res.fit, "", out.metrics);
  points_to_rows(res.raw, "p_zero", out.rows);
  out.pass = !res.degenerate && res.fit.slope < 0.0 && res.fit.slope_ucb99() < 0.0;
  return out;
}

RunOutput run_lowerdev(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                       unsigned workers) {
  const auto res = lower_deviation(model, p.integer("k"), p.num("theta"), p.n_list("n_list"),
                                   static_cast<std::size_t>(p.integer("R")), seed,
                                   static_cast<std::size_t>(p.integer_or("K_cap", 65536)),
                                   workers);
  RunOutput out;
  fit_to_metrics(res.fit, "", out.metrics);
  out.metrics["method"] = res.method;
  points_to_rows(res.raw, "p_window", out.rows);
  out.pass = res.fit.slope < 0.0 && res.fit.slope_ucb99() < 0.0;
  return out;
}

RunOutput run_harmonic(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                       unsigned workers) {
  const bool constrained = p.j.contains("constrained") && p.j.at("constrained").get<bool>();
  const auto res = harmonic_moment(model, p.integer("k"), p.num("alpha"), p.n_list("n_list"),
                                   static_cast<std::size_t>(p.integer("R")), seed,
                                   static_cast<std::size_t>(p.integer_or("K", 1024)), constrained,
                                   p.integer_or("n0", 2), workers);
  RunOutput out;
  fit_to_metrics(res.fit, "", out.metrics);
  out.metrics["bracket_dominated"] = res.bracket_dominated;
  points_to_rows(res.raw, "harmonic_moment", out.rows);
  out.pass = res.fit.slope < 0.0;
  return out;
}

RunOutput run_logmoment(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                        unsigned workers) {
  const auto res = log_moment_on_extinction_step(
      model, p.integer("k"), static_cast<int>(p.integer("j_power")), p.n_list("n_list"),
      static_cast<std::size_t>(p.integer("R")), seed, workers);
  RunOutput out;
  out.metrics["sign_test_pvalue"] = res.sign_test_pvalue;
  out.metrics["zero_event_points"] = res.zero_event_points;
  points_to_rows(res.estimates, "log_moment_extinction", out.rows);
  out.pass = res.decreasing;
  return out;
}

RunOutput run_clt(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                  unsigned workers) {
  const auto n_list = p.n_list("n_list");
  if (n_list.size() < 2) throw UsageError("experiment 'clt' needs n_list with >= 2 entries");
  const auto R = static_cast<std::size_t>(p.integer("R"));
  RunOutput out;
  std::vector<double> stats;
  for (std::size_t n : n_list) {
    const KSReport rep = clt_test(model, p.integer("k"), n, R, substream(seed, 0xC1, n), workers);
    stats.push_back(rep.ks_stat);
    out.rows.push_back({"ks_vs_normal", static_cast<double>(n), rep.ks_stat,
                        static_cast<double>(rep.n_samples)});
  }
  out.metrics["ks_first"] = stats.front();
  out.metrics["ks_last"] = stats.back();
  out.pass = stats.back() < stats.front();
  if (p.j.contains("ks_max")) out.pass = out.pass && stats.back() < p.num("ks_max");
  return out;
}

RunOutput run_edgeworth(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                        unsigned workers) {
  const auto k = p.integer("k");
  const auto R = static_cast<std::size_t>(p.integer("R"));
  const auto n_list = p.n_list("n_list");
  std::vector<std::size_t> shift_ns = n_list;
  if (p.j.contains("shift_n_list")) shift_ns = p.n_list("shift_n_list");
  const ShiftEstimate shift = estimate_shift(model, k, shift_ns, R, substream(seed, 0xB1), workers);
  const auto rows = edgeworth_test(model, k, n_list, R, shift.b_hat, substream(seed, 0xB2), workers);
  RunOutput out;
  out.metrics["b_hat"] = shift.b_hat;
  out.metrics["b_se"] = shift.b_se;
  out.metrics["drift_warning"] = shift.drift_warning;
  double last_edge = 0.0, last_norm = 0.0;
  for (const auto& row : rows) {
    const double root_n = std::sqrt(static_cast<double>(row.n));
    out.rows.push_back({"sup_diff_g3", static_cast<double>(row.n), row.d_edgeworth, 0.0});
    out.rows.push_back({"sup_diff_normal", static_cast<double>(row.n), row.d_normal, 0.0});
    out.rows.push_back({"sqrt_n_sup_diff_g3", static_cast<double>(row.n),
                        root_n * row.d_edgeworth, 0.0});
    out.rows.push_back({"sqrt_n_sup_diff_normal", static_cast<double>(row.n),
                        root_n * row.d_normal, 0.0});
    last_edge = root_n * row.d_edgeworth;
    last_norm = root_n * row.d_normal;
  }
  out.metrics["sqrt_n_d_g3_at_max_n"] = last_edge;
  out.metrics["sqrt_n_d_normal_at_max_n"] = last_norm;
  out.pass = last_edge < last_norm;
  return out;
}

RunOutput run_phi(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                  unsigned workers) {
  const auto res = phi_convergence(model, p.integer("k"), p.num_list("s_list"),
                                   p.n_list("n_list"), static_cast<std::size_t>(p.integer("R")),
                                   seed, workers);
  RunOutput out;
  bool all_negative = true;
  for (const auto& [s, slope] : res.diff_slopes) {
    if (s == 0.0) continue;
    out.metrics["diff_slope_s_" + format_double(s)] = slope;
    all_negative = all_negative && slope < 0.0;
  }
  out.metrics["survival_rate_at_max_n"] = res.survival_rate_at_max_n;
  for (const auto& row : res.rows) {
    out.rows.push_back({"phi_re_s=" + format_double(row.s), static_cast<double>(row.n),
                        row.phi_hat.real(), 0.0});
    out.rows.push_back({"phi_im_s=" + format_double(row.s), static_cast<double>(row.n),
                        row.phi_hat.imag(), 0.0});
    out.rows.push_back({"succ_diff_s=" + format_double(row.s), static_cast<double>(row.n),
                        row.successive_diff, 0.0});
  }
  out.pass = all_negative;
  return out;
}

RunOutput run_renewal(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                      unsigned workers) {
  const auto res = renewal_count(model, p.integer("k"), p.num_list("y_list"), p.num("B"),
                                 p.num("C"), static_cast<std::size_t>(p.integer_or("n_max", 0)),
                                 static_cast<std::size_t>(p.integer("R")), seed, workers);
  const double tol = p.num_or("tolerance", 0.05);
  RunOutput out;
  out.metrics["expected"] = res.expected;
  out.metrics["n_max"] = res.n_max;
  out.metrics["traversal_ok"] = res.traversal_ok;
  out.metrics["criterion"] = res.criterion;
  bool ok = res.traversal_ok;
  for (const auto& row : res.rows) {
    out.rows.push_back({"mean_visit_count", row.y, row.mean_count, row.std_error});
    if (res.expected > 0.0 && std::fabs(row.mean_count - res.expected) > tol * res.expected) {
      ok = false;
    }
  }
  out.pass = ok;
  return out;
}

RunOutput run_delta(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                    unsigned workers) {
  const auto n_list = p.n_list("n_list");
  const double pw = p.num("p");
  const double r = p.num("r");
  const auto R = static_cast<std::size_t>(p.integer("R"));
  RunOutput out;
  std::vector<double> first_term;
  for (std::size_t n : n_list) {
    const DeltaSummary s =
        delta_records(model, p.integer("k"), n, R, pw, r, substream(seed, 0xDE, n), workers);
    out.rows.push_back({"abs_delta_pow", static_cast<double>(n), s.abs_delta_pow.estimate,
                        s.abs_delta_pow.std_error});
    out.rows.push_back({"weighted_abs_delta_pow", static_cast<double>(n),
                        s.weighted_abs_delta_pow.estimate, s.weighted_abs_delta_pow.std_error});
    out.rows.push_back({"abs_log_delta", static_cast<double>(n), s.abs_log_delta.estimate,
                        s.abs_log_delta.std_error});
    first_term.push_back(s.abs_delta_pow.estimate);
  }
  out.metrics["first"] = first_term.front();
  out.metrics["last"] = first_term.back();
  out.pass = first_term.size() < 2 || first_term.back() < first_term.front();
  return out;
}

RunOutput run_minima(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                     unsigned workers) {
  (void)workers;
  const auto n_list = p.n_list("n_list");
  const auto R = static_cast<std::size_t>(p.integer("R"));
  const auto a = p.integer_or("a", 10);
  const double drift = p.num_or("eps_drift", 0.0);
  const double epsilon = p.num_or("epsilon", 0.0);
  RunOutput out;
  std::vector<double> tails;
  double eps_used = epsilon;
  for (std::size_t n : n_list) {
    const auto res = minima_density_check(model, a, drift, n, R, substream(seed, 0xAA, n), eps_used);
    // Hold epsilon fixed across n so the tail probabilities are comparable.
    eps_used = res.epsilon;
    tails.push_back(res.tail_prob);
    out.rows.push_back({"minima_tail_prob", static_cast<double>(n), res.tail_prob, res.tail_se});
    out.metrics["epsilon"] = res.epsilon;
    out.metrics["eps_drift"] = res.eps_drift;
    out.metrics["note"] = res.note;
  }
  bool nonincreasing = true;
  for (std::size_t i = 1; i < tails.size(); ++i) nonincreasing = nonincreasing && tails[i] <= tails[i - 1];
  out.pass = nonincreasing;
  return out;
}

RunOutput run_exactlaw(const EnvironmentModel& model, const Params& p, std::uint64_t seed,
                       unsigned workers) {
  (void)workers;
  const auto n = static_cast<std::size_t>(p.integer("n"));
  const auto k = p.integer("k");
  const auto K = static_cast<std::size_t>(p.integer_or("K", 1024));
  const EnvPath env = sample_env(model, n, substream(seed, 0x01));
  const QuenchedLaw series_law = quenched_law_series(env, k, K);
  RunOutput out;
  out.extra_files.emplace_back("law_series.csv", law_to_csv(series_law));
  const double g0 = quenched_eval(env, k, 0.0);
  out.metrics["coeff0"] = series_law.coeffs[0];
  out.metrics["g_at_zero"] = g0;
  bool ok = std::fabs(series_law.coeffs[0] - g0) <= 1e-10;
  if (p.j.contains("M")) {
    const auto M = static_cast<std::size_t>(p.integer("M"));
    const QuenchedLaw dft_law = quenched_law_dft(env, k, M);
    out.extra_files.emplace_back("law_dft.csv", law_to_csv(dft_law));
    double sup = 0.0;
    const std::size_t lim = std::min(series_law.coeffs.size(), dft_law.coeffs.size());
    for (std::size_t j = 0; j < lim; ++j) {
      sup = std::max(sup, std::fabs(series_law.coeffs[j] - dft_law.coeffs[j]));
    }
    out.metrics["sup_series_dft"] = sup;
    out.metrics["combined_tail_bound"] = series_law.tail_mass + dft_law.tail_mass;
    ok = ok && sup <= series_law.tail_mass + dft_law.tail_mass + 1e-9;
  }
  for (std::size_t j = 0; j < std::min<std::size_t>(series_law.coeffs.size(), 64); ++j) {
    out.rows.push_back({"p_at", static_cast<double>(j), series_law.coeffs[j], 0.0});
  }
  out.pass = ok;
  return out;
}

RunOutput dispatch(const std::string& experiment, const EnvironmentModel& model, const Params& p,
                   std::uint64_t seed, unsigned workers) {
  if (experiment == "decay") return run_decay(model, p, seed, workers);
  if (experiment == "extinction") return run_extinction(model, p, seed, workers);
  if (experiment == "lowerdev") return run_lowerdev(model, p, seed, workers);
  if (experiment == "harmonic") return run_harmonic(model, p, seed, workers);
  if (experiment == "logmoment") return run_logmoment(model, p, seed, workers);
  if (experiment == "clt") return run_clt(model, p, seed, workers);
  if (experiment == "edgeworth") return run_edgeworth(model, p, seed, workers);
  if (experiment == "phi") return run_phi(model, p, seed, workers);
  if (experiment == "renewal") return run_renewal(model, p, seed, workers);
  if (experiment == "delta") return run_delta(model, p, seed, workers);
  if (experiment == "minima") return run_minima(model, p, seed, workers);
  if (experiment == "exactlaw") return run_exactlaw(model, p, seed, workers);
  std::string names;
  for (const auto& n : experiment_registry()) names += (names.empty() ? "" : ", ") + n;
  throw UsageError("unknown experiment '" + experiment + "'; registry: " + names);
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text, const std::string& origin) {
  const json doc = parse_json(text, origin);
  ExperimentConfig cfg;
  for (const char* field : {"model_file", "experiment", "seed"}) {
    if (!doc.contains(field)) {
      throw UsageError(origin + ": config is missing required field '" + std::string(field) + "'");
    }
  }
  cfg.model_file = doc.at("model_file").get<std::string>();
  cfg.experiment = doc.at("experiment").get<std::string>();
  cfg.parameters = doc.value("parameters", json::object());
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.out_dir = doc.value("out_dir", "");
  if (cfg.out_dir.empty()) {
    const char* env = std::getenv("BPIRE_OUT_DIR");
    cfg.out_dir = env != nullptr ? env : "out";
  }
  const auto& reg = experiment_registry();
  if (std::find(reg.begin(), reg.end(), cfg.experiment) == reg.end()) {
    std::string names;
    for (const auto& n : reg) names += (names.empty() ? "" : ", ") + n;
    throw UsageError(origin + ": unknown experiment '" + cfg.experiment + "'; registry: " + names);
  }
  return cfg;
}

ExperimentConfig config_from_json_file(const std::string& path) {
  return config_from_json_text(read_file(path), path);
}

std::string canonical_config_text(const ExperimentConfig& cfg) {
  json canon;
  canon["experiment"] = cfg.experiment;
  canon["parameters"] = cfg.parameters;
  canon["seed"] = cfg.seed;
  // Inline the model itself so the hash pins what was actually run.
  canon["model"] = json::parse(model_to_json_text(model_from_json_file(cfg.model_file)));
  return canon.dump();  // nlohmann objects iterate in sorted key order
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_config_text(cfg))));
  return buf;
}

json VerdictRecord::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["timestamp"] = timestamp;
  j["config_hash"] = config_hash;
  j["pass"] = pass;
  j["metrics"] = metrics;
  j["artifacts"] = artifacts;
  return j;
}

VerdictRecord run_config(const ExperimentConfig& cfg, unsigned workers, bool force) {
  const EnvironmentModel model = model_from_json_file(cfg.model_file);
  if (!force) {
    const auto rep = validate_assumptions(model, cfg.parameters.value("delta", 0.999),
                                          cfg.parameters.value("p", 2.0),
                                          cfg.parameters.value("q", 4.0));
    if (!rep.all_hold()) {
      throw UsageError("model fails assumption validation (rerun with --force to override)");
    }
  }
  const Params params{cfg.parameters, cfg.experiment};
  const RunOutput result = dispatch(cfg.experiment, model, params, cfg.seed, workers);
  const std::string hash = config_hash(cfg);

  fs::create_directories(cfg.out_dir);
  VerdictRecord verdict;
  verdict.experiment = cfg.experiment;
  verdict.timestamp = now_iso8601();
  verdict.config_hash = hash;
  verdict.pass = result.pass;
  verdict.metrics = result.metrics;

  const std::string csv_path = cfg.out_dir + "/" + cfg.experiment + ".csv";
  {
    std::ofstream csv(csv_path, std::ios::binary);
    csv << "experiment,parameter,n,estimate,std_error\n";
    for (const auto& row : result.rows) {
      csv << cfg.experiment << ',' << row.parameter << ',' << format_double(row.n) << ','
          << format_double(row.estimate) << ',' << format_double(row.std_error) << '\n';
    }
    csv << "# config_hash=" << hash << '\n';
  }
  verdict.artifacts.push_back(csv_path);
  for (const auto& [suffix, content] : result.extra_files) {
    const std::string path = cfg.out_dir + "/" + cfg.experiment + "_" + suffix;
    std::ofstream out(path, std::ios::binary);
    out << content;
    out << "# config_hash=" << hash << '\n';
    verdict.artifacts.push_back(path);
  }
  const std::string verdict_path = cfg.out_dir + "/" + cfg.experiment + "_verdict.json";
  {
    std::ofstream out(verdict_path, std::ios::binary);
    out << verdict.to_json().dump(2) << '\n';
  }
  verdict.artifacts.push_back(verdict_path);
  return verdict;
}

int cmd_validate(const std::string& model_file, double delta, double p, double q,
                 const std::string& json_out) {
  EnvironmentModel model = [&] {
    try {
      return model_from_json_file(model_file);
    } catch (const nlohmann::json::parse_error& e) {
      throw UsageError(model_file + ": JSON parse error: " + e.what());
    }
  }();
  const AssumptionReport rep = validate_assumptions(model, delta, p, q);
  std::printf("supercritical      : %s (mu = %.6f)\n", rep.supercritical ? "yes" : "NO", rep.mu);
  std::printf("assumption (A)     : %s", rep.a_holds ? "holds" : "FAILS");
  if (rep.a_holds) std::printf(" (witness atom %d)", rep.a_witness_atom);
  std::printf("\n");
  std::printf("assumption (B)     : %s (delta = %g)", rep.b_holds ? "holds" : "FAILS", rep.delta);
  if (!rep.b_holds) std::printf(" (violating atom %d)", rep.b_violation_atom);
  std::printf("\n");
  std::printf("assumption (C)     : %s (p = %g, q = %g, E[Y^p] = %.6g)\n",
              rep.c_holds ? "holds" : "FAILS", rep.p, rep.q, rep.immigration_p_moment);
  std::printf("nonlattice         : %s%s\n", rep.nonlattice_plausible ? "plausible" : "NOT plausible",
              rep.nonlattice_plausible
                  ? ""
                  : (" (log-means on span " + std::to_string(rep.lattice_span) + ")").c_str());
  if (!json_out.empty()) {
    json j;
    j["supercritical"] = rep.supercritical;
    j["mu"] = rep.mu;
    j["a_holds"] = rep.a_holds;
    j["a_witness_atom"] = rep.a_witness_atom;
    j["b_holds"] = rep.b_holds;
    j["b_violation_atom"] = rep.b_violation_atom;
    j["c_holds"] = rep.c_holds;
    j["immigration_p_moment"] = rep.immigration_p_moment;
    j["offspring_c_moment"] = rep.offspring_c_moment;
    j["nonlattice_plausible"] = rep.nonlattice_plausible;
    j["lattice_span"] = rep.lattice_span;
    std::ofstream out(json_out, std::ios::binary);
    out << j.dump(2) << '\n';
  }
  return rep.all_hold() ? 0 : 1;
}

int cmd_run(const std::string& config_file, const std::string& out_override,
            const std::string& seed_override, unsigned workers, bool force) {
  ExperimentConfig cfg = config_from_json_file(config_file);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (!seed_override.empty()) cfg.seed = std::stoull(seed_override);
  const VerdictRecord verdict = run_config(cfg, workers, force);
  std::printf("%-12s %s  hash=%s  %s\n", verdict.experiment.c_str(),
              verdict.pass ? "PASS" : "FAIL", verdict.config_hash.c_str(),
              verdict.artifacts.front().c_str());
  return verdict.pass ? 0 : 1;
}

int cmd_suite(const std::string& suite_file, unsigned workers) {
  const json doc = parse_json(read_file(suite_file), suite_file);
  if (!doc.is_object() || !doc.contains("configs") || !doc.at("configs").is_array()) {
    throw UsageError(suite_file + ": expected {\"configs\": [...]}");
  }
  const fs::path base = fs::path(suite_file).parent_path();
  int failed = 0;
  std::size_t idx = 0;
  for (const auto& entry : doc.at("configs")) {
    ++idx;
    ExperimentConfig cfg;
    std::string label;
    try {
      if (entry.is_string()) {
        fs::path p = entry.get<std::string>();
        if (p.is_relative()) p = base / p;
        label = p.string();
        cfg = config_from_json_file(p.string());
        // Model paths inside a referenced config resolve against that config.
        if (fs::path(cfg.model_file).is_relative()) {
          cfg.model_file = (fs::path(p).parent_path() / cfg.model_file).string();
        }
      } else {
        label = suite_file + "#" + std::to_string(idx);
        cfg = config_from_json_text(entry.dump(), label);
        if (fs::path(cfg.model_file).is_relative()) {
          cfg.model_file = (base / cfg.model_file).string();
        }
      }
      const VerdictRecord verdict = run_config(cfg, workers, false);
      std::printf("%-12s %s  hash=%s\n", verdict.experiment.c_str(),
                  verdict.pass ? "PASS" : "FAIL", verdict.config_hash.c_str());
      if (!verdict.pass) ++failed;
    } catch (const std::exception& e) {
      std::printf("%-12s ERROR %s\n", label.c_str(), e.what());
      ++failed;
    }
  }
  std::printf("suite: %d failed of %zu\n", failed, idx);
  return std::min(failed, 125);
}

}  // namespace bpire::cli
