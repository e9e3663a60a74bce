#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace bpire {

class Rng;

enum class DistKind { PointMass, Poisson, LinearFractional, Finite };

// One-generation offspring or immigration distribution with an analytic
// probability generating function. The four parametric families:
//   PointMass(j)              all mass at j
//   Poisson(mean)             exp(mean (s - 1))
//   LinearFractional(a, b)    mass a at 0, then (1-a)(1-b) b^{j-1} at j >= 1;
//                             pgf a + (1-a)(1-b) s / (1 - b s)
//   Finite(p_0..p_J)          polynomial pgf
class DistSpec {
 public:
  static DistSpec point_mass(std::int64_t j);
  static DistSpec poisson(double mean);
  static DistSpec linear_fractional(double a, double b);
  static DistSpec finite(std::vector<double> probabilities);

  DistKind kind() const { return kind_; }
  std::int64_t point() const { return j_; }
  double poisson_mean() const { return mean_; }
  double lf_a() const { return a_; }
  double lf_b() const { return b_; }
  const std::vector<double>& finite_probs() const { return probs_; }

  double mean() const;
  double variance() const;
  double pmf(std::int64_t j) const;
  // E[min(X, a)], the mean after truncating all mass in [a, inf) at a.
  double truncated_mean(std::int64_t a) const;
  // E[X^p] by direct summation (tails decay geometrically or faster).
  double power_moment(double p) const;

  // pgf value; requires |s| <= 1 + 1e-12.
  std::complex<double> pgf(std::complex<double> s) const;
  double pgf(double s) const;
  // Unchecked real evaluation used for tail bounds at arguments x > 1.
  // Returns +inf when x is outside the domain of the analytic expression.
  double pgf_extended(double x) const;

  std::string describe() const;
  bool operator==(const DistSpec&) const = default;

 private:
  DistSpec() = default;
  DistKind kind_ = DistKind::PointMass;
  std::int64_t j_ = 0;
  double mean_ = 0.0;
  double a_ = 0.0, b_ = 0.0;
  std::vector<double> probs_;
};

// Offspring specs additionally require a strictly positive mean; immigration
// specs only need a valid distribution. Throws std::invalid_argument.
void require_valid_offspring(const DistSpec& spec);
void require_valid_immigration(const DistSpec& spec);

struct EnvAtom {
  double weight = 0.0;
  DistSpec offspring;
  DistSpec immigration;
  bool operator==(const EnvAtom&) const = default;
};

// Finite mixture law of the per-generation environment. Weights sum to 1.
class EnvironmentModel {
 public:
  explicit EnvironmentModel(std::vector<EnvAtom> atoms);
  const std::vector<EnvAtom>& atoms() const { return atoms_; }
  std::size_t sample_atom(Rng& rng) const;
  bool operator==(const EnvironmentModel&) const = default;

 private:
  std::vector<EnvAtom> atoms_;
};

struct EnvStep {
  DistSpec offspring;
  DistSpec immigration;
  bool operator==(const EnvStep&) const = default;
};

struct EnvPath {
  std::vector<EnvStep> steps;
  std::size_t length() const { return steps.size(); }
  bool operator==(const EnvPath&) const = default;
};

// n i.i.d. draws from the mixture; the offspring/immigration pair of one
// step always comes from the same atom. Deterministic in (model, n, seed).
EnvPath sample_env(const EnvironmentModel& model, std::size_t n, std::uint64_t seed);

struct AssumptionReport {
  bool supercritical = false;
  double mu = 0.0;  // E log m_1, exact mixture value
  bool a_holds = false;
  int a_witness_atom = -1;  // atom with h(0) > 0, f(0) > 0, f({1}) > 0
  bool b_holds = false;
  double delta = 0.0;
  int b_violation_atom = -1;  // atom with f(0) >= delta, if any
  bool c_holds = false;
  double p = 0.0, q = 0.0;
  double immigration_p_moment = 0.0;        // E[Y_1^p]
  double offspring_c_moment = 0.0;          // E[(1+|log m|^q)((N/m)^p + 1)]
  bool nonlattice_plausible = false;
  double lattice_span = 0.0;  // real-gcd of atom log-means when lattice-like
  bool all_hold() const { return supercritical && a_holds && b_holds && c_holds; }
};

// Checks the standing assumptions on a finite mixture. delta in (0,1),
// p in (1,2], q > 1. Pure and deterministic.
AssumptionReport validate_assumptions(const EnvironmentModel& model, double delta,
                                      double p, double q);

// JSON model files: {"atoms":[{"weight":w,"offspring":{...},"immigration":{...}}]}.
// Spec objects are tagged by "kind": point_mass|poisson|linear_fractional|finite.
EnvironmentModel model_from_json_text(const std::string& text);
EnvironmentModel model_from_json_file(const std::string& path);
std::string model_to_json_text(const EnvironmentModel& model);

}  // namespace bpire
