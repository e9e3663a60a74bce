#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace bpire {

// Standard normal density and distribution function.
double normal_pdf(double x);
double normal_cdf(double x);

// Regularized upper incomplete gamma Q(a, x) = Gamma(a,x)/Gamma(a).
double gamma_q(double a, double x);

// Upper tail of the chi-square distribution with df degrees of freedom.
double chi_square_sf(double x, double df);

// Mean and standard error of the mean.
struct MeanSE {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};
MeanSE mean_and_se(std::span<const double> values);

// Two-sided Kolmogorov-Smirnov statistic of a sample against a CDF,
// right-continuous empirical CDF convention. Sorts a copy of the sample.
double ks_statistic(std::vector<double> sample, const std::function<double(double)>& cdf);

// Runs fn(i) for i in [0, count) across at most `workers` threads
// (0 = hardware concurrency). Results must be written to per-index slots;
// any reduction happens after the join, so output is scheduling-independent.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

}  // namespace bpire
