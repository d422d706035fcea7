#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

// Estimators of the maximum expected value (MEV) of a set of independent
// random variables: Maximum Estimator, Double Estimator and Weighted
// Estimator, plus the Gaussian and Monte Carlo weight computations the
// Weighted Estimator is built on.
namespace wq::mev {

using Eigen::VectorXd;

// Normal approximation of a sample mean: mean, standard error and the
// number of samples it was computed from.
struct GaussianBelief {
  double mean = 0.0;
  double std_error = 0.0;
  long count = 1;
};

// Per-variable sample lists S_i, i = 0..M-1.
struct SampleSet {
  std::vector<std::vector<double>> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

// Composite-Simpson settings for the weight integral. The integration
// range spans [min_i(mean_i - tail_width*se_i), max_i(mean_i + tail_width*se_i)].
struct QuadratureConfig {
  int intervals = 2048;  // rounded up to even
  double tail_width = 8.0;
};

// Standard error assigned to a single-sample variable, where the data
// alone leaves it undefined.
inline constexpr double kDefaultPriorScale = 1.0;

double normal_pdf(double x, double mu, double sigma);
double normal_cdf(double x, double mu, double sigma);

// Welford mean/variance per variable; count == 1 falls back to
// `prior_scale` as the standard error.
std::vector<GaussianBelief> sample_mean_beliefs(
    const SampleSet& samples, double prior_scale = kDefaultPriorScale);

// max_i mean_i.
double max_estimator(const std::vector<GaussianBelief>& beliefs);

// Cross-validated estimate: each S_i is split into two disjoint halves by a
// seeded shuffle (first, larger half -> A); the argmax variable of one
// half's means is evaluated on the other half.
double double_estimator(const SampleSet& samples, std::uint64_t split_seed);

// weights[i] = P(X_i is the maximum) under independent normal beliefs,
// integral of pdf_i * prod_{j!=i} cdf_j by composite Simpson.
VectorXd we_weights_gaussian(const std::vector<GaussianBelief>& beliefs,
                             const QuadratureConfig& quad = {});

// sum_i weights[i] * mean_i.
double weighted_estimator(const std::vector<GaussianBelief>& beliefs,
                          const VectorXd& weights);

// Monte Carlo oracle for we_weights_gaussian: argmax win frequencies over
// `draws` joint samples, lowest index winning ties.
VectorXd mc_max_probabilities(const std::vector<GaussianBelief>& beliefs,
                              long draws, std::mt19937_64& rng);

}  // namespace wq::mev
