#include "wq/mev.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wq::mev {

namespace {

constexpr double kSeFloor = 1e-12;

int argmax_mean(const std::vector<GaussianBelief>& beliefs) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(beliefs.size()); ++i)
    if (beliefs[i].mean > beliefs[best].mean) best = i;
  return best;
}

void check_finite(const std::vector<GaussianBelief>& beliefs) {
  for (std::size_t i = 0; i < beliefs.size(); ++i) {
    if (!std::isfinite(beliefs[i].mean) || !std::isfinite(beliefs[i].std_error) ||
        beliefs[i].std_error < 0.0)
      throw std::invalid_argument("non-finite belief at index " + std::to_string(i));
  }
}

// In-place Fisher-Yates; std::shuffle is avoided so the split is a fixed
// function of the seed rather than of the standard library version.
void fisher_yates(std::vector<double>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

double mean_of(const double* p, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += p[i];
  return s / static_cast<double>(n);
}

}  // namespace

double normal_pdf(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

double normal_cdf(double x, double mu, double sigma) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::sqrt(2.0)));
}

std::vector<GaussianBelief> sample_mean_beliefs(const SampleSet& samples,
                                                double prior_scale) {
  std::vector<GaussianBelief> out;
  out.reserve(samples.samples.size());
  for (std::size_t i = 0; i < samples.samples.size(); ++i) {
    const auto& s = samples.samples[i];
    if (s.empty())
      throw std::invalid_argument("empty sample list for variable " + std::to_string(i));
    double mean = 0.0, m2 = 0.0;
    long n = 0;
    for (double x : s) {
      ++n;
      const double d = x - mean;
      mean += d / static_cast<double>(n);
      m2 += d * (x - mean);
    }
    GaussianBelief b;
    b.mean = mean;
    b.count = n;
    b.std_error = n < 2 ? prior_scale
                        : std::sqrt(m2 / static_cast<double>(n - 1)) /
                              std::sqrt(static_cast<double>(n));
    out.push_back(b);
  }
  return out;
}

double max_estimator(const std::vector<GaussianBelief>& beliefs) {
  if (beliefs.empty()) throw std::invalid_argument("max_estimator: empty belief list");
  return beliefs[argmax_mean(beliefs)].mean;
}

double double_estimator(const SampleSet& samples, std::uint64_t split_seed) {
  const int m = samples.size();
  if (m < 2) throw std::invalid_argument("double_estimator: needs at least 2 variables");
  std::mt19937_64 rng(split_seed);
  std::vector<double> mean_a(m), mean_b(m);
  for (int i = 0; i < m; ++i) {
    std::vector<double> s = samples.samples[i];
    if (s.size() < 2)
      throw std::invalid_argument("double_estimator: variable " + std::to_string(i) +
                                  " has fewer than 2 samples");
    fisher_yates(s, rng);
    const std::size_t na = (s.size() + 1) / 2;  // larger half when odd
    mean_a[i] = mean_of(s.data(), na);
    mean_b[i] = mean_of(s.data() + na, s.size() - na);
  }
  const auto amax = [](const std::vector<double>& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
  };
  const int a_star = amax(mean_a);
  const int b_star = amax(mean_b);
  return 0.5 * (mean_a[b_star] + mean_b[a_star]);
}

VectorXd we_weights_gaussian(const std::vector<GaussianBelief>& beliefs,
                             const QuadratureConfig& quad) {
  if (beliefs.empty())
    throw std::invalid_argument("we_weights_gaussian: empty belief list");
  check_finite(beliefs);
  const int m = static_cast<int>(beliefs.size());
  const double tw = quad.tail_width;

  // A point mass strictly above every other belief's support takes all the
  // probability; return the indicator exactly instead of integrating a spike.
  {
    const int top = argmax_mean(beliefs);
    if (beliefs[top].std_error == 0.0) {
      bool dominates = true;
      for (int j = 0; j < m && dominates; ++j) {
        if (j == top) continue;
        if (beliefs[top].mean <= beliefs[j].mean + tw * beliefs[j].std_error)
          dominates = false;
      }
      if (dominates) {
        VectorXd w = VectorXd::Zero(m);
        w[top] = 1.0;
        return w;
      }
    }
  }

  Eigen::VectorXd mu(m), se(m);
  for (int i = 0; i < m; ++i) {
    mu[i] = beliefs[i].mean;
    se[i] = std::max(beliefs[i].std_error, kSeFloor);
  }
  const double lo = (mu - tw * se).minCoeff();
  const double hi = (mu + tw * se).maxCoeff();
  int n = std::max(quad.intervals, 2);
  if (n % 2) ++n;
  const double h = (hi - lo) / n;

  VectorXd w = VectorXd::Zero(m);
  VectorXd pdf(m), cdf(m);
  for (int k = 0; k <= n; ++k) {
    const double x = lo + h * k;
    for (int i = 0; i < m; ++i) {
      pdf[i] = normal_pdf(x, mu[i], se[i]);
      cdf[i] = normal_cdf(x, mu[i], se[i]);
    }
    const double simpson = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
    for (int i = 0; i < m; ++i) {
      if (pdf[i] == 0.0) continue;
      double prod = pdf[i];
      for (int j = 0; j < m; ++j)
        if (j != i) prod *= cdf[j];
      w[i] += simpson * prod;
    }
  }
  w *= h / 3.0;
  w = w.cwiseMax(0.0);
  const double total = w.sum();
  if (total <= 0.0)  // pathological overlap of point masses; fall back to uniform
    return VectorXd::Constant(m, 1.0 / m);
  return w / total;
}

double weighted_estimator(const std::vector<GaussianBelief>& beliefs,
                          const VectorXd& weights) {
  if (static_cast<int>(beliefs.size()) != weights.size())
    throw std::invalid_argument("weighted_estimator: beliefs/weights length mismatch");
  double v = 0.0;
  for (int i = 0; i < weights.size(); ++i) v += weights[i] * beliefs[i].mean;
  return v;
}

VectorXd mc_max_probabilities(const std::vector<GaussianBelief>& beliefs,
                              long draws, std::mt19937_64& rng) {
  if (draws < 1) throw std::invalid_argument("mc_max_probabilities: draws must be >= 1");
  check_finite(beliefs);
  const int m = static_cast<int>(beliefs.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<long> wins(m, 0);
  for (long t = 0; t < draws; ++t) {
    int best = 0;
    double best_v = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      const double v = beliefs[i].std_error > 0.0
                           ? beliefs[i].mean + beliefs[i].std_error * gauss(rng)
                           : beliefs[i].mean;
      if (v > best_v) {  // lowest index wins ties
        best_v = v;
        best = i;
      }
    }
    ++wins[best];
  }
  VectorXd w(m);
  for (int i = 0; i < m; ++i) w[i] = static_cast<double>(wins[i]) / draws;
  return w;
}

}  // namespace wq::mev
