#pragma once

#include <cstddef>
#include <span>

namespace dataprov::stats {

struct SignificanceConfig {
  double alpha = 0.05;

  void validate() const;
};

// Which side of the reference set counts as extreme.
enum class Tail { kLow, kHigh };

struct GrubbsResult {
  double g = 0.0;   // test statistic
  double g0 = 0.0;  // critical value
  std::size_t n = 0;
  bool is_outlier = false;
  Tail direction = Tail::kLow;
};

/// Regularized incomplete beta function I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

/// Student-t upper tail probability P(T > x) for x >= 0.
double t_upper_tail(double x, double df);

double t_cdf(double x, double df);

/// Inverse CDF of Student's t distribution. Throws kDomain for p outside (0,1)
/// or df <= 0.
double t_quantile(double p, double df);

/// One-sided Grubbs critical value
///   G0 = (n-1)/sqrt(n) * sqrt(t^2 / (n-2+t^2)),  t = t_{1-alpha/n, n-2}.
double grubbs_critical(std::size_t n, const SignificanceConfig& config = {});

double mean(std::span<const double> values);

/// Sample standard deviation with the (n-1) denominator.
double sample_stddev(std::span<const double> values);

/// Tests whether `candidate_mean` is an outlier of `reference` on the given
/// side. Low: G = (mean(ref) - candidate) / sd(ref); High: sign flipped.
/// Throws kInsufficientBatches when fewer than 3 reference values and
/// kZeroVariance when all reference values coincide.
GrubbsResult grubbs_one_sided(std::span<const double> reference, double candidate_mean,
                              Tail direction, const SignificanceConfig& config = {});

/// Entropy (nats) of softmax(logits).
double shannon_entropy(std::span<const double> logits);

double cosine_similarity(std::span<const double> u, std::span<const double> v);

}  // namespace dataprov::stats
