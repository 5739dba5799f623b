#include "dataprov/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "dataprov/error.hpp"

namespace dataprov::stats {
namespace {

constexpr int kMaxContinuedFractionTerms = 10000;
constexpr double kTiny = 1e-300;

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxContinuedFractionTerms; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) return h;
  }
  throw Error(ErrorCode::kDomain, "incomplete beta continued fraction did not converge");
}

// x^a (1-x)^b / (a B(a,b)), computed in log space; `xc` is 1-x supplied by the
// caller so it can be formed without cancellation.
double beta_prefactor(double a, double b, double x, double xc) {
  const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
  return std::exp(a * std::log(x) + b * std::log(xc) - log_beta);
}

// I_x(a,b) given both x and 1-x.
double incomplete_beta_split(double a, double b, double x, double xc) {
  if (x <= 0.0) return 0.0;
  if (xc <= 0.0) return 1.0;
  const double front = beta_prefactor(a, b, x, xc);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, xc) / b;
}

double t_density(double x, double df) {
  const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) -
                          0.5 * std::log(df * std::numbers::pi);
  return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df));
}

void check_df(double df) {
  if (!(df > 0.0) || !std::isfinite(df)) {
    throw Error(ErrorCode::kDomain, "degrees of freedom must be positive, got " + std::to_string(df));
  }
}

}  // namespace

void SignificanceConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw Error(ErrorCode::kDomain, "alpha must lie in (0,1), got " + std::to_string(alpha));
  }
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorCode::kDomain, "beta parameters must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::kDomain, "incomplete beta argument outside [0,1]");
  return incomplete_beta_split(a, b, x, 1.0 - x);
}

double t_upper_tail(double x, double df) {
  check_df(df);
  if (std::isnan(x)) throw Error(ErrorCode::kDomain, "t tail of NaN");
  if (x < 0.0) return 1.0 - t_upper_tail(-x, df);
  if (std::isinf(x)) return 0.0;
  // P(T > x) = I_z(df/2, 1/2) / 2 with z = df / (df + x^2).
  const double denom = df + x * x;
  const double z = df / denom;
  const double zc = x * x / denom;
  return 0.5 * incomplete_beta_split(0.5 * df, 0.5, z, zc);
}

double t_cdf(double x, double df) {
  check_df(df);
  if (x >= 0.0) return 1.0 - t_upper_tail(x, df);
  return t_upper_tail(-x, df);
}

double t_quantile(double p, double df) {
  check_df(df);
  if (!(p > 0.0 && p < 1.0)) {
    throw Error(ErrorCode::kDomain, "quantile probability must lie in (0,1), got " + std::to_string(p));
  }
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -t_quantile(1.0 - p, df);

  // Solve P(T > x) = q on x > 0; q = 1 - p is exact for p >= 0.5.
  const double q = 1.0 - p;
  double lo = 0.0;
  double hi = 1.0;
  while (t_upper_tail(hi, df) > q) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw Error(ErrorCode::kDomain, "t quantile bracket overflow");
  }

  // Safeguarded Newton on the tail residual, falling back to bisection.
  double x = 0.5 * (lo + hi);
  for (int iter = 0; iter < 400; ++iter) {
    const double residual = t_upper_tail(x, df) - q;
    if (residual == 0.0 || std::fabs(residual) <= 1e-15 * q) return x;
    if (residual > 0.0) {
      lo = x;
    } else {
      hi = x;
    }
    if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) return 0.5 * (lo + hi);
    double next = x + residual / t_density(x, df);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    x = next;
  }
  return x;
}

double grubbs_critical(std::size_t n, const SignificanceConfig& config) {
  config.validate();
  if (n < 3) {
    throw Error(ErrorCode::kInsufficientBatches,
                "Grubbs test needs at least 3 reference values, got " + std::to_string(n));
  }
  const double nn = static_cast<double>(n);
  const double t = t_quantile(1.0 - config.alpha / nn, nn - 2.0);
  const double t2 = t * t;
  return (nn - 1.0) / std::sqrt(nn) * std::sqrt(t2 / (nn - 2.0 + t2));
}

double mean(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "mean of empty sequence");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) throw Error(ErrorCode::kEmptyInput, "sample stddev needs two values");
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

GrubbsResult grubbs_one_sided(std::span<const double> reference, double candidate_mean,
                              Tail direction, const SignificanceConfig& config) {
  config.validate();
  if (reference.size() < 3) {
    throw Error(ErrorCode::kInsufficientBatches,
                "Grubbs test needs at least 3 reference values, got " +
                    std::to_string(reference.size()));
  }
  const bool constant = std::all_of(reference.begin(), reference.end(),
                                    [&](double v) { return v == reference.front(); });
  const double sd = sample_stddev(reference);
  if (constant || sd == 0.0) {
    throw Error(ErrorCode::kZeroVariance, "reference set has zero variance");
  }
  const double m = mean(reference);
  GrubbsResult result;
  result.n = reference.size();
  result.direction = direction;
  result.g = direction == Tail::kLow ? (m - candidate_mean) / sd : (candidate_mean - m) / sd;
  result.g0 = grubbs_critical(result.n, config);
  result.is_outlier = result.g > result.g0;
  return result;
}

double shannon_entropy(std::span<const double> logits) {
  if (logits.size() < 2) throw Error(ErrorCode::kInvalidLogits, "entropy needs at least two logits");
  for (double z : logits) {
    if (!std::isfinite(z)) throw Error(ErrorCode::kInvalidLogits, "non-finite logit");
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - top);
  const double log_norm = top + std::log(sum);
  double h = 0.0;
  for (double z : logits) {
    const double log_p = z - log_norm;
    const double p = std::exp(log_p);
    if (p > 0.0) h -= p * log_p;
  }
  return h;
}

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "cosine similarity of vectors with different lengths");
  }
  double dot = 0.0;
  double uu = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) throw Error(ErrorCode::kZeroVector, "cosine similarity with zero vector");
  return dot / (std::sqrt(uu) * std::sqrt(vv));
}

}  // namespace dataprov::stats
