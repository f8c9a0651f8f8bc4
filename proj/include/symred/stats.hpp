#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace symred {

struct MCEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample standard deviation / sqrt(n)
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

// Sample mean with stderr = sample standard deviation / sqrt(n).
inline MCEstimate mc_estimate(std::span<const double> samples, std::uint64_t seed = 0) {
  if (samples.size() < 2) throw std::invalid_argument("mc_estimate: need at least two samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n), samples.size(), seed};
}

inline double sample_variance(std::span<const double> samples) {
  if (samples.size() < 2) throw std::invalid_argument("sample_variance: need at least two samples");
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  return ss / (n - 1.0);
}

// Standard error of the unbiased sample variance, from the fourth central moment.
inline double sample_variance_stderr(std::span<const double> samples) {
  const double n = static_cast<double>(samples.size());
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : samples) {
    const double c = (v - mean) * (v - mean);
    m2 += c;
    m4 += c * c;
  }
  m2 /= n;
  m4 /= n;
  return std::sqrt(std::max(0.0, (m4 - (n - 3.0) / (n - 1.0) * m2 * m2) / n));
}

inline void to_json(nlohmann::json& j, const MCEstimate& e) {
  j = nlohmann::json{{"mean", e.mean}, {"stderr", e.std_error}, {"n", e.n}, {"seed", e.seed}};
}

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2),
// truncated at 100 terms or when a term drops below 1e-10 of the partial sum.
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;  // series is numerically 1 here and converges slowly
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += sign * term;
    if (term <= 1e-10 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline void to_json(nlohmann::json& j, const KsResult& r) {
  j = nlohmann::json{{"statistic", r.statistic}, {"p_value", r.p_value}};
}

// Two-sided two-sample Kolmogorov-Smirnov test.
inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 20 || b.size() < 20) throw std::invalid_argument("ks_two_sample: need at least 20 samples per side");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double na = static_cast<double>(x.size());
  const double nb = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = na * nb / (na + nb);
  return {d, kolmogorov_survival(std::sqrt(ne) * d)};
}

}  // namespace symred
