#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>

namespace softctl {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum_i exp(x_i)) with max-shift. Empty input or all -inf gives -inf.
inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return kNegInf;
  const double m = *std::max_element(xs.begin(), xs.end());
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - m);
  return m + std::log(acc);
}

/// log(sum_i w_i exp(x_i)) for non-negative weights; zero-weight terms are skipped
/// so that a -inf or huge x_i paired with w_i = 0 never contributes.
inline double log_sum_exp_weighted(std::span<const double> weights, std::span<const double> xs) {
  double m = kNegInf;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (weights[i] > 0.0) m = std::max(m, xs[i]);
  if (m == kNegInf) return kNegInf;
  if (std::isinf(m)) return m;
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (weights[i] > 0.0) acc += weights[i] * std::exp(xs[i] - m);
  return m + std::log(acc);
}

/// out_i = exp(x_i - logsumexp(x)). Safe for any finite x.
inline void softmax(std::span<const double> xs, std::span<double> out) {
  // Shift by the max rather than the lse: exp(x - lse) loses digits when |x| is large.
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) {
    const double lse = log_sum_exp(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = std::exp(xs[i] - lse);
    return;
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) sum += (out[i] = std::exp(xs[i] - hi));
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] /= sum;
}

/// p * log p with the 0 log 0 = 0 convention.
inline double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

inline double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) h -= xlogx(p);
  return h;
}

}  // namespace softctl
