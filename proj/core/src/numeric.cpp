#include "ssfo/numeric.hpp"

#include <algorithm>
#include <cmath>

#include "ssfo/errors.hpp"

namespace ssfo {

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) {
    throw precondition_error("log_sum_exp: empty input");
  }
  const double m = *std::max_element(xs.begin(), xs.end());
  double acc = 0.0;
  for (double x : xs) {
    acc += std::exp(x - m);
  }
  return m + std::log(acc);
}

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = logits[i] - lse;
  }
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw precondition_error("softmax: empty input");
  }
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    total += out[i];
  }
  const double inv = 1.0 / total;
  for (double& x : out) {
    x *= inv;
  }
  return out;
}

double softplus(double x) {
  if (x > 0.0) {
    return x + std::log1p(std::exp(-x));
  }
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace ssfo
