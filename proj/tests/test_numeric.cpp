#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "ssfo/numeric.hpp"
#include "ssfo/rng.hpp"

using namespace ssfo;

TEST_CASE("log_sum_exp matches naive evaluation on small inputs") {
  const std::vector<double> xs = {0.3, -1.2, 2.5, 0.0};
  double naive = 0.0;
  for (double x : xs) naive += std::exp(x);
  CHECK(log_sum_exp(xs) == doctest::Approx(std::log(naive)).epsilon(1e-14));
}

TEST_CASE("log_sum_exp survives large magnitudes") {
  const std::vector<double> xs = {1000.0, 1000.0};
  CHECK(log_sum_exp(xs) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-14));
  const std::vector<double> lo = {-1000.0, -1000.0, -1000.0};
  CHECK(log_sum_exp(lo) == doctest::Approx(-1000.0 + std::log(3.0)).epsilon(1e-14));
}

TEST_CASE("softmax normalizes and equal logits are uniform") {
  const std::vector<double> logits = {1.0, 1.0, 1.0};
  const std::vector<double> p = softmax(logits);
  for (double x : p) CHECK(x == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Rng rng(7);
  std::vector<double> random_logits(16);
  for (double& x : random_logits) x = 10.0 * rng.next_gaussian();
  double total = 0.0;
  for (double x : softmax(random_logits)) total += x;
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("log_softmax is shift invariant") {
  Rng rng(11);
  std::vector<double> logits(8);
  for (double& x : logits) x = 5.0 * rng.next_gaussian();
  const std::vector<double> base = log_softmax(logits);
  for (double& x : logits) x += 123.456;
  const std::vector<double> shifted = log_softmax(logits);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::abs(base[i] - shifted[i]) <= 1e-12);
  }
}

TEST_CASE("softplus is stable and positive across the double range") {
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(std::isfinite(softplus(700.0)));
  CHECK(std::isfinite(softplus(-700.0)));
  CHECK(softplus(700.0) == doctest::Approx(700.0).epsilon(1e-15));
  CHECK(softplus(-50.0) > 0.0);
  // -log(sigmoid(u)) identity
  const double u = 3.7;
  CHECK(softplus(-u) == doctest::Approx(-std::log(sigmoid(u))).epsilon(1e-13));
}

TEST_CASE("sigmoid tails") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) == 0.0);
  CHECK(sigmoid(5.0) + sigmoid(-5.0) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("rng streams are stable and stage-separated") {
  Rng a = Rng::stream(17, "stage-a");
  Rng a2 = Rng::stream(17, "stage-a");
  Rng b = Rng::stream(17, "stage-b");
  CHECK(a.next_u64() == a2.next_u64());
  Rng a3 = Rng::stream(17, "stage-a");
  CHECK(a3.next_u64() != b.next_u64());
}

TEST_CASE("categorical sampling hits every bucket roughly proportionally") {
  Rng rng(5);
  const std::vector<double> probs = {0.5, 0.25, 0.25};
  std::vector<int> counts(3, 0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    counts[rng.sample_categorical(probs)]++;
  }
  CHECK(std::abs(counts[0] / static_cast<double>(n) - 0.5) < 0.02);
  CHECK(std::abs(counts[1] / static_cast<double>(n) - 0.25) < 0.02);
}
