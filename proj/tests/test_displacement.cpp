#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ssfo/displacement.hpp"
#include "ssfo/errors.hpp"
#include "ssfo/numeric.hpp"
#include "ssfo/objective.hpp"
#include "test_util.hpp"

using namespace ssfo;

namespace {

TrapProbe simple_probe(TokenId z_c, TokenId z_p) {
  TrapProbe p;
  p.prompt = {0, 4, 2, 5, 2};  // BOS ctx SEP query SEP
  p.z_c = z_c;
  p.z_p = z_p;
  return p;
}

// finite-difference gradient of the theory-mode loss with respect to the
// hidden state, followed by an explicit step; fully independent of the
// closed form and of the backprop path
std::vector<double> fd_step_logit_change(const ToyLM& m, const TrapProbe& probe,
                                         const LossConfig& cfg, double eta) {
  const HiddenState hs = encode(m, probe.prompt);
  auto logits_of = [&m](const std::vector<double>& h) {
    std::vector<double> out(static_cast<std::size_t>(m.vocab_size()));
    for (TokenId z = 0; z < m.vocab_size(); ++z) {
      double acc = 0.0;
      for (int j = 0; j < m.dim; ++j) acc += m.unembed.at(z, j) * h[j];
      out[static_cast<std::size_t>(z)] = acc;
    }
    return out;
  };
  const std::vector<double> ref_lp = log_softmax(logits_of(hs.h));
  auto loss_at = [&](const std::vector<double>& h) {
    const std::vector<double> lp = log_softmax(logits_of(h));
    const double u = cfg.beta * (lp[probe.z_c] - ref_lp[probe.z_c]) -
                     cfg.lambda * cfg.beta * (lp[probe.z_p] - ref_lp[probe.z_p]);
    return softplus(-u);
  };
  const double step = 1e-6;
  std::vector<double> grad(hs.h.size());
  for (std::size_t j = 0; j < hs.h.size(); ++j) {
    std::vector<double> hp = hs.h, hm = hs.h;
    hp[j] += step;
    hm[j] -= step;
    grad[j] = (loss_at(hp) - loss_at(hm)) / (2.0 * step);
  }
  std::vector<double> h1 = hs.h;
  for (std::size_t j = 0; j < h1.size(); ++j) h1[j] -= eta * grad[j];
  const std::vector<double> l0 = logits_of(hs.h);
  const std::vector<double> l1 = logits_of(h1);
  std::vector<double> delta(l0.size());
  for (std::size_t z = 0; z < l0.size(); ++z) delta[z] = l1[z] - l0[z];
  return delta;
}

}  // namespace

TEST_CASE("probe_direction on orthonormal unembedding rows") {
  ToyLM m(testutil::make_vocab(6), 6);
  for (int z = 0; z < 6; ++z) m.unembed.at(z, z) = 1.0;  // identity rows
  const ProbeGeometry geom = probe_direction(m, simple_probe(4, 5));
  CHECK(geom.inner_products[4] == 1.0);
  CHECK(geom.inner_products[5] == -1.0);
  for (TokenId z = 0; z < 4; ++z) CHECK(geom.inner_products[z] == 0.0);
}

TEST_CASE("probe_direction rejects z_c == z_p and matches a scratch dot product") {
  const ToyLM m = testutil::make_model(10, 5, 42);
  CHECK_THROWS_AS(probe_direction(m, simple_probe(4, 4)), precondition_error);

  const TrapProbe probe = simple_probe(6, 9);
  const ProbeGeometry geom = probe_direction(m, probe);
  for (TokenId z = 0; z < m.vocab_size(); ++z) {
    double expect = 0.0;
    for (int j = 0; j < m.dim; ++j) {
      expect += m.unembed.at(z, j) * (m.unembed.at(6, j) - m.unembed.at(9, j));
    }
    CHECK(std::abs(geom.inner_products[z] - expect) <= 1e-12);
  }
}

TEST_CASE("hidden_flow_step at lambda 1 is exactly eta*(beta/2)*inner_products") {
  const ToyLM m = testutil::make_model(12, 6, 7);
  const TrapProbe probe = simple_probe(7, 9);
  const LossConfig cfg{0.1, 1.0};
  const double eta = 1e-3;
  const ProbeGeometry geom = probe_direction(m, probe);
  const std::vector<double> delta = hidden_flow_step(m, probe, cfg, eta);
  for (TokenId z = 0; z < m.vocab_size(); ++z) {
    CHECK(std::abs(delta[z] - eta * 0.05 * geom.inner_products[z]) <= 1e-12);
  }
}

TEST_CASE("closed form matches the measured one-step change (backprop path)") {
  const ToyLM m = testutil::make_model(12, 6, 8);
  const TrapProbe probe = simple_probe(5, 10);
  for (double lambda : {1.0, 1.5}) {
    const LossConfig cfg{0.1, lambda};
    const std::vector<double> closed = hidden_flow_step(m, probe, cfg, 1e-3);
    const std::vector<double> measured = hidden_flow_step_measured(m, probe, cfg, 1e-3);
    for (std::size_t z = 0; z < closed.size(); ++z) {
      CHECK(testutil::close(closed[z], measured[z], 1e-9));
    }
  }
}

TEST_CASE("closed form matches a finite-difference step oracle") {
  const ToyLM m = testutil::make_model(10, 5, 9);
  const TrapProbe probe = simple_probe(6, 8);
  for (double lambda : {1.0, 1.5}) {
    const LossConfig cfg{0.1, lambda};
    const double eta = 1e-6;
    const std::vector<double> closed = hidden_flow_step(m, probe, cfg, eta);
    const std::vector<double> fd = fd_step_logit_change(m, probe, cfg, eta);
    for (std::size_t z = 0; z < closed.size(); ++z) {
      CHECK(testutil::close(closed[z], fd[z], lambda == 1.0 ? 1e-6 : 1e-5));
    }
  }
}

TEST_CASE("measure_displacement: identical snapshots give all-zero deltas") {
  const ToyLM m = testutil::make_model(10, 5, 10);
  const std::vector<TrapProbe> probes = {simple_probe(4, 5), simple_probe(6, 7)};
  const auto deltas = measure_displacement(m, m, probes);
  for (const ProbeDelta& d : deltas) {
    CHECK(d.dp_zc == 0.0);
    CHECK(d.dp_zp == 0.0);
    CHECK(d.sum_dp == 0.0);
  }
  // zero variance in both series -> degenerate, not 0 or NaN
  const DisplacementReport report =
      build_displacement_report(m, m, probes, LossConfig{0.1, 1.0}, 1e-3);
  CHECK_FALSE(report.pearson_dp.has_value());
}

TEST_CASE("measure_displacement matches hand-computed distributions") {
  // before: zero unembedding -> uniform 1/6; after: logit(z_c) = ln 3 ->
  // exp-weights (1,1,1,1,3,1)/8, so dp(z_c) = 3/8 - 1/6 and dp(z_p) = 1/8 - 1/6
  ToyLM before(testutil::make_vocab(6), 2);
  before.body_bias = {5.0, 0.0};
  ToyLM after = before;
  const double h0 = std::tanh(5.0);
  TrapProbe probe;
  probe.prompt = {0};
  probe.z_c = 4;
  probe.z_p = 5;
  after.unembed.at(4, 0) = std::log(3.0) / h0;
  const auto deltas = measure_displacement(before, after, {probe});
  CHECK(std::abs(deltas[0].dp_zc - (3.0 / 8.0 - 1.0 / 6.0)) <= 1e-12);
  CHECK(std::abs(deltas[0].dp_zp - (1.0 / 8.0 - 1.0 / 6.0)) <= 1e-12);
  CHECK(std::abs(deltas[0].sum_dp) <= 1e-12);
}

TEST_CASE("probability conservation per probe on random snapshots") {
  const ToyLM before = testutil::make_model(16, 6, 11);
  const ToyLM after = testutil::make_model(16, 6, 12);
  std::vector<TrapProbe> probes;
  for (TokenId z = 4; z + 1 < 16; z += 2) probes.push_back(simple_probe(z, z + 1));
  for (const ProbeDelta& d : measure_displacement(before, after, probes)) {
    CHECK(std::abs(d.sum_dp) <= 1e-10);
  }
}

TEST_CASE("measure_displacement rejects mismatched snapshots") {
  const ToyLM a = testutil::make_model(10, 5, 13);
  const ToyLM b = testutil::make_model(12, 5, 13);
  CHECK_THROWS_AS(measure_displacement(a, b, {}), vocab_error);
}

TEST_CASE("verify_eq3_ordering: lambda 1 gives Spearman exactly 1") {
  Rng seed_rng(14);
  for (int it = 0; it < 10; ++it) {
    const ToyLM m = testutil::make_model(12, 5, 140 + it);
    const std::vector<TrapProbe> probes = {simple_probe(4, 9), simple_probe(6, 11)};
    const auto results = verify_eq3_ordering(m, probes, LossConfig{0.1, 1.0}, 1e-3);
    for (const Eq3ProbeResult& r : results) {
      REQUIRE(r.spearman.has_value());
      CHECK(*r.spearman == 1.0);
      CHECK_FALSE(r.degenerate_geometry);
    }
  }
}

TEST_CASE("eq3 class ordering at lambda 1.5: frozen fraction over 100 random probes") {
  // regression constant recorded from the first run of this deterministic
  // setup: 90 of 100 probes satisfy both class comparisons
  Rng rng(555);
  int both = 0, total = 0;
  for (int m = 0; m < 10; ++m) {
    const ToyLM model = testutil::make_model(14, 6, 555 + m, 0.8);
    std::vector<TrapProbe> probes;
    for (int p = 0; p < 10; ++p) {
      TrapProbe probe;
      probe.prompt = testutil::random_payload(rng, 14, 3);
      probe.prompt.insert(probe.prompt.begin(), 0);
      probe.z_c = 4 + static_cast<TokenId>(rng.next_below(10));
      do {
        probe.z_p = 4 + static_cast<TokenId>(rng.next_below(10));
      } while (probe.z_p == probe.z_c);
      probes.push_back(probe);
    }
    for (const Eq3ProbeResult& r :
         verify_eq3_ordering(model, probes, LossConfig{0.1, 1.5}, 1e-3)) {
      if (r.degenerate_geometry) continue;
      ++total;
      if (r.zc_above_others && r.zp_below_others) ++both;
    }
  }
  CHECK(total == 100);
  CHECK(both == 90);
}

TEST_CASE("degenerate geometry is reported, not failed") {
  ToyLM m(testutil::make_vocab(8), 4);
  Rng rng(15);
  std::vector<double> row(4);
  for (double& x : row) x = rng.next_gaussian();
  for (TokenId z = 0; z < 8; ++z) {
    for (int j = 0; j < 4; ++j) m.unembed.at(z, j) = row[j];
  }
  m.body_bias = {0.3, -0.2, 0.1, 0.5};
  const auto results = verify_eq3_ordering(m, {simple_probe(4, 5)}, LossConfig{0.1, 1.0},
                                           1e-3);
  REQUIRE(results.size() == 1);
  CHECK(results[0].degenerate_geometry);
  CHECK_FALSE(results[0].spearman.has_value());
}

TEST_CASE("report determinism: identical inputs give identical reports") {
  const ToyLM before = testutil::make_model(12, 5, 16);
  const ToyLM after = testutil::make_model(12, 5, 17);
  const std::vector<TrapProbe> probes = {simple_probe(4, 6), simple_probe(5, 8),
                                         simple_probe(7, 10)};
  const LossConfig cfg{0.1, 1.3};
  const DisplacementReport a = build_displacement_report(before, after, probes, cfg, 1e-3);
  const DisplacementReport b = build_displacement_report(before, after, probes, cfg, 1e-3);
  REQUIRE(a.per_probe.size() == b.per_probe.size());
  for (std::size_t i = 0; i < a.per_probe.size(); ++i) {
    CHECK(a.per_probe[i].dp_zc == b.per_probe[i].dp_zc);
    CHECK(a.per_probe[i].dp_zp == b.per_probe[i].dp_zp);
  }
  CHECK(a.mean_dp_zc == b.mean_dp_zc);
  CHECK(a.pearson_dp == b.pearson_dp);
  CHECK(a.mean_spearman == b.mean_spearman);
}
