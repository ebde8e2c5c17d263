#include "ssfo/displacement.hpp"

#include <cmath>

#include "ssfo/errors.hpp"
#include "ssfo/metrics.hpp"
#include "ssfo/numeric.hpp"

namespace ssfo {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    acc += a[i] * b[i];
  }
  return acc;
}

std::vector<double> logits_from_hidden(const ToyLM& model, std::span<const double> h) {
  const TokenId v = model.vocab_size();
  std::vector<double> logits(static_cast<std::size_t>(v));
  for (TokenId z = 0; z < v; ++z) {
    logits[static_cast<std::size_t>(z)] = dot(model.unembed.row(z), h);
  }
  return logits;
}

}  // namespace

ProbeGeometry probe_direction(const ToyLM& model, const TrapProbe& probe) {
  check_probe(probe, model.vocab);
  const int d = model.dim;
  ProbeGeometry geom;
  geom.v_dir.resize(static_cast<std::size_t>(d));
  const auto wc = model.unembed.row(probe.z_c);
  const auto wp = model.unembed.row(probe.z_p);
  for (int j = 0; j < d; ++j) {
    geom.v_dir[static_cast<std::size_t>(j)] =
        wc[static_cast<std::size_t>(j)] - wp[static_cast<std::size_t>(j)];
  }
  const TokenId v = model.vocab_size();
  geom.inner_products.resize(static_cast<std::size_t>(v));
  for (TokenId z = 0; z < v; ++z) {
    geom.inner_products[static_cast<std::size_t>(z)] = dot(model.unembed.row(z), geom.v_dir);
  }
  return geom;
}

std::vector<double> hidden_flow_step(const ToyLM& model, const TrapProbe& probe,
                                     const LossConfig& cfg, double eta) {
  check_loss_config(cfg);
  check_probe(probe, model.vocab);
  const HiddenState hs = encode(model, probe.prompt);
  const std::vector<double> probs = softmax(logits_from_hidden(model, hs.h));

  const int d = model.dim;
  const TokenId v = model.vocab_size();
  // direction = W[z_c] - lambda*W[z_p] + (lambda-1)*E_pi[W]
  std::vector<double> direction(static_cast<std::size_t>(d), 0.0);
  const auto wc = model.unembed.row(probe.z_c);
  const auto wp = model.unembed.row(probe.z_p);
  for (int j = 0; j < d; ++j) {
    direction[static_cast<std::size_t>(j)] =
        wc[static_cast<std::size_t>(j)] - cfg.lambda * wp[static_cast<std::size_t>(j)];
  }
  if (cfg.lambda != 1.0) {
    for (TokenId z = 0; z < v; ++z) {
      const double p = probs[static_cast<std::size_t>(z)];
      const auto wz = model.unembed.row(z);
      for (int j = 0; j < d; ++j) {
        direction[static_cast<std::size_t>(j)] +=
            (cfg.lambda - 1.0) * p * wz[static_cast<std::size_t>(j)];
      }
    }
  }
  // policy = ref here, so c1 = beta * sigmoid(0) = beta / 2
  const double c1 = 0.5 * cfg.beta;
  std::vector<double> delta(static_cast<std::size_t>(v));
  for (TokenId z = 0; z < v; ++z) {
    delta[static_cast<std::size_t>(z)] = eta * c1 * dot(model.unembed.row(z), direction);
  }
  return delta;
}

std::vector<double> hidden_flow_step_measured(const ToyLM& model, const TrapProbe& probe,
                                              const LossConfig& cfg, double eta) {
  check_loss_config(cfg);
  check_probe(probe, model.vocab);
  const HiddenState hs = encode(model, probe.prompt);
  const std::vector<double> logits0 = logits_from_hidden(model, hs.h);
  const std::vector<double> logprobs = log_softmax(logits0);

  const int d = model.dim;
  const TokenId v = model.vocab_size();
  // grad_h log pi(z | h) = W_z - sum_v pi(v) W_v, via softmax backprop
  std::vector<double> expected_w(static_cast<std::size_t>(d), 0.0);
  for (TokenId z = 0; z < v; ++z) {
    const double p = std::exp(logprobs[static_cast<std::size_t>(z)]);
    const auto wz = model.unembed.row(z);
    for (int j = 0; j < d; ++j) {
      expected_w[static_cast<std::size_t>(j)] += p * wz[static_cast<std::size_t>(j)];
    }
  }
  auto grad_logp = [&](TokenId z) {
    std::vector<double> g(static_cast<std::size_t>(d));
    const auto wz = model.unembed.row(z);
    for (int j = 0; j < d; ++j) {
      g[static_cast<std::size_t>(j)] =
          wz[static_cast<std::size_t>(j)] - expected_w[static_cast<std::size_t>(j)];
    }
    return g;
  };
  const std::vector<double> gc = grad_logp(probe.z_c);
  const std::vector<double> gp = grad_logp(probe.z_p);

  // policy = ref: all four log-ratios vanish, u = 0
  PairLogps lp{logprobs[static_cast<std::size_t>(probe.z_c)],
               logprobs[static_cast<std::size_t>(probe.z_p)],
               logprobs[static_cast<std::size_t>(probe.z_c)],
               logprobs[static_cast<std::size_t>(probe.z_p)]};
  const double c1 = gradient_coefficient(lp, cfg);

  std::vector<double> h_next(hs.h);
  for (int j = 0; j < d; ++j) {
    const double grad_loss =
        -c1 * (gc[static_cast<std::size_t>(j)] - cfg.lambda * gp[static_cast<std::size_t>(j)]);
    h_next[static_cast<std::size_t>(j)] -= eta * grad_loss;
  }
  const std::vector<double> logits1 = logits_from_hidden(model, h_next);
  std::vector<double> delta(static_cast<std::size_t>(v));
  for (TokenId z = 0; z < v; ++z) {
    delta[static_cast<std::size_t>(z)] =
        logits1[static_cast<std::size_t>(z)] - logits0[static_cast<std::size_t>(z)];
  }
  return delta;
}

std::vector<ProbeDelta> measure_displacement(const ToyLM& before, const ToyLM& after,
                                             const std::vector<TrapProbe>& probes) {
  if (!before.same_shape(after)) {
    throw vocab_error("measure_displacement: model snapshots disagree");
  }
  std::vector<ProbeDelta> deltas;
  deltas.reserve(probes.size());
  for (const TrapProbe& probe : probes) {
    check_probe(probe, before.vocab);
    const std::vector<double> p0 = softmax(next_token_logits(before, probe.prompt));
    const std::vector<double> p1 = softmax(next_token_logits(after, probe.prompt));
    ProbeDelta delta;
    double other_sum = 0.0, other_abs = 0.0;
    std::size_t other_n = 0;
    for (TokenId z = 0; z < before.vocab_size(); ++z) {
      const double dp = p1[static_cast<std::size_t>(z)] - p0[static_cast<std::size_t>(z)];
      delta.sum_dp += dp;
      if (z == probe.z_c) {
        delta.dp_zc = dp;
      } else if (z == probe.z_p) {
        delta.dp_zp = dp;
      } else if (!before.vocab.is_special(z)) {
        other_sum += dp;
        other_abs += std::abs(dp);
        ++other_n;
      }
    }
    if (other_n > 0) {
      delta.mean_dp_other = other_sum / static_cast<double>(other_n);
      delta.mean_abs_dp_other = other_abs / static_cast<double>(other_n);
    }
    deltas.push_back(delta);
  }
  return deltas;
}

std::vector<Eq3ProbeResult> verify_eq3_ordering(const ToyLM& model,
                                                const std::vector<TrapProbe>& probes,
                                                const LossConfig& cfg, double eta) {
  std::vector<Eq3ProbeResult> results;
  results.reserve(probes.size());
  for (const TrapProbe& probe : probes) {
    Eq3ProbeResult r;
    const ProbeGeometry geom = probe_direction(model, probe);
    bool zero_dir = true;
    for (double x : geom.v_dir) {
      if (x != 0.0) {
        zero_dir = false;
        break;
      }
    }
    if (zero_dir) {
      r.degenerate_geometry = true;
      results.push_back(r);
      continue;
    }
    const std::vector<double> measured = hidden_flow_step_measured(model, probe, cfg, eta);
    r.spearman = metrics::spearman(geom.inner_products, measured);

    double other_sum = 0.0;
    std::size_t other_n = 0;
    for (TokenId z = 0; z < model.vocab_size(); ++z) {
      if (z == probe.z_c || z == probe.z_p || model.vocab.is_special(z)) {
        continue;
      }
      other_sum += measured[static_cast<std::size_t>(z)];
      ++other_n;
    }
    const double other_mean = other_n > 0 ? other_sum / static_cast<double>(other_n) : 0.0;
    r.zc_above_others = measured[static_cast<std::size_t>(probe.z_c)] > other_mean;
    r.zp_below_others = measured[static_cast<std::size_t>(probe.z_p)] < other_mean;
    results.push_back(r);
  }
  return results;
}

DisplacementReport build_displacement_report(const ToyLM& before, const ToyLM& after,
                                             const std::vector<TrapProbe>& probes,
                                             const LossConfig& cfg, double eta) {
  DisplacementReport report;
  report.per_probe = measure_displacement(before, after, probes);
  report.theory_cfg = cfg;
  report.theory_eta = eta;

  std::vector<double> dpc, dpp;
  dpc.reserve(probes.size());
  dpp.reserve(probes.size());
  for (const ProbeDelta& d : report.per_probe) {
    report.mean_dp_zc += d.dp_zc;
    report.mean_dp_zp += d.dp_zp;
    report.mean_dp_other += d.mean_dp_other;
    report.mean_abs_dp_other += d.mean_abs_dp_other;
    dpc.push_back(d.dp_zc);
    dpp.push_back(d.dp_zp);
  }
  if (!report.per_probe.empty()) {
    const double inv = 1.0 / static_cast<double>(report.per_probe.size());
    report.mean_dp_zc *= inv;
    report.mean_dp_zp *= inv;
    report.mean_dp_other *= inv;
    report.mean_abs_dp_other *= inv;
  }
  if (dpc.size() >= 2) {
    report.pearson_dp = metrics::pearson(dpc, dpp);
  }

  report.eq3 = verify_eq3_ordering(before, probes, cfg, eta);
  double spearman_sum = 0.0;
  std::size_t spearman_n = 0, zc_n = 0, zp_n = 0, valid_n = 0;
  for (const Eq3ProbeResult& r : report.eq3) {
    if (r.degenerate_geometry) {
      continue;
    }
    ++valid_n;
    if (r.spearman.has_value()) {
      spearman_sum += *r.spearman;
      ++spearman_n;
    }
    zc_n += r.zc_above_others ? 1 : 0;
    zp_n += r.zp_below_others ? 1 : 0;
  }
  if (spearman_n > 0) {
    report.mean_spearman = spearman_sum / static_cast<double>(spearman_n);
  }
  if (valid_n > 0) {
    report.frac_zc_above_others = static_cast<double>(zc_n) / static_cast<double>(valid_n);
    report.frac_zp_below_others = static_cast<double>(zp_n) / static_cast<double>(valid_n);
  }
  return report;
}

}  // namespace ssfo
