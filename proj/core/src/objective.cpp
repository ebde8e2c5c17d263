#include "ssfo/objective.hpp"

#include "ssfo/errors.hpp"
#include "ssfo/numeric.hpp"

namespace ssfo {

void check_loss_config(const LossConfig& cfg) {
  if (!(cfg.beta > 0.0)) {
    throw config_error("loss config: beta must be > 0");
  }
  if (!(cfg.lambda >= 1.0)) {
    throw config_error("loss config: lambda must be >= 1");
  }
}

double inner_margin(const PairLogps& lp, const LossConfig& cfg) {
  return cfg.beta * (lp.policy_chosen - lp.ref_chosen) -
         cfg.lambda * cfg.beta * (lp.policy_rejected - lp.ref_rejected);
}

double loss(const PairLogps& lp, const LossConfig& cfg) {
  return softplus(-inner_margin(lp, cfg));
}

double gradient_coefficient(const PairLogps& lp, const LossConfig& cfg) {
  return cfg.beta * sigmoid(-inner_margin(lp, cfg));
}

namespace {

std::vector<TokenId> with_eos(std::span<const TokenId> response, TokenId eos) {
  std::vector<TokenId> out(response.begin(), response.end());
  out.push_back(eos);
  return out;
}

}  // namespace

PairLogps pair_logps(const ToyLM& model, const ToyLM& ref, const PreferencePair& pair) {
  if (!model.same_shape(ref)) {
    throw vocab_error("pair_logps: policy and reference models disagree");
  }
  const std::vector<TokenId> prompt =
      prompt_with_context(model.vocab, pair.context, pair.query);
  const std::vector<TokenId> chosen = with_eos(pair.chosen, model.vocab.eos());
  const std::vector<TokenId> rejected = with_eos(pair.rejected, model.vocab.eos());
  PairLogps lp;
  lp.policy_chosen = sequence_logprob(model, prompt, chosen);
  lp.policy_rejected = sequence_logprob(model, prompt, rejected);
  lp.ref_chosen = sequence_logprob(ref, prompt, chosen);
  lp.ref_rejected = sequence_logprob(ref, prompt, rejected);
  return lp;
}

PairGradient pair_gradient(const ToyLM& model, const ToyLM& ref, const PreferencePair& pair,
                           const LossConfig& cfg, ParamMask mask) {
  check_loss_config(cfg);
  if (!model.same_shape(ref)) {
    throw vocab_error("pair_gradient: policy and reference models disagree");
  }
  const std::vector<TokenId> prompt =
      prompt_with_context(model.vocab, pair.context, pair.query);
  const std::vector<TokenId> chosen = with_eos(pair.chosen, model.vocab.eos());
  const std::vector<TokenId> rejected = with_eos(pair.rejected, model.vocab.eos());

  PairGradient g{ModelGrad(model), ModelGrad(model), ModelGrad(model), 0.0, {}, 0.0};
  g.logps.policy_chosen =
      accumulate_logprob_grad(model, prompt, chosen, mask, g.chosen_term);
  g.logps.policy_rejected =
      accumulate_logprob_grad(model, prompt, rejected, mask, g.rejected_term);
  g.logps.ref_chosen = sequence_logprob(ref, prompt, chosen);
  g.logps.ref_rejected = sequence_logprob(ref, prompt, rejected);

  g.coeff = gradient_coefficient(g.logps, cfg);
  g.pair_loss = loss(g.logps, cfg);
  g.total.add_scaled(g.chosen_term, -g.coeff);
  g.total.add_scaled(g.rejected_term, g.coeff * cfg.lambda);
  return g;
}

}  // namespace ssfo
