#pragma once

#include "ssfo/data.hpp"
#include "ssfo/model.hpp"

namespace ssfo {

// beta is the usual DPO inverse-temperature; lambda >= 1 scales the weight on
// the rejected response's log-ratio. lambda = 1 recovers plain DPO.
struct LossConfig {
  double beta = 0.1;
  double lambda = 1.0;
};

void check_loss_config(const LossConfig& cfg);

// The four sequence log-probabilities entering one pair's loss, all
// conditioned on the with-context prompt.
struct PairLogps {
  double policy_chosen = 0.0;
  double policy_rejected = 0.0;
  double ref_chosen = 0.0;
  double ref_rejected = 0.0;
};

// u = beta*(policy_chosen - ref_chosen) - lambda*beta*(policy_rejected - ref_rejected)
double inner_margin(const PairLogps& lp, const LossConfig& cfg);

// -log sigmoid(u), evaluated as softplus(-u); finite for |u| up to ~700
double loss(const PairLogps& lp, const LossConfig& cfg);

// coefficient in front of the gradient:
//   c1 = beta * sigmoid(lambda*beta*log-ratio(rejected) - beta*log-ratio(chosen))
// strictly inside (0, beta) for finite inputs
double gradient_coefficient(const PairLogps& lp, const LossConfig& cfg);

// Sequence log-probabilities for one pair, both responses conditioned on the
// with-context prompt. Responses are scored with the EOS terminator
// appended, so an empty (unfiltered) chosen response still has a
// well-defined likelihood.
PairLogps pair_logps(const ToyLM& model, const ToyLM& ref, const PreferencePair& pair);

// Per-pair loss gradient, decomposed so callers can inspect the two response
// terms:  total = -coeff * chosen_term + coeff * lambda * rejected_term
struct PairGradient {
  ModelGrad total;
  ModelGrad chosen_term;    // grad log pi(chosen | prompt), mask-restricted
  ModelGrad rejected_term;  // grad log pi(rejected | prompt), mask-restricted
  double coeff = 0.0;       // c1
  PairLogps logps;
  double pair_loss = 0.0;
};

// Gradient of loss() for one preference pair, both responses scored against
// the with-context prompt. The reference model only contributes through the
// coefficient. Throws vocab_error if model and ref disagree on vocabulary
// or dimensions.
PairGradient pair_gradient(const ToyLM& model, const ToyLM& ref, const PreferencePair& pair,
                           const LossConfig& cfg, ParamMask mask);

}  // namespace ssfo
