#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ssfo/data.hpp"
#include "ssfo/model.hpp"
#include "ssfo/objective.hpp"

namespace ssfo {

enum class TrainMode { pretrain_mle, dpo, ssfo, ssfo_lambda };

const char* train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

// Plain full-batch gradient descent on purpose: the displacement analysis is
// stated under gradient flow and adaptive optimizers would distort its
// inner-product prediction. batch_size = 0 means full batch; otherwise
// fixed-order mini-batches over a per-epoch permutation derived from the seed.
struct TrainConfig {
  double learning_rate = 1e-2;
  int steps = 1;
  int batch_size = 0;
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::ssfo;
  LossConfig loss_cfg{};
  ParamMask trainable_mask = ParamMask::all;
};

void check_train_config(const TrainConfig& cfg);

struct PretrainRecord {
  int step = 0;
  double nll = 0.0;  // nats per token over the corpus, before this step's update
};
using PretrainLog = std::vector<PretrainRecord>;

// Values at the parameters *before* the step's update, averaged over the
// batch; step 0 is therefore the frozen-reference point where loss = ln 2.
struct TrajectoryRecord {
  int step = 0;
  double loss = 0.0;
  double logp_chosen = 0.0;
  double logp_rejected = 0.0;
  double margin = 0.0;  // mean inner margin (beta-weighted)
};
using TrajectoryLog = std::vector<TrajectoryRecord>;

// Full-batch MLE on the corpus, each sequence conditioned on BOS plus its own
// prefix. Returns the trained model and the per-step NLL trace. Throws
// train_error naming the step if the NLL turns non-finite.
std::pair<ToyLM, PretrainLog> pretrain_mle(ToyLM model, const Corpus& corpus,
                                           const TrainConfig& cfg);

// Corpus NLL in nats per token at fixed parameters.
double corpus_nll(const ToyLM& model, const Corpus& corpus);

struct AlignResult {
  ToyLM model;
  ToyLM ref;  // frozen snapshot of the input model
  TrajectoryLog log;
};

// Preference optimization (dpo / ssfo / ssfo_lambda). The reference model is
// snapshotted at step 0 and never touched afterwards. Per-pair gradients are
// accumulated in pair-index order and averaged.
AlignResult align(ToyLM model, const std::vector<PreferencePair>& pairs,
                  const TrainConfig& cfg);

}  // namespace ssfo
