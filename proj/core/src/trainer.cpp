#include "ssfo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ssfo/errors.hpp"
#include "ssfo/rng.hpp"

namespace ssfo {

const char* train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::pretrain_mle: return "pretrain_mle";
    case TrainMode::dpo: return "dpo";
    case TrainMode::ssfo: return "ssfo";
    case TrainMode::ssfo_lambda: return "ssfo_lambda";
  }
  return "?";
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "pretrain_mle") return TrainMode::pretrain_mle;
  if (name == "dpo") return TrainMode::dpo;
  if (name == "ssfo") return TrainMode::ssfo;
  if (name == "ssfo_lambda") return TrainMode::ssfo_lambda;
  throw config_error("unknown training mode: " + name);
}

void check_train_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) {
    throw config_error("train config: learning_rate must be > 0");
  }
  if (cfg.steps < 0) {
    throw config_error("train config: steps must be >= 0");
  }
  if (cfg.batch_size < 0) {
    throw config_error("train config: batch_size must be >= 0");
  }
  check_loss_config(cfg.loss_cfg);
  if (cfg.mode == TrainMode::ssfo_lambda && !(cfg.loss_cfg.lambda > 1.0)) {
    throw config_error("ssfo_lambda requires lambda > 1");
  }
  if ((cfg.mode == TrainMode::dpo || cfg.mode == TrainMode::ssfo) &&
      cfg.loss_cfg.lambda != 1.0) {
    throw config_error("dpo/ssfo require lambda = 1");
  }
}

namespace {

struct MleBatch {
  double nll_per_token = 0.0;
  std::size_t n_tokens = 0;
};

MleBatch mle_pass(const ToyLM& model, const Corpus& corpus, ModelGrad* grad,
                  ParamMask mask) {
  MleBatch out;
  double total_logprob = 0.0;
  const TokenId bos = model.vocab.bos();
  for (const std::vector<TokenId>& seq : corpus.sequences) {
    const std::vector<TokenId> prefix = {bos};
    if (grad != nullptr) {
      total_logprob += accumulate_logprob_grad(model, prefix, seq, mask, *grad);
    } else {
      total_logprob += sequence_logprob(model, prefix, seq);
    }
    out.n_tokens += seq.size();
  }
  out.nll_per_token = -total_logprob / static_cast<double>(out.n_tokens);
  return out;
}

}  // namespace

double corpus_nll(const ToyLM& model, const Corpus& corpus) {
  if (corpus.sequences.empty()) {
    throw config_error("corpus_nll: empty corpus");
  }
  return mle_pass(model, corpus, nullptr, ParamMask::all).nll_per_token;
}

std::pair<ToyLM, PretrainLog> pretrain_mle(ToyLM model, const Corpus& corpus,
                                           const TrainConfig& cfg) {
  check_train_config(cfg);
  if (cfg.mode != TrainMode::pretrain_mle) {
    throw config_error("pretrain_mle: mode must be pretrain_mle");
  }
  if (corpus.sequences.empty()) {
    throw config_error("pretrain_mle: empty corpus");
  }
  if (!(model.vocab == corpus.vocab)) {
    throw vocab_error("pretrain_mle: model and corpus vocabularies differ");
  }
  PretrainLog log;
  log.reserve(static_cast<std::size_t>(cfg.steps));
  for (int step = 0; step < cfg.steps; ++step) {
    ModelGrad grad(model);
    const MleBatch batch = mle_pass(model, corpus, &grad, cfg.trainable_mask);
    if (!std::isfinite(batch.nll_per_token)) {
      throw train_error("pretrain_mle: NLL became non-finite at step " +
                        std::to_string(step));
    }
    log.push_back({step, batch.nll_per_token});
    // mean NLL gradient = -(sum of logprob grads) / n_tokens
    grad.scale(-1.0 / static_cast<double>(batch.n_tokens));
    sgd_step(model, grad, cfg.learning_rate);
    if (!model.finite()) {
      throw train_error("pretrain_mle: parameters became non-finite at step " +
                        std::to_string(step));
    }
  }
  return {std::move(model), std::move(log)};
}

AlignResult align(ToyLM model, const std::vector<PreferencePair>& pairs,
                  const TrainConfig& cfg) {
  check_train_config(cfg);
  if (cfg.mode == TrainMode::pretrain_mle) {
    throw config_error("align: mode must be dpo, ssfo or ssfo_lambda");
  }
  if (pairs.empty()) {
    throw config_error("align: empty pair list");
  }
  if (cfg.steps < 1) {
    throw config_error("align: steps must be >= 1");
  }

  const ToyLM ref = model;  // frozen at step 0
  const std::size_t n = pairs.size();
  const std::size_t batch =
      cfg.batch_size == 0 ? n : std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);

  Rng shuffle_rng = Rng::stream(cfg.seed, "align-shuffle");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;  // forces a reshuffle at the first step of each epoch

  TrajectoryLog log;
  log.reserve(static_cast<std::size_t>(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    if (batch < n) {
      if (cursor + batch > n) {
        // Fisher-Yates, fixed order per epoch
        for (std::size_t i = n - 1; i > 0; --i) {
          const std::size_t j = shuffle_rng.next_below(i + 1);
          std::swap(order[i], order[j]);
        }
        cursor = 0;
      }
    } else {
      cursor = 0;
    }

    ModelGrad grad(model);
    TrajectoryRecord rec;
    rec.step = step;
    for (std::size_t k = 0; k < batch; ++k) {
      const PreferencePair& pair = pairs[order[cursor + k]];
      const PairGradient pg = pair_gradient(model, ref, pair, cfg.loss_cfg,
                                            cfg.trainable_mask);
      grad.add_scaled(pg.total, 1.0);
      rec.loss += pg.pair_loss;
      rec.logp_chosen += pg.logps.policy_chosen;
      rec.logp_rejected += pg.logps.policy_rejected;
      rec.margin += inner_margin(pg.logps, cfg.loss_cfg);
    }
    const double inv = 1.0 / static_cast<double>(batch);
    rec.loss *= inv;
    rec.logp_chosen *= inv;
    rec.logp_rejected *= inv;
    rec.margin *= inv;
    if (!std::isfinite(rec.loss)) {
      throw train_error("align: loss became non-finite at step " + std::to_string(step));
    }
    log.push_back(rec);

    grad.scale(inv);
    sgd_step(model, grad, cfg.learning_rate);
    if (!model.finite()) {
      throw train_error("align: parameters became non-finite at step " +
                        std::to_string(step));
    }
    cursor += batch < n ? batch : 0;
  }
  return {std::move(model), ref, std::move(log)};
}

}  // namespace ssfo
