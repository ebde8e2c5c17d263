#include "ssfo/model.hpp"

#include <algorithm>
#include <cmath>

#include "ssfo/errors.hpp"
#include "ssfo/numeric.hpp"

namespace ssfo {

namespace {

// fixed-order 4-lane dot product; breaks the add-latency chain so the
// unembedding products vectorize, while staying deterministic
double dot4(const double* a, const double* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += a[j] * b[j];
    s1 += a[j + 1] * b[j + 1];
    s2 += a[j + 2] * b[j + 2];
    s3 += a[j + 3] * b[j + 3];
  }
  double tail = 0.0;
  for (; j < n; ++j) {
    tail += a[j] * b[j];
  }
  return ((s0 + s1) + (s2 + s3)) + tail;
}

void check_prefix(const ToyLM& model, std::span<const TokenId> prefix) {
  if (prefix.empty()) {
    throw precondition_error("encode: prefix must be non-empty");
  }
  for (TokenId t : prefix) {
    if (!model.vocab.contains(t)) {
      throw vocab_error("token id out of range: " + std::to_string(t));
    }
  }
}

bool all_finite(std::span<const double> xs) {
  return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

const char* param_mask_name(ParamMask mask) {
  switch (mask) {
    case ParamMask::all: return "all";
    case ParamMask::unembedding_only: return "unembedding_only";
    case ParamMask::body_only: return "body_only";
  }
  return "?";
}

ParamMask param_mask_from_name(const std::string& name) {
  if (name == "all") return ParamMask::all;
  if (name == "unembedding_only") return ParamMask::unembedding_only;
  if (name == "body_only") return ParamMask::body_only;
  throw config_error("unknown trainable mask: " + name);
}

ToyLM::ToyLM(Vocabulary v, int d)
    : vocab(std::move(v)),
      dim(d),
      embed(vocab.size(), d),
      body(d, d),
      body_bias(static_cast<std::size_t>(d), 0.0),
      unembed(vocab.size(), d) {
  if (d < 2) {
    throw config_error("model dim must be >= 2");
  }
}

ToyLM ToyLM::init_random(Vocabulary vocab, int d, double init_std, Rng& rng) {
  ToyLM m(std::move(vocab), d);
  for (double& x : m.embed.data) {
    x = init_std * rng.next_gaussian();
  }
  for (double& x : m.body.data) {
    x = init_std * rng.next_gaussian();
  }
  for (double& x : m.unembed.data) {
    x = init_std * rng.next_gaussian();
  }
  return m;
}

bool ToyLM::finite() const {
  return all_finite(embed.data) && all_finite(body.data) && all_finite(body_bias) &&
         all_finite(unembed.data);
}

bool ToyLM::same_shape(const ToyLM& o) const {
  return vocab == o.vocab && dim == o.dim;
}

void ModelGrad::add_scaled(const ModelGrad& g, double s) {
  for (std::size_t i = 0; i < embed.data.size(); ++i) embed.data[i] += s * g.embed.data[i];
  for (std::size_t i = 0; i < body.data.size(); ++i) body.data[i] += s * g.body.data[i];
  for (std::size_t i = 0; i < body_bias.size(); ++i) body_bias[i] += s * g.body_bias[i];
  for (std::size_t i = 0; i < unembed.data.size(); ++i)
    unembed.data[i] += s * g.unembed.data[i];
}

void ModelGrad::scale(double s) {
  for (double& x : embed.data) x *= s;
  for (double& x : body.data) x *= s;
  for (double& x : body_bias) x *= s;
  for (double& x : unembed.data) x *= s;
}

double ModelGrad::max_abs() const {
  double m = 0.0;
  auto scan = [&m](std::span<const double> xs) {
    for (double x : xs) m = std::max(m, std::abs(x));
  };
  scan(embed.data);
  scan(body.data);
  scan(body_bias);
  scan(unembed.data);
  return m;
}

bool ModelGrad::finite() const {
  return all_finite(embed.data) && all_finite(body.data) && all_finite(body_bias) &&
         all_finite(unembed.data);
}

HiddenState encode(const ToyLM& model, std::span<const TokenId> prefix) {
  check_prefix(model, prefix);
  const int d = model.dim;
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  for (TokenId t : prefix) {
    auto row = model.embed.row(t);
    for (int j = 0; j < d; ++j) {
      mean[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
    }
  }
  const double inv = 1.0 / static_cast<double>(prefix.size());
  for (double& x : mean) {
    x *= inv;
  }
  HiddenState hs;
  hs.prefix_len = prefix.size();
  hs.h.resize(static_cast<std::size_t>(d));
  for (int i = 0; i < d; ++i) {
    double a = model.body_bias[static_cast<std::size_t>(i)];
    auto row = model.body.row(i);
    for (int j = 0; j < d; ++j) {
      a += row[static_cast<std::size_t>(j)] * mean[static_cast<std::size_t>(j)];
    }
    hs.h[static_cast<std::size_t>(i)] = std::tanh(a);
  }
  return hs;
}

std::vector<double> next_token_logits(const ToyLM& model, std::span<const TokenId> prefix) {
  const HiddenState hs = encode(model, prefix);
  const TokenId v = model.vocab_size();
  std::vector<double> logits(static_cast<std::size_t>(v), 0.0);
  for (TokenId z = 0; z < v; ++z) {
    logits[static_cast<std::size_t>(z)] =
        dot4(model.unembed.row(z).data(), hs.h.data(), model.dim);
  }
  return logits;
}

std::vector<double> next_token_logprobs(const ToyLM& model, std::span<const TokenId> prefix) {
  return log_softmax(next_token_logits(model, prefix));
}

double sequence_logprob(const ToyLM& model, std::span<const TokenId> prefix,
                        std::span<const TokenId> response) {
  if (response.empty()) {
    throw precondition_error("sequence_logprob: response must be non-empty");
  }
  std::vector<TokenId> ctx(prefix.begin(), prefix.end());
  double total = 0.0;
  for (TokenId t : response) {
    if (!model.vocab.contains(t)) {
      throw vocab_error("token id out of range: " + std::to_string(t));
    }
    const std::vector<double> lp = next_token_logprobs(model, ctx);
    total += lp[static_cast<std::size_t>(t)];
    ctx.push_back(t);
  }
  return total;
}

namespace {

TokenId argmax_lowest_id(std::span<const double> xs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < xs.size(); ++i) {
    if (xs[i] > xs[best]) {
      best = i;
    }
  }
  return static_cast<TokenId>(best);
}

}  // namespace

std::vector<TokenId> sample(const ToyLM& model, std::span<const TokenId> prefix,
                            double temperature, int max_len, Rng& rng) {
  if (temperature <= 0.0) {
    throw precondition_error("sample: temperature must be > 0");
  }
  if (max_len < 1) {
    throw precondition_error("sample: max_len must be >= 1");
  }
  if (temperature < 1e-6) {
    return greedy_decode(model, prefix, max_len);
  }
  std::vector<TokenId> ctx(prefix.begin(), prefix.end());
  std::vector<TokenId> out;
  for (int i = 0; i < max_len; ++i) {
    std::vector<double> logits = next_token_logits(model, ctx);
    for (double& x : logits) {
      x /= temperature;
    }
    const std::vector<double> probs = softmax(logits);
    const TokenId t = static_cast<TokenId>(rng.sample_categorical(probs));
    if (t == model.vocab.eos()) {
      break;
    }
    out.push_back(t);
    ctx.push_back(t);
  }
  return out;
}

std::vector<TokenId> greedy_decode(const ToyLM& model, std::span<const TokenId> prefix,
                                   int max_len) {
  if (max_len < 1) {
    throw precondition_error("greedy_decode: max_len must be >= 1");
  }
  std::vector<TokenId> ctx(prefix.begin(), prefix.end());
  std::vector<TokenId> out;
  for (int i = 0; i < max_len; ++i) {
    const std::vector<double> logits = next_token_logits(model, ctx);
    const TokenId t = argmax_lowest_id(logits);
    if (t == model.vocab.eos()) {
      break;
    }
    out.push_back(t);
    ctx.push_back(t);
  }
  return out;
}

double accumulate_logprob_grad(const ToyLM& model, std::span<const TokenId> prefix,
                               std::span<const TokenId> response, ParamMask mask,
                               ModelGrad& grad) {
  if (response.empty()) {
    throw precondition_error("accumulate_logprob_grad: response must be non-empty");
  }
  const int d = model.dim;
  const TokenId v = model.vocab_size();
  const bool train_unembed = mask == ParamMask::all || mask == ParamMask::unembedding_only;
  const bool train_body = mask == ParamMask::all || mask == ParamMask::body_only;
  const bool train_embed = mask == ParamMask::all;

  std::vector<TokenId> ctx(prefix.begin(), prefix.end());
  // running sum of embeddings over ctx; mean = sum / |ctx|
  std::vector<double> embed_sum(static_cast<std::size_t>(d), 0.0);
  for (TokenId t : ctx) {
    if (!model.vocab.contains(t)) {
      throw vocab_error("token id out of range: " + std::to_string(t));
    }
    auto row = model.embed.row(t);
    for (int j = 0; j < d; ++j) {
      embed_sum[static_cast<std::size_t>(j)] += row[static_cast<std::size_t>(j)];
    }
  }

  double total_logprob = 0.0;
  std::vector<double> mean(static_cast<std::size_t>(d));
  std::vector<double> h(static_cast<std::size_t>(d));
  std::vector<double> g_h(static_cast<std::size_t>(d));
  std::vector<double> g_a(static_cast<std::size_t>(d));
  std::vector<double> g_mean(static_cast<std::size_t>(d));

  for (TokenId target : response) {
    if (!model.vocab.contains(target)) {
      throw vocab_error("token id out of range: " + std::to_string(target));
    }
    const std::size_t n = ctx.size();
    const double inv_n = 1.0 / static_cast<double>(n);
    for (int j = 0; j < d; ++j) {
      mean[static_cast<std::size_t>(j)] = embed_sum[static_cast<std::size_t>(j)] * inv_n;
    }
    for (int i = 0; i < d; ++i) {
      double a = model.body_bias[static_cast<std::size_t>(i)];
      auto row = model.body.row(i);
      for (int j = 0; j < d; ++j) {
        a += row[static_cast<std::size_t>(j)] * mean[static_cast<std::size_t>(j)];
      }
      h[static_cast<std::size_t>(i)] = std::tanh(a);
    }
    std::vector<double> logits(static_cast<std::size_t>(v), 0.0);
    for (TokenId z = 0; z < v; ++z) {
      logits[static_cast<std::size_t>(z)] = dot4(model.unembed.row(z).data(), h.data(), d);
    }
    // fused softmax: one exp per token, shared by the log-prob and the grad
    const double max_logit = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(static_cast<std::size_t>(v));
    double prob_total = 0.0;
    for (TokenId z = 0; z < v; ++z) {
      probs[static_cast<std::size_t>(z)] =
          std::exp(logits[static_cast<std::size_t>(z)] - max_logit);
      prob_total += probs[static_cast<std::size_t>(z)];
    }
    const double inv_total = 1.0 / prob_total;
    for (double& p : probs) {
      p *= inv_total;
    }
    total_logprob +=
        logits[static_cast<std::size_t>(target)] - max_logit - std::log(prob_total);

    // d log p(target) / d logits_z = [z == target] - p_z

    // g_h = W_target - sum_z p_z W_z
    for (int j = 0; j < d; ++j) {
      g_h[static_cast<std::size_t>(j)] =
          model.unembed.at(target, j);
    }
    for (TokenId z = 0; z < v; ++z) {
      const double p = probs[static_cast<std::size_t>(z)];
      auto row = model.unembed.row(z);
      for (int j = 0; j < d; ++j) {
        g_h[static_cast<std::size_t>(j)] -= p * row[static_cast<std::size_t>(j)];
      }
    }

    if (train_unembed) {
      // dlogp/dW_z = ([z == target] - p_z) * h
      for (TokenId z = 0; z < v; ++z) {
        const double coef =
            (z == target ? 1.0 : 0.0) - probs[static_cast<std::size_t>(z)];
        auto grow = grad.unembed.row(z);
        for (int j = 0; j < d; ++j) {
          grow[static_cast<std::size_t>(j)] += coef * h[static_cast<std::size_t>(j)];
        }
      }
    }

    if (train_body || train_embed) {
      // back through tanh: g_a = g_h * (1 - h^2)
      for (int j = 0; j < d; ++j) {
        const double hj = h[static_cast<std::size_t>(j)];
        g_a[static_cast<std::size_t>(j)] = g_h[static_cast<std::size_t>(j)] * (1.0 - hj * hj);
      }
      if (train_body) {
        for (int i = 0; i < d; ++i) {
          const double gi = g_a[static_cast<std::size_t>(i)];
          auto grow = grad.body.row(i);
          for (int j = 0; j < d; ++j) {
            grow[static_cast<std::size_t>(j)] += gi * mean[static_cast<std::size_t>(j)];
          }
          grad.body_bias[static_cast<std::size_t>(i)] += gi;
        }
      }
      if (train_embed) {
        // g_mean = body^T g_a; each ctx token receives g_mean / n
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int i = 0; i < d; ++i) {
            acc += model.body.at(i, j) * g_a[static_cast<std::size_t>(i)];
          }
          g_mean[static_cast<std::size_t>(j)] = acc * inv_n;
        }
        for (TokenId t : ctx) {
          auto grow = grad.embed.row(t);
          for (int j = 0; j < d; ++j) {
            grow[static_cast<std::size_t>(j)] += g_mean[static_cast<std::size_t>(j)];
          }
        }
      }
    }

    auto erow = model.embed.row(target);
    for (int j = 0; j < d; ++j) {
      embed_sum[static_cast<std::size_t>(j)] += erow[static_cast<std::size_t>(j)];
    }
    ctx.push_back(target);
  }
  return total_logprob;
}

void sgd_step(ToyLM& model, const ModelGrad& grad, double learning_rate) {
  for (std::size_t i = 0; i < model.embed.data.size(); ++i) {
    model.embed.data[i] -= learning_rate * grad.embed.data[i];
  }
  for (std::size_t i = 0; i < model.body.data.size(); ++i) {
    model.body.data[i] -= learning_rate * grad.body.data[i];
  }
  for (std::size_t i = 0; i < model.body_bias.size(); ++i) {
    model.body_bias[i] -= learning_rate * grad.body_bias[i];
  }
  for (std::size_t i = 0; i < model.unembed.data.size(); ++i) {
    model.unembed.data[i] -= learning_rate * grad.unembed.data[i];
  }
}

}  // namespace ssfo
