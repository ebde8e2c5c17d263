#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssfo/rng.hpp"
#include "ssfo/vocab.hpp"

namespace ssfo {

// Row-major dense matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols,
                                         static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Tiny autoregressive softmax language model:
//
//   h      = tanh(body * mean(embed[t] for t in prefix) + body_bias)
//   logits = unembed * h
//
// Mean pooling keeps the hidden state independent of the unembedding, so
// "unembedding trainable" and "body trainable" regimes separate cleanly.
// All arithmetic is float64 and every normalization goes through
// log-sum-exp; downstream analyses subtract nearby log-probabilities and
// need the headroom.
struct ToyLM {
  Vocabulary vocab;
  int dim;            // d
  Matrix embed;       // V x d
  Matrix body;        // d x d
  std::vector<double> body_bias;  // d
  Matrix unembed;     // V x d; row z is the unembedding vector of token z

  ToyLM(Vocabulary v, int d);

  // Gaussian init for embed/body/unembed (std `init_std`), zero bias.
  // Draw order: embed rows, body rows, unembed rows.
  static ToyLM init_random(Vocabulary vocab, int d, double init_std, Rng& rng);

  TokenId vocab_size() const { return vocab.size(); }
  bool finite() const;
  bool same_shape(const ToyLM& o) const;
};

struct HiddenState {
  std::vector<double> h;
  std::size_t prefix_len = 0;
};

// Which parameter block the optimizer may touch. `body_only` covers the body
// matrix and bias; embeddings train only under `all`.
enum class ParamMask { all, unembedding_only, body_only };

const char* param_mask_name(ParamMask mask);
ParamMask param_mask_from_name(const std::string& name);

// Gradient with the same shape as a ToyLM's parameters.
struct ModelGrad {
  Matrix embed, body, unembed;
  std::vector<double> body_bias;

  explicit ModelGrad(const ToyLM& m)
      : embed(m.embed.rows, m.embed.cols),
        body(m.body.rows, m.body.cols),
        unembed(m.unembed.rows, m.unembed.cols),
        body_bias(m.body_bias.size(), 0.0) {}

  void add_scaled(const ModelGrad& g, double s);
  void scale(double s);
  double max_abs() const;
  bool finite() const;
};

// ---- operations ------------------------------------------------------------

HiddenState encode(const ToyLM& model, std::span<const TokenId> prefix);

std::vector<double> next_token_logits(const ToyLM& model, std::span<const TokenId> prefix);
std::vector<double> next_token_logprobs(const ToyLM& model, std::span<const TokenId> prefix);

// log pi(response | prefix), summed over response positions (no length
// normalization: joint sequence probabilities are what the objectives use).
double sequence_logprob(const ToyLM& model, std::span<const TokenId> prefix,
                        std::span<const TokenId> response);

// Autoregressive sampling from softmax(logits / temperature); stops at EOS
// (not included in the result) or after max_len tokens. Temperatures below
// 1e-6 take the greedy path: argmax with ties broken by lowest token id.
std::vector<TokenId> sample(const ToyLM& model, std::span<const TokenId> prefix,
                            double temperature, int max_len, Rng& rng);

// Greedy decoding (the temperature -> 0 limit of sample()).
std::vector<TokenId> greedy_decode(const ToyLM& model, std::span<const TokenId> prefix,
                                   int max_len);

// Accumulates d log pi(response | prefix) / d theta into `grad`, restricted
// to `mask`; returns log pi(response | prefix).
double accumulate_logprob_grad(const ToyLM& model, std::span<const TokenId> prefix,
                               std::span<const TokenId> response, ParamMask mask,
                               ModelGrad& grad);

// theta <- theta - lr * grad
void sgd_step(ToyLM& model, const ModelGrad& grad, double learning_rate);

}  // namespace ssfo
