#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ssfo/model.hpp"
#include "ssfo/vocab.hpp"

namespace ssfo {

// A query with its retrieved context. The gold answer is for evaluation only
// and is never copied into training data.
struct Task {
  std::vector<TokenId> query;
  std::vector<TokenId> context;
  std::vector<TokenId> gold_context_answer;
};

// One training unit: chosen was sampled with the context in the prompt,
// rejected from the query alone. Seeds make each response reproducible.
struct PreferencePair {
  std::vector<TokenId> query;
  std::vector<TokenId> context;
  std::vector<TokenId> chosen;
  std::vector<TokenId> rejected;
  std::uint64_t chosen_seed = 0;
  std::uint64_t rejected_seed = 0;
};

// Single-token faithfulness trap: the prompt's context names ending z_c while
// the pretrained model has memorized ending z_p.
struct TrapProbe {
  std::vector<TokenId> prompt;
  TokenId z_c = 0;
  TokenId z_p = 0;
};

void check_probe(const TrapProbe& probe, const Vocabulary& vocab);

struct Corpus {
  std::vector<std::vector<TokenId>> sequences;
  Vocabulary vocab;
};

// ---- prompt layouts ----------------------------------------------------
//
// with context:  BOS context... SEP query... SEP
// query only:    BOS query... SEP
//
// Payloads carry no special tokens, so parsing by SEP is unambiguous.

std::vector<TokenId> prompt_with_context(const Vocabulary& vocab,
                                         std::span<const TokenId> context,
                                         std::span<const TokenId> query);
std::vector<TokenId> prompt_query_only(const Vocabulary& vocab,
                                       std::span<const TokenId> query);

std::vector<TokenId> build_prompt_with_context(const Vocabulary& vocab, const Task& task);
std::vector<TokenId> build_prompt_query_only(const Vocabulary& vocab, const Task& task);

// Inverses of the builders; throw data_error on malformed prompts.
std::pair<std::vector<TokenId>, std::vector<TokenId>> parse_prompt_with_context(
    const Vocabulary& vocab, std::span<const TokenId> prompt);
std::vector<TokenId> parse_prompt_query_only(const Vocabulary& vocab,
                                             std::span<const TokenId> prompt);

// ---- pair generation ----------------------------------------------------

struct PairGenStats {
  std::size_t n_tasks = 0;
  std::size_t n_retained = 0;
  std::size_t n_dropped_empty = 0;
  std::size_t n_dropped_refusal = 0;
};

struct PairGenResult {
  std::vector<PreferencePair> pairs;
  PairGenStats stats;
};

// Samples chosen from the with-context prompt and rejected from the
// query-only prompt, one pair per task in task order. Pairs whose rejected
// response is empty or exactly the refusal token are dropped; chosen
// responses are never filtered. Throws data_error when nothing survives.
PairGenResult generate_pairs(const ToyLM& model, const std::vector<Task>& tasks,
                             double temperature, int max_len, std::uint64_t seed);

// ---- synthetic trap suite -------------------------------------------------
//
// The corpus plants two behaviors:
//   * proverbs in recall form [w1 w2 w3 SEP z_p EOS] -- parametric knowledge
//     elicited by the query-only prompt layout, the knowledge to be trapped;
//   * instruction patterns [INSTR a SEP f1 f2 f3 SEP a EOS] -- the ability to
//     end with the token named after the instruction marker, which the
//     preference pipeline assumes the base model has.
//
// Each proverb yields one probe (canonical alternative ending z_c != z_p)
// and tasks_per_proverb identical tasks whose context names that z_c. The
// proverb_copies / patterns_per_alternative ratio balances memorization
// against context-following so that the trap is genuinely contested.

struct SuiteConfig {
  std::uint64_t seed = 17;
  int n_proverbs = 40;
  int vocab_size = 80;
  int model_dim = 32;
  int tasks_per_proverb = 5;
  int prefix_len = 3;
  int n_alternatives = 8;
  int patterns_per_alternative = 8;
  int proverb_copies = 2;
  int consistent_copies = 3;
};

struct TrapSuite {
  Corpus corpus;
  std::vector<TrapProbe> probes;
  std::vector<Task> tasks;
  int model_dim = 0;  // recommended dimension for models trained on this suite
};

TrapSuite build_trap_suite(const SuiteConfig& cfg);
TrapSuite build_trap_suite(std::uint64_t seed, int n_proverbs, int vocab_size, int d);

}  // namespace ssfo
