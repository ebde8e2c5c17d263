#include "ssfo/data.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <string>

#include "ssfo/errors.hpp"
#include "ssfo/rng.hpp"

namespace ssfo {

void check_probe(const TrapProbe& probe, const Vocabulary& vocab) {
  if (probe.z_c == probe.z_p) {
    throw precondition_error("trap probe: z_c and z_p must differ");
  }
  if (!vocab.contains(probe.z_c) || !vocab.contains(probe.z_p)) {
    throw vocab_error("trap probe: ending token out of range");
  }
  if (vocab.is_special(probe.z_c) || vocab.is_special(probe.z_p)) {
    throw precondition_error("trap probe: endings must be non-special tokens");
  }
  if (probe.prompt.empty()) {
    throw precondition_error("trap probe: empty prompt");
  }
}

namespace {

void check_payload(const Vocabulary& vocab, std::span<const TokenId> payload,
                   const char* what) {
  if (payload.empty()) {
    throw precondition_error(std::string(what) + " must be non-empty");
  }
  for (TokenId t : payload) {
    if (!vocab.contains(t)) {
      throw vocab_error(std::string(what) + ": token id out of range");
    }
    if (vocab.is_special(t)) {
      throw precondition_error(std::string(what) + ": special token in payload");
    }
  }
}

}  // namespace

std::vector<TokenId> prompt_with_context(const Vocabulary& vocab,
                                         std::span<const TokenId> context,
                                         std::span<const TokenId> query) {
  check_payload(vocab, context, "context");
  check_payload(vocab, query, "query");
  std::vector<TokenId> out;
  out.reserve(context.size() + query.size() + 3);
  out.push_back(vocab.bos());
  out.insert(out.end(), context.begin(), context.end());
  out.push_back(vocab.sep());
  out.insert(out.end(), query.begin(), query.end());
  out.push_back(vocab.sep());
  return out;
}

std::vector<TokenId> prompt_query_only(const Vocabulary& vocab,
                                       std::span<const TokenId> query) {
  check_payload(vocab, query, "query");
  std::vector<TokenId> out;
  out.reserve(query.size() + 2);
  out.push_back(vocab.bos());
  out.insert(out.end(), query.begin(), query.end());
  out.push_back(vocab.sep());
  return out;
}

std::vector<TokenId> build_prompt_with_context(const Vocabulary& vocab, const Task& task) {
  return prompt_with_context(vocab, task.context, task.query);
}

std::vector<TokenId> build_prompt_query_only(const Vocabulary& vocab, const Task& task) {
  return prompt_query_only(vocab, task.query);
}

std::pair<std::vector<TokenId>, std::vector<TokenId>> parse_prompt_with_context(
    const Vocabulary& vocab, std::span<const TokenId> prompt) {
  if (prompt.size() < 5 || prompt.front() != vocab.bos() || prompt.back() != vocab.sep()) {
    throw data_error("malformed with-context prompt");
  }
  std::vector<std::size_t> seps;
  for (std::size_t i = 1; i < prompt.size(); ++i) {
    if (prompt[i] == vocab.sep()) {
      seps.push_back(i);
    }
  }
  if (seps.size() != 2) {
    throw data_error("with-context prompt must contain exactly 2 separators");
  }
  std::vector<TokenId> context(prompt.begin() + 1, prompt.begin() + seps[0]);
  std::vector<TokenId> query(prompt.begin() + seps[0] + 1, prompt.begin() + seps[1]);
  check_payload(vocab, context, "context");
  check_payload(vocab, query, "query");
  return {std::move(context), std::move(query)};
}

std::vector<TokenId> parse_prompt_query_only(const Vocabulary& vocab,
                                             std::span<const TokenId> prompt) {
  if (prompt.size() < 3 || prompt.front() != vocab.bos() || prompt.back() != vocab.sep()) {
    throw data_error("malformed query-only prompt");
  }
  std::vector<TokenId> query(prompt.begin() + 1, prompt.end() - 1);
  check_payload(vocab, query, "query");
  return query;
}

PairGenResult generate_pairs(const ToyLM& model, const std::vector<Task>& tasks,
                             double temperature, int max_len, std::uint64_t seed) {
  if (temperature <= 0.0) {
    throw precondition_error("generate_pairs: temperature must be > 0");
  }
  const std::uint64_t base = stream_seed(seed, "gen-pairs");
  PairGenResult result;
  result.stats.n_tasks = tasks.size();
  const std::vector<TokenId> refusal = {model.vocab.idk()};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& task = tasks[i];
    const std::uint64_t chosen_seed = stream_seed(base, "chosen:" + std::to_string(i));
    const std::uint64_t rejected_seed = stream_seed(base, "rejected:" + std::to_string(i));
    Rng chosen_rng(chosen_seed);
    Rng rejected_rng(rejected_seed);
    PreferencePair pair;
    pair.query = task.query;
    pair.context = task.context;
    pair.chosen = sample(model, build_prompt_with_context(model.vocab, task), temperature,
                         max_len, chosen_rng);
    pair.rejected = sample(model, build_prompt_query_only(model.vocab, task), temperature,
                           max_len, rejected_rng);
    pair.chosen_seed = chosen_seed;
    pair.rejected_seed = rejected_seed;
    if (pair.rejected.empty()) {
      ++result.stats.n_dropped_empty;
      continue;
    }
    if (pair.rejected == refusal) {
      ++result.stats.n_dropped_refusal;
      continue;
    }
    result.pairs.push_back(std::move(pair));
  }
  result.stats.n_retained = result.pairs.size();
  if (result.pairs.empty()) {
    throw data_error("generate_pairs: no pair survived filtering (" +
                     std::to_string(result.stats.n_dropped_empty) + " empty, " +
                     std::to_string(result.stats.n_dropped_refusal) +
                     " refusals out of " + std::to_string(tasks.size()) + " tasks)");
  }
  return result;
}

namespace {

std::string two_digits(int i) {
  return (i < 10 ? "0" : "") + std::to_string(i);
}

}  // namespace

TrapSuite build_trap_suite(const SuiteConfig& cfg) {
  if (cfg.n_proverbs < 10) {
    throw config_error("trap suite: n_proverbs must be >= 10");
  }
  if (cfg.prefix_len < 2) {
    throw config_error("trap suite: prefix_len must be >= 2");
  }
  if (cfg.tasks_per_proverb < 1 || cfg.n_alternatives < 2) {
    throw config_error("trap suite: bad replication config");
  }

  // id layout: 4 specials, instruction marker, alternative endings,
  // canonical endings, then the prefix pool
  const int n_reserved = 5 + cfg.n_alternatives + cfg.n_proverbs;
  const int pool = cfg.vocab_size - n_reserved;
  if (pool < cfg.prefix_len + 1) {
    throw config_error("trap suite: vocabulary too small for " +
                       std::to_string(cfg.n_proverbs) + " proverbs (need > " +
                       std::to_string(n_reserved + cfg.prefix_len) + " tokens)");
  }
  // distinct prefix multisets available: C(pool + prefix_len - 1, prefix_len)
  const long long triples_needed =
      cfg.n_proverbs + static_cast<long long>(cfg.n_alternatives) * cfg.patterns_per_alternative;
  long long triples_avail = 1;
  for (int i = 0; i < cfg.prefix_len && triples_avail < 4 * triples_needed; ++i) {
    triples_avail = triples_avail * (pool + cfg.prefix_len - 1 - i) / (i + 1);
  }
  if (triples_avail < triples_needed) {
    throw config_error("trap suite: vocabulary too small for " +
                       std::to_string(triples_needed) + " distinct prefixes");
  }

  std::vector<std::string> tokens = {"<bos>", "<eos>", "<sep>", "<idk>", "endwith"};
  const TokenId instr = 4;
  const TokenId alt0 = 5;
  for (int i = 0; i < cfg.n_alternatives; ++i) {
    tokens.push_back("a" + two_digits(i));
  }
  const TokenId end0 = alt0 + cfg.n_alternatives;
  for (int i = 0; i < cfg.n_proverbs; ++i) {
    tokens.push_back("e" + two_digits(i));
  }
  const TokenId pool0 = end0 + cfg.n_proverbs;
  for (int i = 0; i < pool; ++i) {
    tokens.push_back("w" + two_digits(i));
  }
  Vocabulary vocab(std::move(tokens), 0, 1, 2, 3);

  Rng rng = Rng::stream(cfg.seed, "trap-suite");
  std::set<std::vector<TokenId>> used_triples;
  auto draw_prefix = [&]() {
    for (int attempt = 0; attempt < 10000; ++attempt) {
      std::vector<TokenId> t(static_cast<std::size_t>(cfg.prefix_len));
      for (TokenId& x : t) {
        x = pool0 + static_cast<TokenId>(rng.next_below(static_cast<std::uint64_t>(pool)));
      }
      std::vector<TokenId> key = t;
      std::sort(key.begin(), key.end());
      if (used_triples.insert(key).second) {
        return t;
      }
    }
    throw config_error("trap suite: prefix pool exhausted; increase vocab_size");
  };

  TrapSuite suite{Corpus{{}, vocab}, {}, {}, cfg.model_dim};

  struct Proverb {
    std::vector<TokenId> prefix;
    TokenId ending;
    TokenId alt;
  };
  std::vector<Proverb> proverbs;
  proverbs.reserve(static_cast<std::size_t>(cfg.n_proverbs));
  for (int i = 0; i < cfg.n_proverbs; ++i) {
    Proverb p;
    p.prefix = draw_prefix();
    p.ending = end0 + static_cast<TokenId>(i);
    p.alt = alt0 + static_cast<TokenId>(
                       rng.next_below(static_cast<std::uint64_t>(cfg.n_alternatives)));
    proverbs.push_back(std::move(p));
  }

  // proverbs in their recall form, their consistent-context form (the prompt
  // template naming the true ending), then the instruction patterns
  for (int copy = 0; copy < cfg.proverb_copies; ++copy) {
    for (const Proverb& p : proverbs) {
      std::vector<TokenId> seq = p.prefix;
      seq.push_back(vocab.sep());
      seq.push_back(p.ending);
      seq.push_back(vocab.eos());
      suite.corpus.sequences.push_back(std::move(seq));
    }
  }
  for (int copy = 0; copy < cfg.consistent_copies; ++copy) {
    for (const Proverb& p : proverbs) {
      std::vector<TokenId> seq = {instr, p.ending, vocab.sep()};
      seq.insert(seq.end(), p.prefix.begin(), p.prefix.end());
      seq.push_back(vocab.sep());
      seq.push_back(p.ending);
      seq.push_back(vocab.eos());
      suite.corpus.sequences.push_back(std::move(seq));
    }
  }
  for (int k = 0; k < cfg.n_alternatives; ++k) {
    for (int j = 0; j < cfg.patterns_per_alternative; ++j) {
      const TokenId target = alt0 + static_cast<TokenId>(k);
      const std::vector<TokenId> filler = draw_prefix();
      std::vector<TokenId> seq = {instr, target, vocab.sep()};
      seq.insert(seq.end(), filler.begin(), filler.end());
      seq.push_back(vocab.sep());
      seq.push_back(target);
      seq.push_back(vocab.eos());
      suite.corpus.sequences.push_back(std::move(seq));
    }
  }

  for (const Proverb& p : proverbs) {
    Task task;
    task.query = p.prefix;
    task.context = {instr, p.alt};
    task.gold_context_answer = {p.alt};

    TrapProbe probe;
    probe.prompt = build_prompt_with_context(vocab, task);
    probe.z_c = p.alt;
    probe.z_p = p.ending;
    check_probe(probe, vocab);
    suite.probes.push_back(std::move(probe));

    for (int r = 0; r < cfg.tasks_per_proverb; ++r) {
      suite.tasks.push_back(task);
    }
  }
  return suite;
}

TrapSuite build_trap_suite(std::uint64_t seed, int n_proverbs, int vocab_size, int d) {
  SuiteConfig cfg;
  cfg.seed = seed;
  cfg.n_proverbs = n_proverbs;
  cfg.vocab_size = vocab_size;
  cfg.model_dim = d;
  return build_trap_suite(cfg);
}

}  // namespace ssfo
