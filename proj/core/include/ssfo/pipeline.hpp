#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssfo/data.hpp"
#include "ssfo/io.hpp"

namespace ssfo {
namespace pipeline {

// Canned experiment stages. Each stage consumes the previous stage's files,
// writes its outputs plus a run manifest (manifest.json) into `out`, and is
// bit-reproducible from its seed. Paths are stored in manifests exactly as
// given, so invoking with relative paths keeps reruns byte-comparable.

struct SuiteArgs {
  std::uint64_t seed = 17;
  std::filesystem::path out;
  int n_proverbs = 40;
  int vocab_size = 80;
  int model_dim = 32;
  int tasks_per_proverb = 5;
};
// writes vocab.json, corpus.jsonl, probes.jsonl, tasks.jsonl
void run_suite(const SuiteArgs& args);

struct PretrainArgs {
  std::uint64_t seed = 17;
  std::filesystem::path suite_dir;  // needs vocab.json + corpus.jsonl
  std::filesystem::path out;
  int steps = 2000;
  double learning_rate = 3.0;
  double init_std = 0.08;
  int model_dim = 0;  // 0 = use the suite's recommendation
};
// writes model.json/model.bin and pretrain.csv
void run_pretrain(const PretrainArgs& args);

struct GenPairsArgs {
  std::uint64_t seed = 17;
  std::filesystem::path model;  // checkpoint stem (without .json/.bin)
  std::filesystem::path tasks;
  std::filesystem::path out;
  double temperature = 0.7;
  int max_len = 8;
};
// writes pairs.jsonl; retained/dropped counts go into the manifest config
void run_gen_pairs(const GenPairsArgs& args);

struct AlignArgs {
  std::uint64_t seed = 17;
  std::filesystem::path model;  // checkpoint stem
  std::filesystem::path pairs;
  std::filesystem::path out;
  std::string mode = "ssfo";  // dpo | ssfo | ssfo_lambda
  double learning_rate = 1e-2;
  int steps = 300;
  int batch_size = 0;
  double beta = 0.1;
  double lambda = 1.0;
  std::string mask = "all";
};
// writes model.json/model.bin (aligned) and trajectory.csv
void run_align(const AlignArgs& args);

struct ProbeArgs {
  std::filesystem::path before;  // checkpoint stem
  std::filesystem::path after;   // checkpoint stem
  std::filesystem::path probes;
  std::filesystem::path out;
  double beta = 0.1;
  double lambda = 1.0;
  double eta = 1e-3;
};
// writes displacement.json and displacement.csv
void run_probe(const ProbeArgs& args);

struct EvalArgs {
  // either model+tasks (greedy decoding, deterministic) or a records file
  std::filesystem::path model;
  std::filesystem::path tasks;
  std::filesystem::path records;
  std::filesystem::path out;
  int max_len = 8;
};
// writes summary.json (and records.jsonl when decoding from tasks)
void run_eval(const EvalArgs& args);

struct SweepArgs {
  std::uint64_t seed = 17;
  std::filesystem::path model;  // pretrained checkpoint stem
  std::filesystem::path pairs;
  std::filesystem::path tasks;
  std::filesystem::path probes;
  std::filesystem::path out;
  std::vector<double> lambdas = {1.0, 1.1, 1.2, 1.3, 1.4, 1.5};
  double learning_rate = 1e-2;
  int steps = 300;
  int batch_size = 0;
  double beta = 0.1;
  double eta = 1e-3;
  int max_len = 8;
};
struct SweepRow {
  double lambda = 0.0;
  double span_em = 0.0;
  double mean_dp_zc = 0.0;
  double mean_dp_zp = 0.0;
  std::optional<double> pearson_r;
};
// one aligned run per lambda from the same checkpoint and pair file; writes
// sweep.csv, sweep.json and per-lambda subdirectories
std::vector<SweepRow> run_sweep_lambda(const SweepArgs& args);

// Greedy span EM of a model on tasks against their gold answers.
double greedy_span_em(const ToyLM& model, const std::vector<Task>& tasks, int max_len);

// Space-joined token strings; how predictions and references are rendered
// for the text metrics.
std::string render_tokens(const Vocabulary& vocab, std::span<const TokenId> tokens);

}  // namespace pipeline
}  // namespace ssfo
