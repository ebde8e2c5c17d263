#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ssfo/data.hpp"
#include "ssfo/displacement.hpp"
#include "ssfo/metrics.hpp"
#include "ssfo/model.hpp"
#include "ssfo/trainer.hpp"

namespace ssfo {
namespace io {

// Writes bytes to a temp file in the target directory, then renames.
void write_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

// FNV-1a 64 digest of a file's bytes, as 16 hex chars.
std::string file_digest(const std::filesystem::path& path);

// ---- checkpoints -----------------------------------------------------------
//
// <stem>.json holds the manifest (vocabulary, dims, matrix order, byte
// offsets, endianness tag); <stem>.bin is a flat little-endian float64 stream
// of embed, body, body_bias, unembed in that order, row-major. The round trip
// is bit-exact.

void save_checkpoint(const ToyLM& model, const std::filesystem::path& stem);
ToyLM load_checkpoint(const std::filesystem::path& stem);

// ---- jsonl ------------------------------------------------------------------
//
// pairs lines: {"chosen":[int],"chosen_seed":int,"context":[int],
//               "query":[int],"rejected":[int],"rejected_seed":int}
// Schema violations are hard errors naming the offending line.

void write_pairs_jsonl(const std::filesystem::path& path,
                       const std::vector<PreferencePair>& pairs);
std::vector<PreferencePair> read_pairs_jsonl(const std::filesystem::path& path);

void write_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus);
std::vector<std::vector<TokenId>> read_corpus_sequences(const std::filesystem::path& path);

void write_probes_jsonl(const std::filesystem::path& path,
                        const std::vector<TrapProbe>& probes);
std::vector<TrapProbe> read_probes_jsonl(const std::filesystem::path& path);

void write_tasks_jsonl(const std::filesystem::path& path, const std::vector<Task>& tasks);
std::vector<Task> read_tasks_jsonl(const std::filesystem::path& path);

void write_vocab_json(const std::filesystem::path& path, const Vocabulary& vocab,
                      int model_dim);
std::pair<Vocabulary, int> read_vocab_json(const std::filesystem::path& path);

std::vector<metrics::EvalRecord> read_eval_records_jsonl(const std::filesystem::path& path);
void write_eval_records_jsonl(const std::filesystem::path& path,
                              const std::vector<metrics::EvalRecord>& records);
void write_eval_summary_json(const std::filesystem::path& path,
                             const metrics::EvalSummary& summary);

// ---- trajectories and reports ----------------------------------------------

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryLog& log);
TrajectoryLog read_trajectory_csv(const std::filesystem::path& path);

void write_pretrain_csv(const std::filesystem::path& path, const PretrainLog& log);

void write_displacement_json(const std::filesystem::path& path,
                             const DisplacementReport& report);
// per-probe (dp_zc, dp_zp) scatter for external plotting
void write_displacement_csv(const std::filesystem::path& path,
                            const DisplacementReport& report);

// ---- run manifests -----------------------------------------------------------

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;  // fully resolved, defaults included
  std::uint64_t seed = 0;
  std::string version;
  std::map<std::string, std::string> input_digests;   // path (relative) -> digest
  std::map<std::string, std::string> output_digests;
  double duration_seconds = 0.0;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);
RunManifest read_manifest(const std::filesystem::path& path);

// Recomputes output digests against the manifest's directory; throws
// data_error on mismatch.
void verify_manifest(const std::filesystem::path& path);

}  // namespace io
}  // namespace ssfo
