#include "ssfo/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ssfo/errors.hpp"
#include "ssfo/rng.hpp"
#include "ssfo/version.hpp"

namespace ssfo {
namespace io {

using nlohmann::json;

namespace {

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void append_f64_le(std::string& out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, 8);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

double read_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  double x;
  std::memcpy(&x, &bits, 8);
  return x;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return lines;
}

json parse_line(const std::filesystem::path& path, std::size_t line_no,
                const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) {
    throw schema_error(path.string(), line_no, "invalid JSON");
  }
  return j;
}

void expect_keys(const json& j, std::initializer_list<const char*> keys,
                 const std::filesystem::path& path, std::size_t line_no) {
  if (!j.is_object()) {
    throw schema_error(path.string(), line_no, "expected a JSON object");
  }
  for (const char* k : keys) {
    if (!j.contains(k)) {
      throw schema_error(path.string(), line_no, std::string("missing key: ") + k);
    }
  }
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* want : keys) {
      if (k == want) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw schema_error(path.string(), line_no, "unexpected key: " + k);
    }
  }
}

std::vector<TokenId> token_array(const json& j, const char* key,
                                 const std::filesystem::path& path, std::size_t line_no) {
  const json& arr = j.at(key);
  if (!arr.is_array()) {
    throw schema_error(path.string(), line_no, std::string(key) + " must be an array");
  }
  std::vector<TokenId> out;
  out.reserve(arr.size());
  for (const json& x : arr) {
    if (!x.is_number_integer()) {
      throw schema_error(path.string(), line_no,
                         std::string(key) + " must contain integers");
    }
    out.push_back(x.get<TokenId>());
  }
  return out;
}

json token_json(const std::vector<TokenId>& tokens) {
  return json(tokens);
}

}  // namespace

void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw io_error("cannot open for writing: " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
      throw io_error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw io_error("rename failed: " + path.string() + " (" + ec.message() + ")");
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw io_error("cannot open: " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_digest(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::uint64_t h = fnv1a64(
      {reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

// ---- checkpoints -------------------------------------------------------------

void save_checkpoint(const ToyLM& model, const std::filesystem::path& stem) {
  const std::int64_t v = model.vocab_size();
  const std::int64_t d = model.dim;
  const std::int64_t n_doubles = v * d + d * d + d + v * d;

  json manifest;
  manifest["format"] = "ssfo-checkpoint";
  manifest["version"] = kVersion;
  manifest["endianness"] = "little";
  manifest["v"] = v;
  manifest["d"] = d;
  manifest["payload_bytes"] = 8 * n_doubles;
  manifest["vocab"] = {{"tokens", model.vocab.tokens()},
                       {"bos", model.vocab.bos()},
                       {"eos", model.vocab.eos()},
                       {"sep", model.vocab.sep()},
                       {"idk", model.vocab.idk()}};
  json blocks = json::array();
  std::int64_t offset = 0;
  auto add_block = [&](const char* name, std::int64_t rows, std::int64_t cols) {
    blocks.push_back(
        {{"name", name}, {"rows", rows}, {"cols", cols}, {"offset_bytes", 8 * offset}});
    offset += rows * cols;
  };
  add_block("embed", v, d);
  add_block("body", d, d);
  add_block("body_bias", 1, d);
  add_block("unembed", v, d);
  manifest["blocks"] = blocks;

  std::string payload;
  payload.reserve(static_cast<std::size_t>(8 * n_doubles));
  for (double x : model.embed.data) append_f64_le(payload, x);
  for (double x : model.body.data) append_f64_le(payload, x);
  for (double x : model.body_bias) append_f64_le(payload, x);
  for (double x : model.unembed.data) append_f64_le(payload, x);

  write_atomic(std::filesystem::path(stem.string() + ".json"), manifest.dump(2) + "\n");
  write_atomic(std::filesystem::path(stem.string() + ".bin"), payload);
}

ToyLM load_checkpoint(const std::filesystem::path& stem) {
  const std::filesystem::path manifest_path(stem.string() + ".json");
  json manifest = json::parse(read_file(manifest_path), nullptr, false);
  if (manifest.is_discarded() || !manifest.is_object()) {
    throw data_error("invalid checkpoint manifest: " + manifest_path.string());
  }
  if (manifest.value("format", "") != std::string("ssfo-checkpoint")) {
    throw data_error("not a checkpoint manifest: " + manifest_path.string());
  }
  if (manifest.value("endianness", "") != std::string("little")) {
    throw data_error("unsupported endianness in " + manifest_path.string());
  }
  const auto& jv = manifest.at("vocab");
  Vocabulary vocab(jv.at("tokens").get<std::vector<std::string>>(),
                   jv.at("bos").get<TokenId>(), jv.at("eos").get<TokenId>(),
                   jv.at("sep").get<TokenId>(), jv.at("idk").get<TokenId>());
  const std::int64_t v = manifest.at("v").get<std::int64_t>();
  const std::int64_t d = manifest.at("d").get<std::int64_t>();
  if (v != vocab.size()) {
    throw data_error("checkpoint dims disagree with vocabulary: " + manifest_path.string());
  }
  const std::string payload = read_file(std::filesystem::path(stem.string() + ".bin"));
  const std::int64_t n_doubles = v * d + d * d + d + v * d;
  if (static_cast<std::int64_t>(payload.size()) != 8 * n_doubles ||
      manifest.at("payload_bytes").get<std::int64_t>() != 8 * n_doubles) {
    throw data_error("checkpoint payload length mismatch: " + stem.string() + ".bin");
  }
  ToyLM model(std::move(vocab), static_cast<int>(d));
  const unsigned char* p = reinterpret_cast<const unsigned char*>(payload.data());
  auto read_into = [&p](std::vector<double>& dst) {
    for (double& x : dst) {
      x = read_f64_le(p);
      p += 8;
    }
  };
  read_into(model.embed.data);
  read_into(model.body.data);
  read_into(model.body_bias);
  read_into(model.unembed.data);
  return model;
}

// ---- jsonl -------------------------------------------------------------------

void write_pairs_jsonl(const std::filesystem::path& path,
                       const std::vector<PreferencePair>& pairs) {
  std::string out;
  for (const PreferencePair& p : pairs) {
    json j;
    j["query"] = token_json(p.query);
    j["context"] = token_json(p.context);
    j["chosen"] = token_json(p.chosen);
    j["rejected"] = token_json(p.rejected);
    j["chosen_seed"] = p.chosen_seed;
    j["rejected_seed"] = p.rejected_seed;
    out += j.dump();
    out += '\n';
  }
  write_atomic(path, out);
}

std::vector<PreferencePair> read_pairs_jsonl(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  std::vector<PreferencePair> pairs;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    const std::size_t line_no = i + 1;
    json j = parse_line(path, line_no, lines[i]);
    expect_keys(j, {"query", "context", "chosen", "rejected", "chosen_seed", "rejected_seed"},
                path, line_no);
    PreferencePair p;
    p.query = token_array(j, "query", path, line_no);
    p.context = token_array(j, "context", path, line_no);
    p.chosen = token_array(j, "chosen", path, line_no);
    p.rejected = token_array(j, "rejected", path, line_no);
    if (!j.at("chosen_seed").is_number_integer() ||
        !j.at("rejected_seed").is_number_integer()) {
      throw schema_error(path.string(), line_no, "seeds must be integers");
    }
    p.chosen_seed = j.at("chosen_seed").get<std::uint64_t>();
    p.rejected_seed = j.at("rejected_seed").get<std::uint64_t>();
    if (p.query.empty() || p.context.empty()) {
      throw schema_error(path.string(), line_no, "query and context must be non-empty");
    }
    if (p.rejected.empty()) {
      throw schema_error(path.string(), line_no, "rejected response must be non-empty");
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

void write_corpus_jsonl(const std::filesystem::path& path, const Corpus& corpus) {
  std::string out;
  for (const std::vector<TokenId>& seq : corpus.sequences) {
    json j;
    j["tokens"] = token_json(seq);
    out += j.dump();
    out += '\n';
  }
  write_atomic(path, out);
}

std::vector<std::vector<TokenId>> read_corpus_sequences(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  std::vector<std::vector<TokenId>> sequences;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    const std::size_t line_no = i + 1;
    json j = parse_line(path, line_no, lines[i]);
    expect_keys(j, {"tokens"}, path, line_no);
    std::vector<TokenId> seq = token_array(j, "tokens", path, line_no);
    if (seq.size() < 3) {
      throw schema_error(path.string(), line_no, "corpus sequence shorter than 3 tokens");
    }
    sequences.push_back(std::move(seq));
  }
  return sequences;
}

void write_probes_jsonl(const std::filesystem::path& path,
                        const std::vector<TrapProbe>& probes) {
  std::string out;
  for (const TrapProbe& p : probes) {
    json j;
    j["prompt"] = token_json(p.prompt);
    j["z_c"] = p.z_c;
    j["z_p"] = p.z_p;
    out += j.dump();
    out += '\n';
  }
  write_atomic(path, out);
}

std::vector<TrapProbe> read_probes_jsonl(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  std::vector<TrapProbe> probes;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    const std::size_t line_no = i + 1;
    json j = parse_line(path, line_no, lines[i]);
    expect_keys(j, {"prompt", "z_c", "z_p"}, path, line_no);
    TrapProbe p;
    p.prompt = token_array(j, "prompt", path, line_no);
    if (!j.at("z_c").is_number_integer() || !j.at("z_p").is_number_integer()) {
      throw schema_error(path.string(), line_no, "z_c/z_p must be integers");
    }
    p.z_c = j.at("z_c").get<TokenId>();
    p.z_p = j.at("z_p").get<TokenId>();
    if (p.z_c == p.z_p) {
      throw schema_error(path.string(), line_no, "z_c and z_p must differ");
    }
    probes.push_back(std::move(p));
  }
  return probes;
}

void write_tasks_jsonl(const std::filesystem::path& path, const std::vector<Task>& tasks) {
  std::string out;
  for (const Task& t : tasks) {
    json j;
    j["query"] = token_json(t.query);
    j["context"] = token_json(t.context);
    j["gold"] = token_json(t.gold_context_answer);
    out += j.dump();
    out += '\n';
  }
  write_atomic(path, out);
}

std::vector<Task> read_tasks_jsonl(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  std::vector<Task> tasks;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    const std::size_t line_no = i + 1;
    json j = parse_line(path, line_no, lines[i]);
    expect_keys(j, {"query", "context", "gold"}, path, line_no);
    Task t;
    t.query = token_array(j, "query", path, line_no);
    t.context = token_array(j, "context", path, line_no);
    t.gold_context_answer = token_array(j, "gold", path, line_no);
    if (t.query.empty() || t.context.empty()) {
      throw schema_error(path.string(), line_no, "query and context must be non-empty");
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

void write_vocab_json(const std::filesystem::path& path, const Vocabulary& vocab,
                      int model_dim) {
  json j;
  j["tokens"] = vocab.tokens();
  j["bos"] = vocab.bos();
  j["eos"] = vocab.eos();
  j["sep"] = vocab.sep();
  j["idk"] = vocab.idk();
  j["model_dim"] = model_dim;
  write_atomic(path, j.dump(2) + "\n");
}

std::pair<Vocabulary, int> read_vocab_json(const std::filesystem::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw data_error("invalid vocabulary file: " + path.string());
  }
  Vocabulary vocab(j.at("tokens").get<std::vector<std::string>>(),
                   j.at("bos").get<TokenId>(), j.at("eos").get<TokenId>(),
                   j.at("sep").get<TokenId>(), j.at("idk").get<TokenId>());
  return {std::move(vocab), j.at("model_dim").get<int>()};
}

std::vector<metrics::EvalRecord> read_eval_records_jsonl(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  std::vector<metrics::EvalRecord> records;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    const std::size_t line_no = i + 1;
    json j = parse_line(path, line_no, lines[i]);
    if (!j.is_object() || !j.contains("prediction") || !j.contains("references")) {
      throw schema_error(path.string(), line_no,
                         "record needs 'prediction' and 'references'");
    }
    for (const auto& [k, v] : j.items()) {
      if (k != "prediction" && k != "references" && k != "levels") {
        throw schema_error(path.string(), line_no, "unexpected key: " + k);
      }
    }
    metrics::EvalRecord r;
    if (!j.at("prediction").is_string()) {
      throw schema_error(path.string(), line_no, "prediction must be a string");
    }
    r.prediction = j.at("prediction").get<std::string>();
    if (!j.at("references").is_array() || j.at("references").empty()) {
      throw schema_error(path.string(), line_no, "references must be a non-empty array");
    }
    for (const json& ref : j.at("references")) {
      if (!ref.is_string()) {
        throw schema_error(path.string(), line_no, "references must contain strings");
      }
      r.references.push_back(ref.get<std::string>());
    }
    if (j.contains("levels")) {
      if (!j.at("levels").is_array() || j.at("levels").empty()) {
        throw schema_error(path.string(), line_no, "levels must be a non-empty array");
      }
      std::vector<bool> levels;
      for (const json& b : j.at("levels")) {
        if (!b.is_boolean()) {
          throw schema_error(path.string(), line_no, "levels must contain booleans");
        }
        levels.push_back(b.get<bool>());
      }
      r.levels = std::move(levels);
    }
    records.push_back(std::move(r));
  }
  return records;
}

void write_eval_records_jsonl(const std::filesystem::path& path,
                              const std::vector<metrics::EvalRecord>& records) {
  std::string out;
  for (const metrics::EvalRecord& r : records) {
    json j;
    j["prediction"] = r.prediction;
    j["references"] = r.references;
    if (r.levels.has_value()) {
      j["levels"] = *r.levels;
    }
    out += j.dump();
    out += '\n';
  }
  write_atomic(path, out);
}

void write_eval_summary_json(const std::filesystem::path& path,
                             const metrics::EvalSummary& summary) {
  json j;
  j["span_em"] = summary.span_em;
  j["rouge1_f1"] = summary.rouge1_f1;
  j["rouge2_f1"] = summary.rouge2_f1;
  j["rougeL_f1"] = summary.rougeL_f1;
  if (summary.csl_mean.has_value()) {
    j["csl_mean"] = *summary.csl_mean;
  } else {
    j["csl_mean"] = nullptr;
  }
  j["n"] = summary.n;
  write_atomic(path, j.dump(2) + "\n");
}

// ---- trajectories and reports --------------------------------------------------

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryLog& log) {
  std::string out = "step,loss,logp_chosen,logp_rejected,margin\n";
  for (const TrajectoryRecord& r : log) {
    out += std::to_string(r.step);
    out += ',' + format_double(r.loss);
    out += ',' + format_double(r.logp_chosen);
    out += ',' + format_double(r.logp_rejected);
    out += ',' + format_double(r.margin);
    out += '\n';
  }
  write_atomic(path, out);
}

TrajectoryLog read_trajectory_csv(const std::filesystem::path& path) {
  const std::vector<std::string> lines = split_lines(read_file(path));
  if (lines.empty() || lines[0] != "step,loss,logp_chosen,logp_rejected,margin") {
    throw data_error("bad trajectory header in " + path.string());
  }
  TrajectoryLog log;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) {
      continue;
    }
    TrajectoryRecord r;
    char* end = nullptr;
    const char* s = lines[i].c_str();
    r.step = static_cast<int>(std::strtol(s, &end, 10));
    auto next_field = [&]() {
      if (*end != ',') {
        throw schema_error(path.string(), i + 1, "malformed trajectory row");
      }
      s = end + 1;
      return std::strtod(s, &end);
    };
    r.loss = next_field();
    r.logp_chosen = next_field();
    r.logp_rejected = next_field();
    r.margin = next_field();
    log.push_back(r);
  }
  return log;
}

void write_pretrain_csv(const std::filesystem::path& path, const PretrainLog& log) {
  std::string out = "step,nll\n";
  for (const PretrainRecord& r : log) {
    out += std::to_string(r.step);
    out += ',' + format_double(r.nll);
    out += '\n';
  }
  write_atomic(path, out);
}

namespace {

json optional_stat(const std::optional<double>& value) {
  if (value.has_value()) {
    return json{{"value", *value}, {"degenerate", false}};
  }
  return json{{"value", nullptr}, {"degenerate", true}};
}

}  // namespace

void write_displacement_json(const std::filesystem::path& path,
                             const DisplacementReport& report) {
  json j;
  j["n_probes"] = report.per_probe.size();
  j["mean_dp_zc"] = report.mean_dp_zc;
  j["mean_dp_zp"] = report.mean_dp_zp;
  j["mean_dp_other"] = report.mean_dp_other;
  j["mean_abs_dp_other"] = report.mean_abs_dp_other;
  j["pearson_dp_zc_vs_dp_zp"] = optional_stat(report.pearson_dp);
  json per_probe = json::array();
  for (std::size_t i = 0; i < report.per_probe.size(); ++i) {
    const ProbeDelta& d = report.per_probe[i];
    per_probe.push_back({{"probe", i},
                         {"dp_zc", d.dp_zc},
                         {"dp_zp", d.dp_zp},
                         {"mean_dp_other", d.mean_dp_other},
                         {"mean_abs_dp_other", d.mean_abs_dp_other}});
  }
  j["per_probe"] = per_probe;

  json eq3 = json::array();
  for (std::size_t i = 0; i < report.eq3.size(); ++i) {
    const Eq3ProbeResult& r = report.eq3[i];
    json row;
    row["probe"] = i;
    if (r.degenerate_geometry) {
      row["degenerate_geometry"] = true;
    } else {
      row["degenerate_geometry"] = false;
      row["spearman"] = optional_stat(r.spearman);
      row["zc_above_others"] = r.zc_above_others;
      row["zp_below_others"] = r.zp_below_others;
    }
    eq3.push_back(row);
  }
  json theory;
  theory["note"] =
      "theory mode: the prompt's hidden state is the sole trainable parameter, "
      "making the one-step logit change exactly proportional to the unembedding "
      "inner products; full-model training is only checked statistically";
  theory["beta"] = report.theory_cfg.beta;
  theory["lambda"] = report.theory_cfg.lambda;
  theory["eta"] = report.theory_eta;
  theory["mean_spearman"] = optional_stat(report.mean_spearman);
  theory["frac_zc_above_others"] = report.frac_zc_above_others;
  theory["frac_zp_below_others"] = report.frac_zp_below_others;
  theory["per_probe"] = eq3;
  j["theory_mode"] = theory;
  write_atomic(path, j.dump(2) + "\n");
}

void write_displacement_csv(const std::filesystem::path& path,
                            const DisplacementReport& report) {
  std::string out = "probe,dp_zc,dp_zp\n";
  for (std::size_t i = 0; i < report.per_probe.size(); ++i) {
    out += std::to_string(i);
    out += ',' + format_double(report.per_probe[i].dp_zc);
    out += ',' + format_double(report.per_probe[i].dp_zp);
    out += '\n';
  }
  write_atomic(path, out);
}

// ---- run manifests --------------------------------------------------------------

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  json j;
  j["command"] = manifest.command;
  j["config"] = manifest.config;
  j["seed"] = manifest.seed;
  j["version"] = manifest.version;
  j["input_digests"] = manifest.input_digests;
  j["output_digests"] = manifest.output_digests;
  j["duration_seconds"] = manifest.duration_seconds;
  write_atomic(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& path) {
  json j = json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw data_error("invalid manifest: " + path.string());
  }
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config").get<std::map<std::string, std::string>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.version = j.at("version").get<std::string>();
  m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
  m.output_digests = j.at("output_digests").get<std::map<std::string, std::string>>();
  m.duration_seconds = j.at("duration_seconds").get<double>();
  return m;
}

void verify_manifest(const std::filesystem::path& path) {
  const RunManifest m = read_manifest(path);
  const std::filesystem::path dir = path.parent_path();
  for (const auto& [rel, digest] : m.output_digests) {
    const std::string actual = file_digest(dir / rel);
    if (actual != digest) {
      throw data_error("manifest digest mismatch for " + rel + ": expected " + digest +
                       ", got " + actual);
    }
  }
}

}  // namespace io
}  // namespace ssfo
