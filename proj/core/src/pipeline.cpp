#include "ssfo/pipeline.hpp"

#include <chrono>
#include <cstdio>

#include <json.hpp>

#include "ssfo/errors.hpp"
#include "ssfo/metrics.hpp"
#include "ssfo/trainer.hpp"
#include "ssfo/version.hpp"

namespace ssfo {
namespace pipeline {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Collects a stage's manifest as work proceeds and writes it at the end.
class RunScope {
 public:
  RunScope(std::string command, std::uint64_t seed, fs::path out_dir)
      : out_dir_(std::move(out_dir)), start_(Clock::now()) {
    manifest_.command = std::move(command);
    manifest_.seed = seed;
    manifest_.version = kVersion;
    std::error_code ec;
    fs::create_directories(out_dir_, ec);
    if (ec) {
      throw io_error("cannot create output directory " + out_dir_.string());
    }
  }

  void config(const std::string& key, const std::string& value) {
    manifest_.config[key] = value;
  }
  void config(const std::string& key, double value) { config(key, fmt(value)); }
  void config(const std::string& key, std::uint64_t value) {
    config(key, std::to_string(value));
  }
  void config(const std::string& key, int value) { config(key, std::to_string(value)); }

  void input(const fs::path& path) {
    manifest_.input_digests[path.generic_string()] = io::file_digest(path);
  }
  void input_checkpoint(const fs::path& stem) {
    input(fs::path(stem.string() + ".json"));
    input(fs::path(stem.string() + ".bin"));
  }

  // writes bytes under the out dir via the io layer, registering the digest
  void output(const std::string& name) {
    manifest_.output_digests[name] = io::file_digest(out_dir_ / name);
  }

  const fs::path& dir() const { return out_dir_; }

  void finish() {
    manifest_.duration_seconds =
        std::chrono::duration<double>(Clock::now() - start_).count();
    io::write_manifest(out_dir_ / "manifest.json", manifest_);
  }

 private:
  fs::path out_dir_;
  io::RunManifest manifest_;
  Clock::time_point start_;
};

}  // namespace

std::string render_tokens(const Vocabulary& vocab, std::span<const TokenId> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) {
      out += ' ';
    }
    out += vocab.token(tokens[i]);
  }
  return out;
}

double greedy_span_em(const ToyLM& model, const std::vector<Task>& tasks, int max_len) {
  if (tasks.empty()) {
    throw config_error("greedy_span_em: no tasks");
  }
  double total = 0.0;
  for (const Task& task : tasks) {
    const std::vector<TokenId> prompt = build_prompt_with_context(model.vocab, task);
    const std::vector<TokenId> decoded = greedy_decode(model, prompt, max_len);
    const std::string prediction = render_tokens(model.vocab, decoded);
    const std::vector<std::string> refs = {
        render_tokens(model.vocab, task.gold_context_answer)};
    total += metrics::span_em(prediction, refs);
  }
  return total / static_cast<double>(tasks.size());
}

void run_suite(const SuiteArgs& args) {
  RunScope scope("suite", args.seed, args.out);
  SuiteConfig cfg;
  cfg.seed = args.seed;
  cfg.n_proverbs = args.n_proverbs;
  cfg.vocab_size = args.vocab_size;
  cfg.model_dim = args.model_dim;
  cfg.tasks_per_proverb = args.tasks_per_proverb;
  scope.config("n_proverbs", cfg.n_proverbs);
  scope.config("vocab_size", cfg.vocab_size);
  scope.config("model_dim", cfg.model_dim);
  scope.config("tasks_per_proverb", cfg.tasks_per_proverb);
  scope.config("prefix_len", cfg.prefix_len);
  scope.config("n_alternatives", cfg.n_alternatives);
  scope.config("patterns_per_alternative", cfg.patterns_per_alternative);

  const TrapSuite suite = build_trap_suite(cfg);
  io::write_vocab_json(scope.dir() / "vocab.json", suite.corpus.vocab, suite.model_dim);
  io::write_corpus_jsonl(scope.dir() / "corpus.jsonl", suite.corpus);
  io::write_probes_jsonl(scope.dir() / "probes.jsonl", suite.probes);
  io::write_tasks_jsonl(scope.dir() / "tasks.jsonl", suite.tasks);
  scope.output("vocab.json");
  scope.output("corpus.jsonl");
  scope.output("probes.jsonl");
  scope.output("tasks.jsonl");
  scope.finish();
}

void run_pretrain(const PretrainArgs& args) {
  RunScope scope("pretrain", args.seed, args.out);
  const fs::path vocab_path = args.suite_dir / "vocab.json";
  const fs::path corpus_path = args.suite_dir / "corpus.jsonl";
  if (!fs::exists(vocab_path) || !fs::exists(corpus_path)) {
    throw io_error("pretrain expects vocab.json and corpus.jsonl from the suite command in " +
                   args.suite_dir.string());
  }
  scope.input(vocab_path);
  scope.input(corpus_path);

  auto [vocab, suite_dim] = io::read_vocab_json(vocab_path);
  const int dim = args.model_dim > 0 ? args.model_dim : suite_dim;
  Corpus corpus{io::read_corpus_sequences(corpus_path), vocab};

  scope.config("steps", args.steps);
  scope.config("learning_rate", args.learning_rate);
  scope.config("init_std", args.init_std);
  scope.config("model_dim", dim);

  Rng init_rng = Rng::stream(args.seed, "pretrain-init");
  ToyLM model = ToyLM::init_random(vocab, dim, args.init_std, init_rng);

  TrainConfig cfg;
  cfg.mode = TrainMode::pretrain_mle;
  cfg.learning_rate = args.learning_rate;
  cfg.steps = args.steps;
  cfg.seed = args.seed;
  auto [trained, log] = pretrain_mle(std::move(model), corpus, cfg);

  io::save_checkpoint(trained, scope.dir() / "model");
  io::write_pretrain_csv(scope.dir() / "pretrain.csv", log);
  scope.output("model.json");
  scope.output("model.bin");
  scope.output("pretrain.csv");
  scope.finish();
}

void run_gen_pairs(const GenPairsArgs& args) {
  RunScope scope("gen-pairs", args.seed, args.out);
  if (!fs::exists(fs::path(args.model.string() + ".json"))) {
    throw io_error("gen-pairs expects a checkpoint from the pretrain command at " +
                   args.model.string());
  }
  if (!fs::exists(args.tasks)) {
    throw io_error("gen-pairs expects tasks.jsonl from the suite command at " +
                   args.tasks.string());
  }
  scope.input_checkpoint(args.model);
  scope.input(args.tasks);
  scope.config("temperature", args.temperature);
  scope.config("max_len", args.max_len);

  const ToyLM model = io::load_checkpoint(args.model);
  const std::vector<Task> tasks = io::read_tasks_jsonl(args.tasks);
  const PairGenResult result =
      generate_pairs(model, tasks, args.temperature, args.max_len, args.seed);

  io::write_pairs_jsonl(scope.dir() / "pairs.jsonl", result.pairs);
  scope.config("n_tasks", static_cast<int>(result.stats.n_tasks));
  scope.config("n_retained", static_cast<int>(result.stats.n_retained));
  scope.config("n_dropped_empty", static_cast<int>(result.stats.n_dropped_empty));
  scope.config("n_dropped_refusal", static_cast<int>(result.stats.n_dropped_refusal));
  scope.output("pairs.jsonl");
  scope.finish();
}

void run_align(const AlignArgs& args) {
  RunScope scope("align", args.seed, args.out);
  if (!fs::exists(fs::path(args.model.string() + ".json"))) {
    throw io_error("align expects a checkpoint from the pretrain command at " +
                   args.model.string());
  }
  if (!fs::exists(args.pairs)) {
    throw io_error("align expects pairs.jsonl from the gen-pairs command at " +
                   args.pairs.string());
  }
  scope.input_checkpoint(args.model);
  scope.input(args.pairs);

  TrainConfig cfg;
  cfg.mode = train_mode_from_name(args.mode);
  cfg.learning_rate = args.learning_rate;
  cfg.steps = args.steps;
  cfg.batch_size = args.batch_size;
  cfg.seed = args.seed;
  cfg.loss_cfg.beta = args.beta;
  cfg.loss_cfg.lambda = args.lambda;
  cfg.trainable_mask = param_mask_from_name(args.mask);
  check_train_config(cfg);

  scope.config("mode", args.mode);
  scope.config("learning_rate", args.learning_rate);
  scope.config("steps", args.steps);
  scope.config("batch_size", args.batch_size);
  scope.config("beta", args.beta);
  scope.config("lambda", args.lambda);
  scope.config("mask", args.mask);

  const ToyLM model = io::load_checkpoint(args.model);
  const std::vector<PreferencePair> pairs = io::read_pairs_jsonl(args.pairs);
  AlignResult result = align(model, pairs, cfg);

  io::save_checkpoint(result.model, scope.dir() / "model");
  io::write_trajectory_csv(scope.dir() / "trajectory.csv", result.log);
  scope.output("model.json");
  scope.output("model.bin");
  scope.output("trajectory.csv");
  scope.finish();
}

void run_probe(const ProbeArgs& args) {
  RunScope scope("probe", 0, args.out);
  if (!fs::exists(fs::path(args.before.string() + ".json")) ||
      !fs::exists(fs::path(args.after.string() + ".json"))) {
    throw io_error("probe expects before/after checkpoints (pretrain and align commands)");
  }
  if (!fs::exists(args.probes)) {
    throw io_error("probe expects probes.jsonl from the suite command at " +
                   args.probes.string());
  }
  scope.input_checkpoint(args.before);
  scope.input_checkpoint(args.after);
  scope.input(args.probes);
  scope.config("beta", args.beta);
  scope.config("lambda", args.lambda);
  scope.config("eta", args.eta);

  const ToyLM before = io::load_checkpoint(args.before);
  const ToyLM after = io::load_checkpoint(args.after);
  const std::vector<TrapProbe> probes = io::read_probes_jsonl(args.probes);
  LossConfig cfg{args.beta, args.lambda};
  const DisplacementReport report =
      build_displacement_report(before, after, probes, cfg, args.eta);

  io::write_displacement_json(scope.dir() / "displacement.json", report);
  io::write_displacement_csv(scope.dir() / "displacement.csv", report);
  scope.output("displacement.json");
  scope.output("displacement.csv");
  scope.finish();
}

void run_eval(const EvalArgs& args) {
  RunScope scope("eval", 0, args.out);
  const bool decode_mode = !args.model.empty() || !args.tasks.empty();
  const bool records_mode = !args.records.empty();
  if (decode_mode == records_mode) {
    throw config_error("eval needs either --model with --tasks, or --records");
  }
  scope.config("max_len", args.max_len);

  std::vector<metrics::EvalRecord> records;
  if (decode_mode) {
    if (args.model.empty() || args.tasks.empty()) {
      throw config_error("eval decode mode needs both --model and --tasks");
    }
    if (!fs::exists(fs::path(args.model.string() + ".json"))) {
      throw io_error("eval expects a checkpoint (pretrain or align command) at " +
                     args.model.string());
    }
    if (!fs::exists(args.tasks)) {
      throw io_error("eval expects tasks.jsonl from the suite command at " +
                     args.tasks.string());
    }
    scope.input_checkpoint(args.model);
    scope.input(args.tasks);
    const ToyLM model = io::load_checkpoint(args.model);
    const std::vector<Task> tasks = io::read_tasks_jsonl(args.tasks);
    for (const Task& task : tasks) {
      const std::vector<TokenId> prompt = build_prompt_with_context(model.vocab, task);
      const std::vector<TokenId> decoded = greedy_decode(model, prompt, args.max_len);
      metrics::EvalRecord rec;
      rec.prediction = render_tokens(model.vocab, decoded);
      rec.references = {render_tokens(model.vocab, task.gold_context_answer)};
      records.push_back(std::move(rec));
    }
    io::write_eval_records_jsonl(scope.dir() / "records.jsonl", records);
    scope.output("records.jsonl");
  } else {
    if (!fs::exists(args.records)) {
      throw io_error("eval records file not found: " + args.records.string());
    }
    scope.input(args.records);
    records = io::read_eval_records_jsonl(args.records);
  }

  const metrics::EvalSummary summary = metrics::evaluate_records(records);
  io::write_eval_summary_json(scope.dir() / "summary.json", summary);
  scope.output("summary.json");
  scope.finish();
}

std::vector<SweepRow> run_sweep_lambda(const SweepArgs& args) {
  RunScope scope("sweep-lambda", args.seed, args.out);
  if (args.lambdas.empty()) {
    throw config_error("sweep-lambda: need at least one lambda");
  }
  for (double l : args.lambdas) {
    if (l < 1.0) {
      throw config_error("sweep-lambda: lambda must be >= 1, got " + fmt(l));
    }
  }
  scope.input_checkpoint(args.model);
  scope.input(args.pairs);
  scope.input(args.tasks);
  scope.input(args.probes);
  scope.config("learning_rate", args.learning_rate);
  scope.config("steps", args.steps);
  scope.config("batch_size", args.batch_size);
  scope.config("beta", args.beta);
  scope.config("eta", args.eta);
  scope.config("max_len", args.max_len);
  {
    std::string grid;
    for (std::size_t i = 0; i < args.lambdas.size(); ++i) {
      grid += (i ? "," : "") + fmt(args.lambdas[i]);
    }
    scope.config("lambdas", grid);
  }

  const ToyLM pretrained = io::load_checkpoint(args.model);
  const std::vector<PreferencePair> pairs = io::read_pairs_jsonl(args.pairs);
  const std::vector<Task> tasks = io::read_tasks_jsonl(args.tasks);
  const std::vector<TrapProbe> probes = io::read_probes_jsonl(args.probes);

  std::vector<SweepRow> rows;
  std::string csv = "lambda,span_em,mean_dp_zc,mean_dp_zp,pearson_r\n";
  for (double lambda : args.lambdas) {
    TrainConfig cfg;
    cfg.mode = lambda > 1.0 ? TrainMode::ssfo_lambda : TrainMode::ssfo;
    cfg.learning_rate = args.learning_rate;
    cfg.steps = args.steps;
    cfg.batch_size = args.batch_size;
    cfg.seed = args.seed;  // every lambda point reseeded identically
    cfg.loss_cfg.beta = args.beta;
    cfg.loss_cfg.lambda = lambda;

    AlignResult aligned = align(pretrained, pairs, cfg);

    char dir_name[32];
    std::snprintf(dir_name, sizeof(dir_name), "lambda_%.4g", lambda);
    const fs::path sub = scope.dir() / dir_name;
    std::error_code ec;
    fs::create_directories(sub, ec);
    if (ec) {
      throw io_error("cannot create " + sub.string());
    }
    io::save_checkpoint(aligned.model, sub / "model");
    io::write_trajectory_csv(sub / "trajectory.csv", aligned.log);
    scope.output(std::string(dir_name) + "/model.json");
    scope.output(std::string(dir_name) + "/model.bin");
    scope.output(std::string(dir_name) + "/trajectory.csv");

    SweepRow row;
    row.lambda = lambda;
    row.span_em = greedy_span_em(aligned.model, tasks, args.max_len);
    LossConfig probe_cfg{args.beta, lambda};
    const DisplacementReport report =
        build_displacement_report(pretrained, aligned.model, probes, probe_cfg, args.eta);
    row.mean_dp_zc = report.mean_dp_zc;
    row.mean_dp_zp = report.mean_dp_zp;
    row.pearson_r = report.pearson_dp;
    rows.push_back(row);

    csv += fmt(lambda);
    csv += ',' + fmt(row.span_em);
    csv += ',' + fmt(row.mean_dp_zc);
    csv += ',' + fmt(row.mean_dp_zp);
    csv += ',' + (row.pearson_r.has_value() ? fmt(*row.pearson_r) : std::string("degenerate"));
    csv += '\n';
  }

  io::write_atomic(scope.dir() / "sweep.csv", csv);
  scope.output("sweep.csv");

  // trend of span EM against lambda
  std::optional<double> trend;
  if (rows.size() >= 2) {
    std::vector<double> xs, ys;
    for (const SweepRow& r : rows) {
      xs.push_back(r.lambda);
      ys.push_back(r.span_em);
    }
    trend = metrics::pearson(xs, ys);
  }
  {
    nlohmann::json j;
    j["trend_pearson_lambda_vs_span_em"] =
        trend.has_value() ? nlohmann::json(*trend) : nlohmann::json(nullptr);
    j["degenerate"] = !trend.has_value();
    nlohmann::json jrows = nlohmann::json::array();
    for (const SweepRow& r : rows) {
      jrows.push_back({{"lambda", r.lambda},
                       {"span_em", r.span_em},
                       {"mean_dp_zc", r.mean_dp_zc},
                       {"mean_dp_zp", r.mean_dp_zp},
                       {"pearson_r", r.pearson_r.has_value() ? nlohmann::json(*r.pearson_r)
                                                             : nlohmann::json(nullptr)}});
    }
    j["rows"] = jrows;
    io::write_atomic(scope.dir() / "sweep.json", j.dump(2) + "\n");
    scope.output("sweep.json");
  }
  scope.finish();
  return rows;
}

}  // namespace pipeline
}  // namespace ssfo
