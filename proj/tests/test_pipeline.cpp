#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "ssfo/errors.hpp"
#include "ssfo/io.hpp"
#include "ssfo/pipeline.hpp"
#include "test_util.hpp"

using namespace ssfo;
using namespace ssfo::pipeline;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("ssfo_pipe_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

std::size_t line_count(const fs::path& file) {
  const std::string text = io::read_file(file);
  std::size_t n = 0;
  for (char c : text) {
    if (c == '\n') ++n;
  }
  return n;
}

// small, fast pipeline configuration used across the tests
SuiteArgs small_suite(const fs::path& dir) {
  SuiteArgs args;
  args.seed = 17;
  args.out = dir / "suite";
  args.n_proverbs = 10;
  args.vocab_size = 48;
  args.model_dim = 12;
  args.tasks_per_proverb = 2;
  return args;
}

PretrainArgs small_pretrain(const fs::path& dir) {
  PretrainArgs args;
  args.seed = 17;
  args.suite_dir = dir / "suite";
  args.out = dir / "pretrain";
  args.steps = 60;
  args.learning_rate = 0.3;
  return args;
}

}  // namespace

TEST_CASE("suite command writes the expected files deterministically") {
  TempDir tmp;
  run_suite(small_suite(tmp.path));
  const fs::path dir = tmp.path / "suite";
  CHECK(fs::exists(dir / "vocab.json"));
  CHECK(fs::exists(dir / "corpus.jsonl"));
  CHECK(fs::exists(dir / "probes.jsonl"));
  CHECK(fs::exists(dir / "tasks.jsonl"));
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(line_count(dir / "probes.jsonl") == 10);
  CHECK(line_count(dir / "tasks.jsonl") == 20);
  CHECK_NOTHROW(io::verify_manifest(dir / "manifest.json"));

  SuiteArgs again = small_suite(tmp.path);
  again.out = tmp.path / "suite2";
  run_suite(again);
  for (const char* name : {"vocab.json", "corpus.jsonl", "probes.jsonl", "tasks.jsonl"}) {
    CHECK(io::read_file(dir / name) == io::read_file(tmp.path / "suite2" / name));
  }
}

TEST_CASE("pipeline stages chain and their manifests verify") {
  TempDir tmp;
  run_suite(small_suite(tmp.path));
  run_pretrain(small_pretrain(tmp.path));

  GenPairsArgs gen;
  gen.seed = 17;
  gen.model = tmp.path / "pretrain" / "model";
  gen.tasks = tmp.path / "suite" / "tasks.jsonl";
  gen.out = tmp.path / "pairs";
  run_gen_pairs(gen);
  CHECK(fs::exists(tmp.path / "pairs" / "pairs.jsonl"));

  AlignArgs align_args;
  align_args.seed = 17;
  align_args.model = tmp.path / "pretrain" / "model";
  align_args.pairs = tmp.path / "pairs" / "pairs.jsonl";
  align_args.out = tmp.path / "align";
  align_args.steps = 20;
  run_align(align_args);
  CHECK(fs::exists(tmp.path / "align" / "model.json"));
  CHECK(fs::exists(tmp.path / "align" / "trajectory.csv"));

  // step-0 trajectory loss field is ln 2
  const TrajectoryLog log = io::read_trajectory_csv(tmp.path / "align" / "trajectory.csv");
  REQUIRE(!log.empty());
  CHECK(std::abs(log[0].loss - 0.6931471805599453) <= 1e-9);

  ProbeArgs probe;
  probe.before = tmp.path / "pretrain" / "model";
  probe.after = tmp.path / "align" / "model";
  probe.probes = tmp.path / "suite" / "probes.jsonl";
  probe.out = tmp.path / "probe";
  run_probe(probe);
  CHECK(fs::exists(tmp.path / "probe" / "displacement.json"));
  CHECK(fs::exists(tmp.path / "probe" / "displacement.csv"));

  EvalArgs eval;
  eval.model = tmp.path / "align" / "model";
  eval.tasks = tmp.path / "suite" / "tasks.jsonl";
  eval.out = tmp.path / "eval";
  run_eval(eval);
  CHECK(fs::exists(tmp.path / "eval" / "summary.json"));
  CHECK(fs::exists(tmp.path / "eval" / "records.jsonl"));

  for (const char* stage : {"suite", "pretrain", "pairs", "align", "probe", "eval"}) {
    CHECK_NOTHROW(io::verify_manifest(tmp.path / stage / "manifest.json"));
  }
}

TEST_CASE("align modes dpo and ssfo produce identical trajectory files") {
  TempDir tmp;
  run_suite(small_suite(tmp.path));
  run_pretrain(small_pretrain(tmp.path));
  GenPairsArgs gen;
  gen.model = tmp.path / "pretrain" / "model";
  gen.tasks = tmp.path / "suite" / "tasks.jsonl";
  gen.out = tmp.path / "pairs";
  run_gen_pairs(gen);

  AlignArgs a;
  a.model = tmp.path / "pretrain" / "model";
  a.pairs = tmp.path / "pairs" / "pairs.jsonl";
  a.steps = 15;
  a.out = tmp.path / "align_dpo";
  a.mode = "dpo";
  run_align(a);
  a.out = tmp.path / "align_ssfo";
  a.mode = "ssfo";
  run_align(a);
  CHECK(io::read_file(tmp.path / "align_dpo" / "trajectory.csv") ==
        io::read_file(tmp.path / "align_ssfo" / "trajectory.csv"));
  CHECK(io::read_file(tmp.path / "align_dpo" / "model.bin") ==
        io::read_file(tmp.path / "align_ssfo" / "model.bin"));
}

TEST_CASE("missing prerequisites name the producing command") {
  TempDir tmp;
  AlignArgs a;
  a.model = tmp.path / "nonexistent" / "model";
  a.pairs = tmp.path / "nonexistent" / "pairs.jsonl";
  a.out = tmp.path / "align";
  try {
    run_align(a);
    FAIL("expected io_error");
  } catch (const io_error& e) {
    CHECK(std::string(e.what()).find("pretrain command") != std::string::npos);
  }

  PretrainArgs p;
  p.suite_dir = tmp.path / "nowhere";
  p.out = tmp.path / "pretrain";
  try {
    run_pretrain(p);
    FAIL("expected io_error");
  } catch (const io_error& e) {
    CHECK(std::string(e.what()).find("suite command") != std::string::npos);
  }
}

TEST_CASE("eval validates its input combination") {
  TempDir tmp;
  EvalArgs eval;
  eval.out = tmp.path / "eval";
  CHECK_THROWS_AS(run_eval(eval), config_error);
}

TEST_CASE("eval works from a records file") {
  TempDir tmp;
  std::vector<metrics::EvalRecord> records;
  records.push_back({"vatican city", {"Vatican City."}, std::nullopt});
  records.push_back({"nope", {"Vatican City."}, std::vector<bool>{true, true, false}});
  io::write_eval_records_jsonl(tmp.path / "records.jsonl", records);
  EvalArgs eval;
  eval.records = tmp.path / "records.jsonl";
  eval.out = tmp.path / "eval";
  run_eval(eval);
  const std::string summary = io::read_file(tmp.path / "eval" / "summary.json");
  CHECK(summary.find("\"span_em\": 0.5") != std::string::npos);
  CHECK(summary.find("\"n\": 2") != std::string::npos);
}

TEST_CASE("sweep over two lambdas emits one row per lambda") {
  TempDir tmp;
  run_suite(small_suite(tmp.path));
  run_pretrain(small_pretrain(tmp.path));
  GenPairsArgs gen;
  gen.model = tmp.path / "pretrain" / "model";
  gen.tasks = tmp.path / "suite" / "tasks.jsonl";
  gen.out = tmp.path / "pairs";
  run_gen_pairs(gen);

  SweepArgs sweep;
  sweep.model = tmp.path / "pretrain" / "model";
  sweep.pairs = tmp.path / "pairs" / "pairs.jsonl";
  sweep.tasks = tmp.path / "suite" / "tasks.jsonl";
  sweep.probes = tmp.path / "suite" / "probes.jsonl";
  sweep.out = tmp.path / "sweep";
  sweep.steps = 10;
  sweep.lambdas = {1.0, 1.5};
  const std::vector<SweepRow> rows = run_sweep_lambda(sweep);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].lambda == 1.0);
  CHECK(rows[1].lambda == 1.5);
  CHECK(line_count(tmp.path / "sweep" / "sweep.csv") == 3);  // header + 2 rows
  CHECK(fs::exists(tmp.path / "sweep" / "lambda_1" / "trajectory.csv"));
  CHECK(fs::exists(tmp.path / "sweep" / "lambda_1.5" / "trajectory.csv"));

  // grid-order independence: a single-lambda sweep reproduces the same row
  SweepArgs single = sweep;
  single.out = tmp.path / "sweep_single";
  single.lambdas = {1.5};
  const std::vector<SweepRow> one = run_sweep_lambda(single);
  REQUIRE(one.size() == 1);
  CHECK(one[0].span_em == rows[1].span_em);
  CHECK(one[0].mean_dp_zc == rows[1].mean_dp_zc);

  SweepArgs bad = sweep;
  bad.out = tmp.path / "sweep_bad";
  bad.lambdas = {0.9};
  CHECK_THROWS_AS(run_sweep_lambda(bad), config_error);
}

#ifdef SSFO_CLI_PATH
TEST_CASE("cli exit codes: 0 on success, 1 on validation error, 2 on io error") {
  TempDir tmp;
  const std::string cli = SSFO_CLI_PATH;
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
  };
  CHECK(run("suite --seed 17 --n-proverbs 10 --vocab-size 48 --model-dim 8 "
            "--tasks-per-proverb 2 --out " +
            (tmp.path / "suite").string()) == 0);
  // validation: n_proverbs below the minimum
  CHECK(run("suite --seed 17 --n-proverbs 3 --out " + (tmp.path / "s2").string()) == 1);
  // io: missing prerequisite files
  CHECK(run("align --model " + (tmp.path / "missing/model").string() + " --pairs " +
            (tmp.path / "missing/pairs.jsonl").string() + " --out " +
            (tmp.path / "a").string()) == 2);
  // config file provides values, flags win
  {
    std::ofstream cfg(tmp.path / "suite.cfg");
    cfg << "n-proverbs=10\nvocab-size=48\nmodel-dim=8\ntasks-per-proverb=2\n";
  }
  CHECK(run("suite --seed 17 --config " + (tmp.path / "suite.cfg").string() +
            " --out " + (tmp.path / "s3").string()) == 0);
  CHECK(io::read_file(tmp.path / "suite" / "corpus.jsonl") ==
        io::read_file(tmp.path / "s3" / "corpus.jsonl"));
}
#endif
