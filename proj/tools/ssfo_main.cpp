// Command-line front end for the faithfulness-optimization lab. Stages:
//
//   suite -> pretrain -> gen-pairs -> align -> probe / eval / sweep-lambda
//
// Every stage writes its outputs plus a manifest.json into --out. A plain
// key=value file can be passed as --config; explicit flags win over it.

#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "ssfo/errors.hpp"
#include "ssfo/pipeline.hpp"
#include "ssfo/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) {
    return "";
  }
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// key=value config file; keys are the long flag names without the leading
// dashes, '#' starts a comment. Explicit command-line flags win.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  if (path.empty()) {
    return;
  }
  std::ifstream in(path);
  if (!in) {
    throw ssfo::io_error("cannot open config file: " + path);
  }
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) {
      continue;
    }
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ssfo::config_error(path + ":" + std::to_string(line_no) +
                               ": expected key=value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || key == "config") {
      throw ssfo::config_error(path + ":" + std::to_string(line_no) + ": bad key");
    }
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw ssfo::config_error(path + ":" + std::to_string(line_no) +
                               ": unknown config key '" + key + "' for command " +
                               cmd->get_name());
    }
    if (opt->count() > 0) {
      continue;  // explicit flag wins
    }
    // comma-separated values feed vector options
    std::size_t start = 0;
    while (start <= value.size()) {
      const std::size_t comma = value.find(',', start);
      const std::string piece =
          trim(value.substr(start, comma == std::string::npos ? std::string::npos
                                                              : comma - start));
      if (!piece.empty()) {
        opt->add_result(piece);
      }
      if (comma == std::string::npos) {
        break;
      }
      start = comma + 1;
    }
    opt->run_callback();
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-supervised faithfulness optimization lab"};
  std::map<CLI::App*, std::string> config_paths;
  auto add_config_flag = [&config_paths](CLI::App* cmd) {
    cmd->add_option("--config", config_paths[cmd],
                    "key=value config file; explicit flags win");
  };
  app.set_version_flag("--version", ssfo::kVersion);
  app.require_subcommand(1);

  using ssfo::pipeline::AlignArgs;
  using ssfo::pipeline::EvalArgs;
  using ssfo::pipeline::GenPairsArgs;
  using ssfo::pipeline::PretrainArgs;
  using ssfo::pipeline::ProbeArgs;
  using ssfo::pipeline::SuiteArgs;
  using ssfo::pipeline::SweepArgs;

  SuiteArgs suite;
  CLI::App* suite_cmd = app.add_subcommand("suite", "build the synthetic trap suite");
  suite_cmd->add_option("--seed", suite.seed, "master seed")->capture_default_str();
  suite_cmd->add_option("--out", suite.out, "output directory")->required();
  suite_cmd->add_option("--n-proverbs", suite.n_proverbs)->capture_default_str();
  suite_cmd->add_option("--vocab-size", suite.vocab_size)->capture_default_str();
  suite_cmd->add_option("--model-dim", suite.model_dim)->capture_default_str();
  suite_cmd->add_option("--tasks-per-proverb", suite.tasks_per_proverb)
      ->capture_default_str();
  add_config_flag(suite_cmd);

  PretrainArgs pretrain;
  CLI::App* pretrain_cmd =
      app.add_subcommand("pretrain", "MLE-train a fresh model on the suite corpus");
  pretrain_cmd->add_option("--seed", pretrain.seed)->capture_default_str();
  pretrain_cmd->add_option("--suite", pretrain.suite_dir, "suite output directory")
      ->required();
  pretrain_cmd->add_option("--out", pretrain.out)->required();
  pretrain_cmd->add_option("--steps", pretrain.steps)->capture_default_str();
  pretrain_cmd->add_option("--learning-rate", pretrain.learning_rate)
      ->capture_default_str();
  pretrain_cmd->add_option("--init-std", pretrain.init_std)->capture_default_str();
  pretrain_cmd->add_option("--model-dim", pretrain.model_dim,
                           "0 = use the suite's recommendation")
      ->capture_default_str();
  add_config_flag(pretrain_cmd);

  GenPairsArgs gen;
  CLI::App* gen_cmd =
      app.add_subcommand("gen-pairs", "sample self-supervised preference pairs");
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--model", gen.model, "checkpoint stem (no extension)")->required();
  gen_cmd->add_option("--tasks", gen.tasks, "tasks.jsonl")->required();
  gen_cmd->add_option("--out", gen.out)->required();
  gen_cmd->add_option("--temperature", gen.temperature)->capture_default_str();
  gen_cmd->add_option("--max-len", gen.max_len)->capture_default_str();
  add_config_flag(gen_cmd);

  AlignArgs align;
  CLI::App* align_cmd = app.add_subcommand("align", "preference-optimize a checkpoint");
  align_cmd->add_option("--seed", align.seed)->capture_default_str();
  align_cmd->add_option("--model", align.model, "pretrained checkpoint stem")->required();
  align_cmd->add_option("--pairs", align.pairs, "pairs.jsonl")->required();
  align_cmd->add_option("--out", align.out)->required();
  align_cmd->add_option("--mode", align.mode, "dpo | ssfo | ssfo_lambda")
      ->capture_default_str();
  align_cmd->add_option("--learning-rate", align.learning_rate)->capture_default_str();
  align_cmd->add_option("--steps", align.steps)->capture_default_str();
  align_cmd->add_option("--batch-size", align.batch_size, "0 = full batch")
      ->capture_default_str();
  align_cmd->add_option("--beta", align.beta)->capture_default_str();
  align_cmd->add_option("--lambda", align.lambda)->capture_default_str();
  align_cmd->add_option("--mask", align.mask, "all | unembedding_only | body_only")
      ->capture_default_str();
  add_config_flag(align_cmd);

  ProbeArgs probe;
  CLI::App* probe_cmd =
      app.add_subcommand("probe", "displacement report between two checkpoints");
  probe_cmd->add_option("--before", probe.before, "checkpoint stem")->required();
  probe_cmd->add_option("--after", probe.after, "checkpoint stem")->required();
  probe_cmd->add_option("--probes", probe.probes, "probes.jsonl")->required();
  probe_cmd->add_option("--out", probe.out)->required();
  probe_cmd->add_option("--beta", probe.beta)->capture_default_str();
  probe_cmd->add_option("--lambda", probe.lambda)->capture_default_str();
  probe_cmd->add_option("--eta", probe.eta)->capture_default_str();
  add_config_flag(probe_cmd);

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "text metric evaluation");
  eval_cmd->add_option("--model", eval.model, "checkpoint stem (with --tasks)");
  eval_cmd->add_option("--tasks", eval.tasks, "tasks.jsonl (greedy decoding)");
  eval_cmd->add_option("--records", eval.records, "pre-built records.jsonl");
  eval_cmd->add_option("--out", eval.out)->required();
  eval_cmd->add_option("--max-len", eval.max_len)->capture_default_str();
  add_config_flag(eval_cmd);

  SweepArgs sweep;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep-lambda", "align once per lambda and tabulate span EM");
  sweep_cmd->add_option("--seed", sweep.seed)->capture_default_str();
  sweep_cmd->add_option("--model", sweep.model, "pretrained checkpoint stem")->required();
  sweep_cmd->add_option("--pairs", sweep.pairs)->required();
  sweep_cmd->add_option("--tasks", sweep.tasks)->required();
  sweep_cmd->add_option("--probes", sweep.probes)->required();
  sweep_cmd->add_option("--out", sweep.out)->required();
  sweep_cmd->add_option("--lambdas", sweep.lambdas, "grid of lambda values")
      ->capture_default_str();
  sweep_cmd->add_option("--learning-rate", sweep.learning_rate)->capture_default_str();
  sweep_cmd->add_option("--steps", sweep.steps)->capture_default_str();
  sweep_cmd->add_option("--batch-size", sweep.batch_size)->capture_default_str();
  sweep_cmd->add_option("--beta", sweep.beta)->capture_default_str();
  sweep_cmd->add_option("--eta", sweep.eta)->capture_default_str();
  sweep_cmd->add_option("--max-len", sweep.max_len)->capture_default_str();
  add_config_flag(sweep_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    for (auto& [cmd, path] : config_paths) {
      if (cmd->parsed()) {
        apply_config_file(cmd, path);
      }
    }
    if (suite_cmd->parsed()) {
      ssfo::pipeline::run_suite(suite);
    } else if (pretrain_cmd->parsed()) {
      ssfo::pipeline::run_pretrain(pretrain);
    } else if (gen_cmd->parsed()) {
      ssfo::pipeline::run_gen_pairs(gen);
    } else if (align_cmd->parsed()) {
      ssfo::pipeline::run_align(align);
    } else if (probe_cmd->parsed()) {
      ssfo::pipeline::run_probe(probe);
    } else if (eval_cmd->parsed()) {
      ssfo::pipeline::run_eval(eval);
    } else if (sweep_cmd->parsed()) {
      ssfo::pipeline::run_sweep_lambda(sweep);
    }
  } catch (const ssfo::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
