#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "kdmos/app/commands.hpp"
#include "kdmos/app/run_config.hpp"
#include "kdmos/error.hpp"

namespace fs = std::filesystem;
using namespace kdmos::app;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> overrides;
  int threads = 1;
};

RunConfig resolve_config(const Globals& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig{} : RunConfig::load(g.config_path);
  for (const auto& kv : g.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw kdmos::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving-object segmentation on BEV motion images with class-decoupled distillation"};
  app.require_subcommand(1);

  Globals g;
  app.add_option("-c,--config", g.config_path, "key = value config file");
  app.add_option("--set", g.overrides, "override one config key (key=value), repeatable");
  app.add_option("-j,--threads", g.threads, "worker threads")->check(CLI::Range(1, 256));

  SynthGenOptions synth;
  auto* c_synth = app.add_subcommand("synth-gen", "write a synthetic KITTI-layout sequence");
  c_synth->add_option("out_dir", synth.out_dir)->required();
  c_synth->add_option("--sequences", synth.sequences, "number of sequences (seeds seed, seed+1, ...)");

  ProjectOptions project;
  auto* c_project = app.add_subcommand("project", "write motion tensors and cell labels per frame");
  c_project->add_option("seq_dir", project.seq_dir)->required();
  c_project->add_option("out_dir", project.out_dir)->required();
  c_project->add_flag("--render", project.render, "also write one PGM image per channel");

  TrainOptions train;
  auto* c_train = app.add_subcommand("train", "train the student network");
  c_train->add_option("seq_dirs", train.seq_dirs, "sequence directories")->required();
  c_train->add_option("-o,--out", train.out_ckpt, "output checkpoint")->required();
  c_train->add_option("--teacher", train.teacher, "none | logits:DIR | synth[:KAPPA,SIGMA]");
  c_train->add_option("--log", train.log_path, "write the epoch log here");
  int epochs = -1;
  c_train->add_option("--epochs", epochs, "shorthand for --set train.epochs=N");

  EvalOptions eval;
  auto* c_eval = app.add_subcommand("eval", "score a checkpoint on labelled sequences");
  c_eval->add_option("seq_dirs", eval.seq_dirs, "sequence directories")->required();
  c_eval->add_option("--ckpt", eval.ckpt, "checkpoint to evaluate");
  c_eval->add_flag("--oracle", eval.oracle, "score the labels against themselves");
  c_eval->add_option("-o,--metrics", eval.metrics_path, "write metrics here");

  std::string suite = "all";
  auto* c_verify = app.add_subcommand("verify", "run the numerical property suites");
  c_verify->add_option("suite", suite, "identity | gradcheck | dysample | lovasz | all");

  BenchOptions bench;
  auto* c_bench = app.add_subcommand("bench", "time projection and inference");
  c_bench->add_option("seq_dir", bench.seq_dir, "sequence directory; synthetic frames when omitted");
  c_bench->add_option("--points", bench.synthetic_points, "points per synthetic frame");
  c_bench->add_option("--frames", bench.frames, "frames to time");
  c_bench->add_option("--ckpt", bench.ckpt, "checkpoint; a fresh student when omitted");
  c_bench->add_option("-o,--out", bench.out_path, "write the report here");

  ExportOptions exp;
  auto* c_export = app.add_subcommand("export-logits", "write per-frame logits files from a checkpoint");
  c_export->add_option("--ckpt", exp.ckpt, "checkpoint")->required();
  c_export->add_option("seq_dirs", exp.seq_dirs, "sequence directories")->required();
  c_export->add_option("-o,--out", exp.out_dir, "output directory")->required();

  auto* c_config = app.add_subcommand("config", "print the resolved configuration");
  bool describe = false;
  c_config->add_flag("--describe", describe, "list every key with its meaning");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  return guarded(
      [&]() -> int {
        RunConfig cfg = resolve_config(g);
        if (epochs >= 0) cfg.epochs = epochs;
        if (*c_synth) return cmd_synth_gen(cfg, synth, std::cout);
        if (*c_project) {
          project.threads = g.threads;
          return cmd_project(cfg, project, std::cout);
        }
        if (*c_train) {
          train.threads = g.threads;
          return cmd_train(cfg, train, std::cout);
        }
        if (*c_eval) {
          if (!eval.oracle && eval.ckpt.empty()) throw kdmos::ConfigError("eval needs --ckpt or --oracle");
          eval.threads = g.threads;
          return cmd_eval(cfg, eval, std::cout);
        }
        if (*c_verify) return cmd_verify(suite, std::cout);
        if (*c_bench) {
          bench.threads = g.threads;
          return cmd_bench(cfg, bench, std::cout);
        }
        if (*c_export) {
          exp.threads = g.threads;
          return cmd_export_logits(cfg, exp, std::cout);
        }
        if (*c_config) {
          if (describe) {
            for (const auto& d : RunConfig::describe()) {
              std::cout << d.key << " = " << cfg.get(d.key) << "  # " << d.description << '\n';
            }
          } else {
            std::cout << cfg.to_text();
          }
          return kExitOk;
        }
        return kExitConfig;
      },
      std::cerr);
}
