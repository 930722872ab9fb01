#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kdmos/app/run_config.hpp"

namespace kdmos::app {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

/// Runs `body`, mapping library errors to exit codes and printing the
/// message to `err`.
int guarded(const std::function<int()>& body, std::ostream& err);

struct SynthGenOptions {
  std::filesystem::path out_dir;
  int sequences = 1;  // > 1 writes <out_dir>/00, 01, ... with seeds seed, seed+1, ...
};
int cmd_synth_gen(const RunConfig& cfg, const SynthGenOptions& opt, std::ostream& out);

struct ProjectOptions {
  std::filesystem::path seq_dir;
  std::filesystem::path out_dir;
  bool render = false;
  int threads = 1;
};
/// Writes <frame>.motion and <frame>.cells per full window, plus
/// render/<frame>_c<k>.pgm per channel with --render.
int cmd_project(const RunConfig& cfg, const ProjectOptions& opt, std::ostream& out);

struct TrainOptions {
  std::vector<std::filesystem::path> seq_dirs;
  std::string teacher = "none";
  std::filesystem::path out_ckpt;
  std::filesystem::path log_path;  // optional copy of the epoch log
  int threads = 1;
};
int cmd_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& out);

struct EvalOptions {
  std::vector<std::filesystem::path> seq_dirs;
  std::filesystem::path ckpt;  // ignored with oracle
  bool oracle = false;         // score the labels against themselves
  std::filesystem::path metrics_path;
  int threads = 1;
};
int cmd_eval(const RunConfig& cfg, const EvalOptions& opt, std::ostream& out);

int cmd_verify(const std::string& suite, std::ostream& out);

struct BenchOptions {
  std::filesystem::path seq_dir;         // empty: synthetic frames
  std::size_t synthetic_points = 130000;
  int frames = 20;
  std::filesystem::path ckpt;            // empty: freshly initialized student
  std::filesystem::path out_path;        // optional key=value report
  int threads = 1;
};
int cmd_bench(const RunConfig& cfg, const BenchOptions& opt, std::ostream& out);

struct ExportOptions {
  std::filesystem::path ckpt;
  std::vector<std::filesystem::path> seq_dirs;
  std::filesystem::path out_dir;  // per-sequence subdirectories when several
  int threads = 1;
};
int cmd_export_logits(const RunConfig& cfg, const ExportOptions& opt, std::ostream& out);

}  // namespace kdmos::app
