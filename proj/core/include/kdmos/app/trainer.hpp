#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kdmos/app/dataset.hpp"
#include "kdmos/app/run_config.hpp"
#include "kdmos/eval.hpp"
#include "kdmos/losses.hpp"
#include "kdmos/nnet/network.hpp"

namespace kdmos::app {

/// Where distillation targets come from.
struct TeacherSpec {
  enum class Kind { None, Logits, Synth };
  Kind kind = Kind::None;
  std::filesystem::path logits_dir;
  double kappa = 10.0;
  double sigma = 1.0;

  /// `none`, `logits:DIR`, `synth` or `synth:KAPPA,SIGMA`. Bare `synth`
  /// takes kappa/sigma from the config.
  static TeacherSpec parse(std::string_view text, const RunConfig& cfg);
  std::string to_string() const;
};

/// Frozen teacher logits for every sample, in sample order. Logits teachers
/// read `<dir>/<frame>.logits`; with several sequences, `<dir>/<seq name>/`.
std::vector<LogitGrid> teacher_targets(const TeacherSpec& teacher,
                                       std::span<const LoadedSequence> sequences,
                                       std::span<const Sample> samples, std::uint64_t seed);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;  // means over the epoch's frames
  double wce = 0.0;
  double lovasz = 0.0;
  double wdcd = 0.0;
  double heldout_moving_iou = 0.0;
  bool heldout_absent = true;
};

std::string format_epoch(const EpochStats& s);

struct TrainResult {
  nn::Network net;
  std::vector<EpochStats> epochs;
};

/// Mini-batch SGD on `train`. `teacher` is empty (no distillation) or holds
/// one grid per training sample. Frames of a batch run on up to `threads`
/// network replicas; their gradients are averaged in frame order, so the
/// result does not depend on the thread count. Throws NonFiniteLoss naming
/// the frame when a loss is not finite.
TrainResult train_student(std::span<const Sample> train, std::span<const LogitGrid> teacher,
                          std::span<const Sample> heldout, const RunConfig& cfg, int threads = 1,
                          std::ostream* log = nullptr);

/// Cell- and point-level confusion of the network's predictions.
MetricsReport evaluate(const nn::Network& net, std::span<const Sample> samples, int threads = 1);

/// Ground truth scored against itself (cell labels and point labels).
MetricsReport evaluate_oracle(std::span<const Sample> samples);

/// Splits samples into (train, heldout): with several sequences the last
/// ceil(fraction * n) sequences are held out (at least one stays for
/// training), otherwise the last ceil(fraction * samples) frames.
std::pair<std::vector<Sample>, std::vector<Sample>> split_holdout(std::vector<Sample> samples,
                                                                  std::size_t n_sequences,
                                                                  double fraction);

}  // namespace kdmos::app
