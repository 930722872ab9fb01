#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kdmos/bev.hpp"
#include "kdmos/losses.hpp"
#include "kdmos/nnet/network.hpp"
#include "kdmos/nnet/sgd.hpp"
#include "kdmos/synthbench.hpp"

namespace kdmos::app {

/// Every knob of a run, read from flat `key = value` text. Unknown keys are
/// rejected; every key has a default (see RunConfig::describe()).
struct RunConfig {
  BevConfig bev;
  DistillConfig distill;
  SceneConfig scene;
  int model_width = 16;
  double offset_factor = 0.25;
  nn::SgdConfig optim;
  int epochs = 30;  // full-scale schedule is 150
  int batch_size = 8;
  double holdout_fraction = 0.25;
  std::array<double, kNumClasses> wce_weights{1.0, 1.0, 1.0, 1.0};
  std::vector<ClassId> lovasz_classes{0, 1, 2, 3};
  double teacher_kappa = 10.0;
  double teacher_sigma = 1.0;
  std::string class_map;  // empty = SemanticKITTI-MOS default
  std::uint64_t seed = 0;

  /// Applies one assignment; throws ConfigError for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  void validate() const;

  nn::ArchSpec student_arch() const;
  nn::ArchSpec teacher_arch() const;

  /// Canonical text form, one `key = value` per line, in documentation order.
  std::string to_text() const;

  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  struct KeyDoc {
    std::string key;
    std::string description;
  };
  static const std::vector<KeyDoc>& describe();
};

}  // namespace kdmos::app
