#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <span>
#include <string>

#include "kdmos/grid.hpp"

namespace kdmos {

/// 4×4 counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  std::uint64_t operator()(int truth, int pred) const { return counts_[truth][pred]; }
  std::uint64_t total() const;

  /// Adds one count per element whose truth is not in `ignore`.
  void accumulate(std::span<const ClassId> preds, std::span<const ClassId> truth,
                  std::initializer_list<ClassId> ignore = {kUnlabeled});

  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

  /// TP / (TP + FP + FN); 1.0 when the class is absent and never predicted.
  double iou(int cls) const;
  /// False when the IoU denominator is zero.
  bool iou_defined(int cls) const;

 private:
  std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses> counts_{};
};

struct MetricsReport {
  ConfusionMatrix points;
  ConfusionMatrix cells;
};

/// key=value text: moving_iou, per-class iou_<c> for points and cells,
/// absent flags and the matrix rows.
std::string format_metrics(const MetricsReport& report);
/// Parses any key=value text into a map (blank lines and `#` comments skipped).
std::map<std::string, std::string> parse_key_values(const std::string& text);
void write_metrics(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace kdmos
