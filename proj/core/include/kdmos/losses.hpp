#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "kdmos/bev.hpp"
#include "kdmos/grid.hpp"

namespace kdmos {

using Logits = std::array<double, kNumClasses>;
using NonTargetProbs = std::array<double, kNumClasses - 1>;

/// Per-cell class scores, cell-major (row, then column) with the class index
/// fastest, plus a validity mask.
class LogitGrid {
 public:
  LogitGrid() = default;
  LogitGrid(int rows, int cols, double fill = 0.0);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t num_cells() const noexcept { return valid.size(); }

  Logits cell(std::size_t i) const;
  void set_cell(std::size_t i, const Logits& z);
  std::span<double> cell_span(std::size_t i) { return {scores.data() + i * kNumClasses, kNumClasses}; }

  bool same_shape(const LogitGrid& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }
  friend bool operator==(const LogitGrid&, const LogitGrid&) = default;

  std::vector<double> scores;
  Grid<std::uint8_t> valid;

 private:
  int rows_ = 0;
  int cols_ = 0;
};

enum class TckdScope {
  MovingOnly,  // decoupled class distillation
  AllClasses,  // plain decoupled KD applied to every class
};

struct DistillConfig {
  double temperature = 1.0;
  double beta = 1.0;
  double gamma = 0.25;
  ClassId moving_class = kMoving;
  double weight_floor = 0.0;  // <= 0 selects 1 / #valid cells
  double prob_floor = 1e-12;
  TckdScope tckd_scope = TckdScope::MovingOnly;

  void validate() const;
};

struct LossResult {
  double value = 0.0;
  LogitGrid grad;  // d value / d student logits; zero at unused cells
};

struct FrameClassWeights {
  std::array<double, kNumClasses> w{};
};

/// Value and gradient w.r.t. the student logits for one cell.
struct CellLoss {
  double value = 0.0;
  Logits grad{};
};

Logits softmax_probs(const Logits& z, double tau = 1.0);
/// (p_t, p_{\t}), the binary target/non-target split.
std::pair<double, double> target_split(const Logits& p, int t);
/// Softmax over the non-target classes, in class order with t skipped.
NonTargetProbs nontarget_probs(const Logits& z, int t, double tau = 1.0);

double kd_kl(const Logits& z_teacher, const Logits& z_student, double tau = 1.0,
             double prob_floor = 1e-12);
double tckd(const Logits& z_teacher, const Logits& z_student, int t, double tau = 1.0,
            double prob_floor = 1e-12);
double nckd(const Logits& z_teacher, const Logits& z_student, int t, double tau = 1.0,
            double prob_floor = 1e-12);
double dcd(const Logits& z_teacher, const Logits& z_student, int t, const DistillConfig& cfg);

CellLoss kd_kl_grad(const Logits& z_teacher, const Logits& z_student, double tau = 1.0,
                    double prob_floor = 1e-12);
CellLoss tckd_grad(const Logits& z_teacher, const Logits& z_student, int t, double tau = 1.0,
                   double prob_floor = 1e-12);
CellLoss nckd_grad(const Logits& z_teacher, const Logits& z_student, int t, double tau = 1.0,
                   double prob_floor = 1e-12);
CellLoss dcd_grad(const Logits& z_teacher, const Logits& z_student, int t,
                  const DistillConfig& cfg);

FrameClassWeights frame_weights(const CellLabelGrid& labels, const DistillConfig& cfg);

/// Mean over participating cells of dcd / w[label], times tau² when tau != 1.
/// A cell participates when it is valid in the student grid and the labels.
LossResult wdcd_frame(const LogitGrid& teacher, const LogitGrid& student,
                      const CellLabelGrid& labels, const DistillConfig& cfg);

LossResult weighted_cross_entropy(const LogitGrid& student, const CellLabelGrid& labels,
                                  std::span<const double> class_weights);

/// Multi-class Lovász-Softmax averaged over the listed classes that are
/// present among the participating cells.
LossResult lovasz_softmax(const LogitGrid& student, const CellLabelGrid& labels,
                          std::span<const ClassId> classes);

struct TotalLoss {
  LossResult total;
  double wce = 0.0;
  double lovasz = 0.0;
  double wdcd = 0.0;
};

/// wce + lovasz + gamma * wdcd. With no teacher or gamma == 0 the
/// distillation term is skipped entirely.
TotalLoss total_loss(const LogitGrid& student, const LogitGrid* teacher,
                     const CellLabelGrid& labels, const DistillConfig& cfg,
                     std::span<const double> class_weights,
                     std::span<const ClassId> lovasz_classes);

inline constexpr std::array<ClassId, kNumClasses> kAllClasses{0, 1, 2, 3};

}  // namespace kdmos
