#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "kdmos/geometry.hpp"
#include "kdmos/grid.hpp"
#include "kdmos/kitti_io.hpp"
#include "kdmos/tensor.hpp"

namespace kdmos {

enum class GridMode { Polar, Cartesian };

/// Bird's-eye-view lattice. Rows index range (or x), columns index angle
/// (or y). Points are kept only for r < r_max and z_min < z < z_max.
struct BevGrid {
  GridMode mode = GridMode::Polar;
  int n_radial = 32;   // n_x in cartesian mode
  int n_angular = 360;  // n_y in cartesian mode
  double r_max = 50.0;
  double z_min = -4.0;
  double z_max = 2.0;

  int rows() const noexcept { return n_radial; }
  int cols() const noexcept { return n_angular; }
  std::size_t cells() const noexcept { return static_cast<std::size_t>(n_radial) * n_angular; }

  /// Throws ConfigError when the invariants do not hold.
  void validate() const;
};

struct CellIndex {
  int u = 0;
  int v = 0;
  friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Cell index for one point, or nullopt when it falls outside the grid.
std::optional<CellIndex> locate(const Point& p, const BevGrid& grid);

/// Point <-> cell association. cell_to_points is stored CSR-style, with the
/// point indices of each cell in ascending order.
class CellIndexMap {
 public:
  CellIndexMap() = default;
  CellIndexMap(int rows, int cols, std::vector<std::int32_t> point_to_cell);

  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  std::size_t num_points() const noexcept { return point_to_cell_.size(); }
  std::size_t num_cells() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }

  /// Flat cell index (u * cols + v) or -1 when unassigned.
  std::int32_t cell_of(std::size_t point) const { return point_to_cell_[point]; }
  std::optional<CellIndex> cell_index_of(std::size_t point) const;
  std::span<const std::uint32_t> points_in(std::size_t cell) const;
  std::size_t assigned_count() const noexcept { return indices_.size(); }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::int32_t> point_to_cell_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint32_t> indices_;
};

struct HeightImage {
  Grid<double> values;          // max z - min z per cell, 0 where empty
  Grid<std::uint8_t> occupancy;  // 1 where at least one in-range point
};

enum class WindowAggregate { Max, Mean, Latest };

struct MotionOptions {
  WindowAggregate aggregate = WindowAggregate::Max;
  /// Channel k pairs frame k with frame k+n2 instead of the two window images.
  bool per_frame_residuals = false;
  /// Append the per-frame height images after the residual channels.
  bool appearance = false;
};

struct MotionTensor {
  Tensor3 channels;  // N × H × W (2N with appearance channels)
  int n2 = 0;

  friend bool operator==(const MotionTensor&, const MotionTensor&) = default;
};

struct CellLabelGrid {
  Grid<ClassId> labels;
  Grid<std::uint8_t> valid;

  std::size_t valid_count() const;

  friend bool operator==(const CellLabelGrid&, const CellLabelGrid&) = default;
};

CellIndexMap project_to_cells(const PointCloud& cloud, const BevGrid& grid);

HeightImage height_image(const CellIndexMap& cells, const PointCloud& cloud, const BevGrid& grid);

/// q1 holds the recent window (current frame first), q2 the older one.
MotionTensor motion_residuals(std::span<const HeightImage> q1, std::span<const HeightImage> q2,
                              const MotionOptions& options = {});

/// Majority vote per occupied cell; ties go to the higher class id
/// (moving > movable > static > unlabeled).
CellLabelGrid cell_labels(const CellIndexMap& cells, std::span<const ClassId> point_classes);

/// Unassigned points get class 0.
std::vector<ClassId> back_project(const Grid<ClassId>& cell_preds, const CellIndexMap& cells);

/// Grid, window size and channel layout of the student input.
struct BevConfig {
  BevGrid grid;
  int n_frames = 8;
  int n2 = 4;
  MotionOptions motion;

  int input_channels() const noexcept { return motion.appearance ? 2 * n_frames : n_frames; }
  void validate() const;
};

/// Projects each frame of an aligned window (current first) and assembles
/// the residual tensor. Frames are projected on up to `threads` workers.
MotionTensor build_motion_tensor(const AlignedSequence& window, const BevConfig& config,
                                 int threads = 1);

/// 8-bit binary PGM with linear min-max normalization; the range is written
/// to `<path>.txt` as `min=` / `max=` lines.
void render_pgm(const std::filesystem::path& path, std::span<const double> values, int rows,
                int cols);

}  // namespace kdmos
