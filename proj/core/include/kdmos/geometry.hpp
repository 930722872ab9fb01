#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kdmos/kitti_io.hpp"

namespace kdmos {

struct AlignedFrame {
  PointCloud cloud;   // in the current frame's coordinates
  int time_step = 0;  // 0 = current, k = k frames into the past
};

/// Frames ordered by increasing time_step (current first).
struct AlignedSequence {
  std::vector<AlignedFrame> frames;
};

struct SpatioTemporalPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  int t = 0;

  friend bool operator==(const SpatioTemporalPoint&, const SpatioTemporalPoint&) = default;
};

PointCloud transform_points(const PointCloud& cloud, const Pose& pose);

/// Brings frames[0..current] into frame `current`'s viewpoint via
/// T_rel = T_current⁻¹ · T_k. `window` limits how far back to go (0 = all).
AlignedSequence align_to_current(std::span<const PointCloud> frames, std::span<const Pose> poses,
                                 std::size_t current, std::size_t window = 0);

std::vector<SpatioTemporalPoint> build_4d_sequence(const AlignedSequence& seq);

}  // namespace kdmos
