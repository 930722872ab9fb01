#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kdmos/kitti_io.hpp"

namespace kdmos {

/// Scene of point-sprinkled discs over a sparse static background.
struct SceneConfig {
  int n_frames = 8;
  int n_moving = 2;
  int n_static_movable = 3;
  int n_static = 2000;  // background scatter points
  double radius_min = 1.0;
  double radius_max = 2.5;
  double speed_min = 0.5;  // m/frame
  double speed_max = 1.5;
  int points_per_disc = 50;
  double ego_vx = 0.0;  // m/frame
  double ego_vy = 0.0;
  double arena_radius = 40.0;
  double inner_radius = 3.0;  // keeps discs off the sensor
  double disc_z_min = -1.8;
  double disc_z_max = -0.2;
  double ground_z_min = -1.9;
  double ground_z_max = -1.7;
  std::uint64_t seed = 0;

  void validate(double r_max) const;
};

struct DiscTruth {
  ClassId cls = kMovable;
  double radius = 0.0;
  double start_x = 0.0;  // world frame, at frame 0
  double start_y = 0.0;
  double vx = 0.0;  // m/frame; zero for static discs
  double vy = 0.0;
  std::uint16_t instance = 0;

  double center_x(int frame) const { return start_x + vx * frame; }
  double center_y(int frame) const { return start_y + vy * frame; }
};

struct SyntheticSequence {
  std::vector<PointCloud> frames;  // sensor frame
  std::vector<std::vector<ClassId>> labels;
  std::vector<Pose> poses;  // sensor -> world
  std::vector<DiscTruth> discs;
  /// For each frame, the disc index of every point (-1 for background).
  std::vector<std::vector<std::int32_t>> point_disc;
};

/// Deterministic in cfg.seed. Throws ConfigError when disc placement fails
/// after 1000 rejection attempts.
SyntheticSequence gen_sequence(const SceneConfig& cfg);

/// Class -> SemanticKITTI semantic id used when emitting labels
/// (static 40 road, movable 10 car, moving 252 moving-car).
std::uint16_t semantic_for_class(ClassId cls);

/// Writes velodyne/, labels/, poses.txt and calib.txt (identity Tr) into `dir`.
void emit_kitti(const SyntheticSequence& seq, const std::filesystem::path& dir);

}  // namespace kdmos
