#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "kdmos/grid.hpp"

namespace kdmos {

/// One LiDAR return. Coordinates are held in float64 so rigid transforms
/// round-trip; on disk they are float32.
struct Point {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  float intensity = 0.0f;

  friend bool operator==(const Point&, const Point&) = default;
};

struct PointCloud {
  std::vector<Point> points;
  std::uint32_t frame_id = 0;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;
};

/// Raw SemanticKITTI label words: low 16 bits semantic id, high 16 bits instance id.
struct LabelArray {
  std::vector<std::uint32_t> raw;

  std::size_t size() const noexcept { return raw.size(); }
  friend bool operator==(const LabelArray&, const LabelArray&) = default;
};

constexpr std::uint16_t semantic_id(std::uint32_t raw) noexcept {
  return static_cast<std::uint16_t>(raw & 0xFFFFu);
}
constexpr std::uint16_t instance_id(std::uint32_t raw) noexcept {
  return static_cast<std::uint16_t>(raw >> 16);
}
constexpr std::uint32_t make_label(std::uint16_t semantic, std::uint16_t instance = 0) noexcept {
  return (static_cast<std::uint32_t>(instance) << 16) | semantic;
}

/// Total map from 16-bit semantic id to the four MOS classes.
class ClassMap {
 public:
  /// moving = 252..259; movable = {10,11,13,15,18,20,30,31,32};
  /// unlabeled = {0,1}; everything else static.
  static ClassMap semantic_kitti_mos();

  /// Parses an override table: lines `default <class>` and `<semantic_id> <class>`;
  /// `#` starts a comment. Ids not listed fall to the default.
  static ClassMap parse(std::string_view text);

  explicit ClassMap(ClassId fallback = kStatic);

  ClassId operator()(std::uint16_t semantic) const noexcept { return table_[semantic]; }
  void set(std::uint16_t semantic, ClassId cls);

 private:
  std::vector<ClassId> table_;
};

/// Rigid 4×4 transform. Construction rejects non-rigid matrices.
class Pose {
 public:
  Pose() : m_(Eigen::Matrix4d::Identity()) {}
  explicit Pose(const Eigen::Matrix4d& m);

  static Pose identity() { return Pose(); }
  static Pose translation(double x, double y, double z);
  static Pose rotation_z(double radians);

  const Eigen::Matrix4d& matrix() const noexcept { return m_; }
  Pose inverse() const;
  Pose operator*(const Pose& rhs) const;

  static bool is_rigid(const Eigen::Matrix4d& m, double tol = 1e-6);

 private:
  struct Unchecked {};
  Pose(const Eigen::Matrix4d& m, Unchecked) : m_(m) {}

  Eigen::Matrix4d m_;
};

struct Calibration {
  Pose tr;  // camera -> LiDAR extrinsic, as stored on the `Tr:` line
};

PointCloud parse_scan(std::span<const std::byte> bytes);
PointCloud read_scan(const std::filesystem::path& path);
std::vector<std::byte> encode_scan(const PointCloud& cloud);
void write_scan(const std::filesystem::path& path, const PointCloud& cloud);

LabelArray parse_labels(std::span<const std::byte> bytes, std::size_t expected_count);
LabelArray read_labels(const std::filesystem::path& path, std::size_t expected_count);
std::vector<std::byte> encode_labels(const LabelArray& labels);
void write_labels(const std::filesystem::path& path, const LabelArray& labels);

Calibration parse_calibration(std::string_view text);
Calibration read_calibration(const std::filesystem::path& path);
void write_calibration(const std::filesystem::path& path, const Calibration& calib);

/// Camera-frame poses (3×4 per line) converted to the LiDAR frame:
/// T_velo = Tr⁻¹ · T_cam · Tr.
std::vector<Pose> parse_poses(std::string_view text, const Calibration& calib);
std::vector<Pose> read_poses(const std::filesystem::path& path, const Calibration& calib);
/// Inverse of read_poses: converts back to the camera frame before writing.
void write_poses(const std::filesystem::path& path, std::span<const Pose> poses,
                 const Calibration& calib);

std::vector<ClassId> remap_labels(const LabelArray& labels, const ClassMap& map);

/// SemanticKITTI sequence directory (`.../sequences/NN`).
struct SequenceLayout {
  std::filesystem::path dir;

  std::filesystem::path scan(std::size_t frame) const;
  std::filesystem::path label(std::size_t frame) const;
  std::filesystem::path poses() const { return dir / "poses.txt"; }
  std::filesystem::path calib() const { return dir / "calib.txt"; }

  /// Number of consecutive scans 000000.bin, 000001.bin, ... present.
  std::size_t frame_count() const;
};

std::string frame_name(std::size_t frame);

}  // namespace kdmos
