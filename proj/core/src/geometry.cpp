#include "kdmos/geometry.hpp"

#include <string>

#include "kdmos/error.hpp"

namespace kdmos {

PointCloud transform_points(const PointCloud& cloud, const Pose& pose) {
  const Eigen::Matrix4d& m = pose.matrix();
  PointCloud out;
  out.frame_id = cloud.frame_id;
  out.points.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud.points[i];
    Point& q = out.points[i];
    // w stays 1 for rigid transforms; no de-homogenizing divide needed
    q.x = m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2) * p.z + m(0, 3);
    q.y = m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2) * p.z + m(1, 3);
    q.z = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2) * p.z + m(2, 3);
    q.intensity = p.intensity;
  }
  return out;
}

AlignedSequence align_to_current(std::span<const PointCloud> frames, std::span<const Pose> poses,
                                 std::size_t current, std::size_t window) {
  if (frames.size() != poses.size()) {
    throw ShapeMismatch("frames/poses length " + std::to_string(frames.size()) + " vs " +
                        std::to_string(poses.size()));
  }
  if (current >= frames.size()) {
    throw IndexOutOfRange("current index " + std::to_string(current) + " >= " +
                          std::to_string(frames.size()));
  }
  const std::size_t count = window == 0 ? current + 1 : std::min(window, current + 1);
  const Pose to_current = poses[current].inverse();

  AlignedSequence seq;
  seq.frames.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    const std::size_t k = current - t;
    AlignedFrame f;
    f.time_step = static_cast<int>(t);
    f.cloud = t == 0 ? frames[k] : transform_points(frames[k], to_current * poses[k]);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

std::vector<SpatioTemporalPoint> build_4d_sequence(const AlignedSequence& seq) {
  std::size_t total = 0;
  for (const auto& f : seq.frames) total += f.cloud.size();
  std::vector<SpatioTemporalPoint> out;
  out.reserve(total);
  for (const auto& f : seq.frames) {
    for (const Point& p : f.cloud.points) out.push_back({p.x, p.y, p.z, f.time_step});
  }
  return out;
}

}  // namespace kdmos
