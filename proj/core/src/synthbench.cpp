#include "kdmos/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "kdmos/error.hpp"

namespace kdmos {

namespace {

constexpr int kMaxAttempts = 1000;
constexpr double kDiscMargin = 0.5;
constexpr double kGroundMargin = 0.2;

double segment_point_distance(double ax, double ay, double bx, double by, double px, double py) {
  const double dx = bx - ax;
  const double dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(ax + t * dx - px, ay + t * dy - py);
}

struct Sprinkle {
  std::vector<double> dx, dy, z;
};

}  // namespace

void SceneConfig::validate(double r_max) const {
  if (n_frames < 0 || n_moving < 0 || n_static_movable < 0 || n_static < 0 || points_per_disc < 0) {
    throw ConfigError("scene counts must be >= 0");
  }
  if (!(radius_min > 0.0 && radius_min <= radius_max)) throw ConfigError("bad disc radius range");
  if (!(speed_min >= 0.0 && speed_min <= speed_max)) throw ConfigError("bad speed range");
  if (!(arena_radius > 0.0) || arena_radius > r_max) {
    throw ConfigError("arena radius must be in (0, r_max]");
  }
  if (!(inner_radius >= 0.0 && inner_radius < arena_radius)) throw ConfigError("bad inner radius");
  if (!(disc_z_min < disc_z_max) || !(ground_z_min <= ground_z_max)) throw ConfigError("bad z bands");
}

SyntheticSequence gen_sequence(const SceneConfig& cfg) {
  cfg.validate(cfg.arena_radius);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SyntheticSequence seq;
  const double two_pi = 2.0 * std::numbers::pi;
  const int last = std::max(cfg.n_frames - 1, 0);

  // Static movable discs.
  std::uint16_t instance = 1;
  for (int i = 0; i < cfg.n_static_movable; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      DiscTruth d;
      d.cls = kMovable;
      d.radius = uniform(cfg.radius_min, cfg.radius_max);
      const double lo = cfg.inner_radius + d.radius;
      const double hi = cfg.arena_radius - d.radius;
      if (hi <= lo) break;
      const double r = std::sqrt(uniform(lo * lo, hi * hi));
      const double th = uniform(0.0, two_pi);
      d.start_x = r * std::cos(th);
      d.start_y = r * std::sin(th);
      placed = std::all_of(seq.discs.begin(), seq.discs.end(), [&](const DiscTruth& o) {
        return std::hypot(o.start_x - d.start_x, o.start_y - d.start_y) >=
               o.radius + d.radius + kDiscMargin;
      });
      if (placed) {
        d.instance = instance++;
        seq.discs.push_back(d);
      }
    }
    if (!placed) throw ConfigError("could not place static disc " + std::to_string(i));
  }
  const std::size_t n_static_discs = seq.discs.size();

  // Moving discs: the whole trajectory stays inside the arena and clear of
  // the static discs.
  for (int i = 0; i < cfg.n_moving; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      DiscTruth d;
      d.cls = kMoving;
      d.radius = uniform(cfg.radius_min, cfg.radius_max);
      const double lo = cfg.inner_radius + d.radius;
      const double hi = cfg.arena_radius - d.radius;
      if (hi <= lo) break;
      const double r = std::sqrt(uniform(lo * lo, hi * hi));
      const double th = uniform(0.0, two_pi);
      const double speed = uniform(cfg.speed_min, cfg.speed_max);
      const double heading = uniform(0.0, two_pi);
      d.start_x = r * std::cos(th);
      d.start_y = r * std::sin(th);
      d.vx = speed * std::cos(heading);
      d.vy = speed * std::sin(heading);
      const double ex = d.center_x(last);
      const double ey = d.center_y(last);
      if (std::hypot(ex, ey) > hi) continue;
      if (segment_point_distance(d.start_x, d.start_y, ex, ey, 0.0, 0.0) < lo) continue;
      placed = std::all_of(seq.discs.begin(), seq.discs.begin() + static_cast<std::ptrdiff_t>(n_static_discs),
                           [&](const DiscTruth& o) {
                             return segment_point_distance(d.start_x, d.start_y, ex, ey, o.start_x,
                                                           o.start_y) >=
                                    o.radius + d.radius + kDiscMargin;
                           });
      if (placed) {
        d.instance = instance++;
        seq.discs.push_back(d);
      }
    }
    if (!placed) throw ConfigError("could not place moving disc " + std::to_string(i));
  }

  // Fixed per-disc point sprinkles.
  std::vector<Sprinkle> sprinkles(seq.discs.size());
  for (std::size_t k = 0; k < seq.discs.size(); ++k) {
    auto& s = sprinkles[k];
    for (int p = 0; p < cfg.points_per_disc; ++p) {
      const double r = seq.discs[k].radius * std::sqrt(unit(rng));
      const double th = uniform(0.0, two_pi);
      s.dx.push_back(r * std::cos(th));
      s.dy.push_back(r * std::sin(th));
      s.z.push_back(uniform(cfg.disc_z_min, cfg.disc_z_max));
    }
  }

  // Background scatter, fixed in the world, clear of static disc footprints.
  std::vector<Point> ground;
  ground.reserve(static_cast<std::size_t>(cfg.n_static));
  for (int i = 0; i < cfg.n_static; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const double r = cfg.arena_radius * std::sqrt(unit(rng));
      const double th = uniform(0.0, two_pi);
      Point p{r * std::cos(th), r * std::sin(th), uniform(cfg.ground_z_min, cfg.ground_z_max), 0.2f};
      placed = std::none_of(seq.discs.begin(), seq.discs.begin() + static_cast<std::ptrdiff_t>(n_static_discs),
                            [&](const DiscTruth& o) {
                              return std::hypot(p.x - o.start_x, p.y - o.start_y) <
                                     o.radius + kGroundMargin;
                            });
      if (placed) ground.push_back(p);
    }
    if (!placed) throw ConfigError("could not place background point " + std::to_string(i));
  }

  for (int f = 0; f < cfg.n_frames; ++f) {
    const double ex = cfg.ego_vx * f;
    const double ey = cfg.ego_vy * f;
    seq.poses.push_back(Pose::translation(ex, ey, 0.0));

    PointCloud cloud;
    cloud.frame_id = static_cast<std::uint32_t>(f);
    std::vector<ClassId> labels;
    std::vector<std::int32_t> owner;
    for (const Point& g : ground) {
      cloud.points.push_back({g.x - ex, g.y - ey, g.z, g.intensity});
      labels.push_back(kStatic);
      owner.push_back(-1);
    }
    for (std::size_t k = 0; k < seq.discs.size(); ++k) {
      const DiscTruth& d = seq.discs[k];
      const auto& s = sprinkles[k];
      const double cx = d.center_x(f) - ex;
      const double cy = d.center_y(f) - ey;
      for (std::size_t p = 0; p < s.dx.size(); ++p) {
        cloud.points.push_back({cx + s.dx[p], cy + s.dy[p], s.z[p], 0.5f});
        labels.push_back(d.cls);
        owner.push_back(static_cast<std::int32_t>(k));
      }
    }
    seq.frames.push_back(std::move(cloud));
    seq.labels.push_back(std::move(labels));
    seq.point_disc.push_back(std::move(owner));
  }
  return seq;
}

std::uint16_t semantic_for_class(ClassId cls) {
  switch (cls) {
    case kUnlabeled:
      return 0;
    case kStatic:
      return 40;
    case kMovable:
      return 10;
    case kMoving:
      return 252;
    default:
      throw ConfigError("class id out of range");
  }
}

void emit_kitti(const SyntheticSequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "velodyne");
  std::filesystem::create_directories(dir / "labels");
  const SequenceLayout layout{dir};
  const Calibration calib{};
  write_calibration(layout.calib(), calib);
  write_poses(layout.poses(), seq.poses, calib);
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    write_scan(layout.scan(f), seq.frames[f]);
    LabelArray labels;
    labels.raw.reserve(seq.labels[f].size());
    for (std::size_t p = 0; p < seq.labels[f].size(); ++p) {
      const auto disc = seq.point_disc[f][p];
      const std::uint16_t inst = disc >= 0 ? seq.discs[static_cast<std::size_t>(disc)].instance : 0;
      labels.raw.push_back(make_label(semantic_for_class(seq.labels[f][p]), inst));
    }
    write_labels(layout.label(f), labels);
  }
}

}  // namespace kdmos
