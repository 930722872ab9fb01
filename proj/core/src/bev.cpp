#include "kdmos/bev.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"
#include "kdmos/parallel.hpp"

namespace kdmos {

void BevGrid::validate() const {
  if (n_radial < 1 || n_angular < 1) throw ConfigError("grid dimensions must be >= 1");
  if (!(r_max > 0.0)) throw ConfigError("r_max must be > 0");
  if (!(z_min < z_max)) throw ConfigError("z_min must be < z_max");
}

void BevConfig::validate() const {
  grid.validate();
  if (n_frames < 2) throw ConfigError("window needs at least 2 frames");
  if (n2 < 1 || n2 >= n_frames) throw ConfigError("n2 must satisfy 1 <= n2 < n_frames");
  if (motion.per_frame_residuals && 2 * n2 != n_frames) {
    throw ConfigError("per-frame residuals need equal windows (n_frames = 2 * n2)");
  }
}

std::optional<CellIndex> locate(const Point& p, const BevGrid& grid) {
  if (!(p.z > grid.z_min && p.z < grid.z_max)) return std::nullopt;
  if (grid.mode == GridMode::Polar) {
    const double r = std::sqrt(p.x * p.x + p.y * p.y);
    if (!(r < grid.r_max)) return std::nullopt;
    int u = static_cast<int>(std::floor(r / grid.r_max * grid.n_radial));
    u = std::clamp(u, 0, grid.n_radial - 1);
    const double phi = std::atan2(p.y, p.x) + std::numbers::pi;
    int v = static_cast<int>(std::floor(phi / (2.0 * std::numbers::pi) * grid.n_angular));
    v = std::clamp(v, 0, grid.n_angular - 1);
    return CellIndex{u, v};
  }
  if (!(p.x >= -grid.r_max && p.x < grid.r_max && p.y >= -grid.r_max && p.y < grid.r_max)) {
    return std::nullopt;
  }
  const double span = 2.0 * grid.r_max;
  int u = static_cast<int>(std::floor((p.x + grid.r_max) / span * grid.n_radial));
  int v = static_cast<int>(std::floor((p.y + grid.r_max) / span * grid.n_angular));
  return CellIndex{std::clamp(u, 0, grid.n_radial - 1), std::clamp(v, 0, grid.n_angular - 1)};
}

// ------------------------------------------------------------ CellIndexMap

CellIndexMap::CellIndexMap(int rows, int cols, std::vector<std::int32_t> point_to_cell)
    : rows_(rows), cols_(cols), point_to_cell_(std::move(point_to_cell)) {
  const std::size_t n_cells = num_cells();
  offsets_.assign(n_cells + 1, 0);
  for (auto c : point_to_cell_) {
    if (c >= 0) ++offsets_[static_cast<std::size_t>(c) + 1];
  }
  for (std::size_t c = 0; c < n_cells; ++c) offsets_[c + 1] += offsets_[c];
  indices_.resize(offsets_[n_cells]);
  std::vector<std::uint32_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t p = 0; p < point_to_cell_.size(); ++p) {
    const auto c = point_to_cell_[p];
    if (c >= 0) indices_[cursor[static_cast<std::size_t>(c)]++] = static_cast<std::uint32_t>(p);
  }
}

std::optional<CellIndex> CellIndexMap::cell_index_of(std::size_t point) const {
  const auto c = point_to_cell_[point];
  if (c < 0) return std::nullopt;
  return CellIndex{c / cols_, c % cols_};
}

std::span<const std::uint32_t> CellIndexMap::points_in(std::size_t cell) const {
  return {indices_.data() + offsets_[cell], offsets_[cell + 1] - offsets_[cell]};
}

std::size_t CellLabelGrid::valid_count() const {
  return static_cast<std::size_t>(std::count(valid.data().begin(), valid.data().end(), 1));
}

// -------------------------------------------------------------- projection

CellIndexMap project_to_cells(const PointCloud& cloud, const BevGrid& grid) {
  std::vector<std::int32_t> p2c(cloud.size(), -1);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (auto cell = locate(cloud.points[i], grid)) {
      p2c[i] = cell->u * grid.cols() + cell->v;
    }
  }
  return CellIndexMap(grid.rows(), grid.cols(), std::move(p2c));
}

HeightImage height_image(const CellIndexMap& cells, const PointCloud& cloud, const BevGrid& grid) {
  HeightImage img{Grid<double>(grid.rows(), grid.cols(), 0.0),
                  Grid<std::uint8_t>(grid.rows(), grid.cols(), 0)};
  if (cells.num_cells() != grid.cells() || cells.num_points() != cloud.size()) {
    throw ShapeMismatch("cell map does not match cloud/grid");
  }
  for (std::size_t c = 0; c < cells.num_cells(); ++c) {
    auto pts = cells.points_in(c);
    if (pts.empty()) continue;
    double lo = cloud.points[pts[0]].z;
    double hi = lo;
    for (auto p : pts) {
      lo = std::min(lo, cloud.points[p].z);
      hi = std::max(hi, cloud.points[p].z);
    }
    img.values[c] = hi - lo;
    img.occupancy[c] = 1;
  }
  return img;
}

namespace {

HeightImage aggregate_window(std::span<const HeightImage> frames, WindowAggregate mode) {
  const int rows = frames.front().values.rows();
  const int cols = frames.front().values.cols();
  HeightImage out{Grid<double>(rows, cols, 0.0), Grid<std::uint8_t>(rows, cols, 0)};
  const std::size_t n = out.values.size();
  for (std::size_t c = 0; c < n; ++c) {
    double acc = 0.0;
    int occupied = 0;
    for (const auto& f : frames) {
      if (!f.occupancy[c]) continue;
      const double v = f.values[c];
      switch (mode) {
        case WindowAggregate::Max:
          acc = occupied == 0 ? v : std::max(acc, v);
          break;
        case WindowAggregate::Mean:
          acc += v;
          break;
        case WindowAggregate::Latest:
          if (occupied == 0) acc = v;
          break;
      }
      ++occupied;
    }
    if (occupied == 0) continue;
    out.values[c] = mode == WindowAggregate::Mean ? acc / occupied : acc;
    out.occupancy[c] = 1;
  }
  return out;
}

void check_shapes(std::span<const HeightImage> images, int rows, int cols) {
  for (const auto& img : images) {
    if (img.values.rows() != rows || img.values.cols() != cols ||
        !img.occupancy.same_shape(img.values)) {
      throw ShapeMismatch("height images differ in shape");
    }
  }
}

}  // namespace

MotionTensor motion_residuals(std::span<const HeightImage> q1, std::span<const HeightImage> q2,
                              const MotionOptions& options) {
  if (q1.empty() || q2.empty()) throw ShapeMismatch("both windows need at least one image");
  const int rows = q1.front().values.rows();
  const int cols = q1.front().values.cols();
  check_shapes(q1, rows, cols);
  check_shapes(q2, rows, cols);
  if (options.per_frame_residuals && q1.size() != q2.size()) {
    throw ShapeMismatch("per-frame residuals need windows of equal length");
  }

  const int n2 = static_cast<int>(q1.size());
  const int n = n2 + static_cast<int>(q2.size());
  MotionTensor m;
  m.n2 = n2;
  m.channels = Tensor3(options.appearance ? 2 * n : n, rows, cols, 0.0);

  if (options.per_frame_residuals) {
    for (int k = 0; k < n2; ++k) {
      auto a = m.channels.channel(k);
      auto b = m.channels.channel(k + n2);
      const auto& recent = q1[k].values;
      const auto& old = q2[k].values;
      for (std::size_t c = 0; c < a.size(); ++c) {
        a[c] = recent[c] - old[c];
        b[c] = old[c] - recent[c];
      }
    }
  } else {
    const HeightImage i1 = aggregate_window(q1, options.aggregate);
    const HeightImage i2 = aggregate_window(q2, options.aggregate);
    for (int k = 0; k < n; ++k) {
      auto ch = m.channels.channel(k);
      for (std::size_t c = 0; c < ch.size(); ++c) {
        const double d = i1.values[c] - i2.values[c];
        ch[c] = k < n2 ? d : -d;
      }
    }
  }

  if (options.appearance) {
    for (int k = 0; k < n; ++k) {
      const auto& src = k < n2 ? q1[k].values : q2[k - n2].values;
      auto ch = m.channels.channel(n + k);
      std::copy(src.data().begin(), src.data().end(), ch.begin());
    }
  }
  return m;
}

CellLabelGrid cell_labels(const CellIndexMap& cells, std::span<const ClassId> point_classes) {
  if (point_classes.size() != cells.num_points()) {
    throw LengthMismatch("point classes length " + std::to_string(point_classes.size()) +
                         " vs " + std::to_string(cells.num_points()) + " points");
  }
  CellLabelGrid out{Grid<ClassId>(cells.rows(), cells.cols(), kUnlabeled),
                    Grid<std::uint8_t>(cells.rows(), cells.cols(), 0)};
  for (std::size_t c = 0; c < cells.num_cells(); ++c) {
    auto pts = cells.points_in(c);
    if (pts.empty()) continue;
    std::array<std::size_t, kNumClasses> votes{};
    for (auto p : pts) {
      const ClassId cls = point_classes[p];
      if (cls >= kNumClasses) throw ConfigError("class id out of range");
      ++votes[cls];
    }
    int best = kNumClasses - 1;
    for (int k = kNumClasses - 2; k >= 0; --k) {
      if (votes[k] > votes[best]) best = k;
    }
    out.labels[c] = static_cast<ClassId>(best);
    out.valid[c] = 1;
  }
  return out;
}

std::vector<ClassId> back_project(const Grid<ClassId>& cell_preds, const CellIndexMap& cells) {
  if (cell_preds.rows() != cells.rows() || cell_preds.cols() != cells.cols()) {
    throw ShapeMismatch("prediction grid does not match cell map");
  }
  std::vector<ClassId> out(cells.num_points(), kUnlabeled);
  for (std::size_t p = 0; p < out.size(); ++p) {
    const auto c = cells.cell_of(p);
    if (c >= 0) out[p] = cell_preds[static_cast<std::size_t>(c)];
  }
  return out;
}

MotionTensor build_motion_tensor(const AlignedSequence& window, const BevConfig& config,
                                 int threads) {
  config.validate();
  if (static_cast<int>(window.frames.size()) != config.n_frames) {
    throw ShapeMismatch("window holds " + std::to_string(window.frames.size()) +
                        " frames, config expects " + std::to_string(config.n_frames));
  }
  std::vector<HeightImage> images(window.frames.size());
  parallel_for(images.size(), threads, [&](std::size_t i) {
    const PointCloud& cloud = window.frames[i].cloud;
    images[i] = height_image(project_to_cells(cloud, config.grid), cloud, config.grid);
  });
  std::span<const HeightImage> all(images);
  return motion_residuals(all.first(config.n2), all.subspan(config.n2), config.motion);
}

void render_pgm(const std::filesystem::path& path, std::span<const double> values, int rows,
                int cols) {
  if (values.size() != static_cast<std::size_t>(rows) * cols) {
    throw ShapeMismatch("render buffer does not match rows*cols");
  }
  double lo = 0.0;
  double hi = 0.0;
  if (!values.empty()) {
    auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    lo = *mn;
    hi = *mx;
  }
  std::string header = "P5\n" + std::to_string(cols) + " " + std::to_string(rows) + "\n255\n";
  std::vector<std::byte> bytes(header.size() + values.size());
  std::transform(header.begin(), header.end(), bytes.begin(),
                 [](char ch) { return static_cast<std::byte>(ch); });
  const double range = hi - lo;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = range > 0.0 ? (values[i] - lo) / range : 0.0;
    bytes[header.size() + i] = static_cast<std::byte>(static_cast<int>(std::lround(t * 255.0)));
  }
  io::write_file(path, bytes);
  io::write_text(path.string() + ".txt",
                 "min=" + io::format_double(lo) + "\nmax=" + io::format_double(hi) + "\n");
}

}  // namespace kdmos
