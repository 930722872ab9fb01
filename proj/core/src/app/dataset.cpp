#include "kdmos/app/dataset.hpp"

#include <cmath>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"
#include "kdmos/geometry.hpp"
#include "kdmos/parallel.hpp"

namespace kdmos::app {

namespace fs = std::filesystem;

LoadedSequence load_sequence(const fs::path& dir, const ClassMap& map) {
  if (!fs::is_directory(dir)) throw IoFailure(dir.string() + ": not a directory");
  const SequenceLayout layout{dir};
  LoadedSequence seq;
  seq.dir = dir;

  const Calibration calib =
      fs::exists(layout.calib()) ? read_calibration(layout.calib()) : Calibration{};
  const std::size_t n = layout.frame_count();
  if (n > 0 || fs::exists(layout.poses())) {
    seq.poses = read_poses(layout.poses(), calib);
  }
  if (seq.poses.size() < n) {
    throw FormatError(layout.poses().string() + ": " + std::to_string(seq.poses.size()) +
                      " poses for " + std::to_string(n) + " scans");
  }
  seq.poses.resize(n);

  const bool labelled = n > 0 && fs::exists(layout.label(0));
  seq.frames.reserve(n);
  seq.classes.resize(n);
  for (std::size_t f = 0; f < n; ++f) {
    PointCloud cloud = read_scan(layout.scan(f));
    cloud.frame_id = f;
    if (labelled) {
      seq.classes[f] = remap_labels(read_labels(layout.label(f), cloud.points.size()), map);
    }
    seq.frames.push_back(std::move(cloud));
  }
  return seq;
}

std::size_t sample_count(std::size_t n_frames, int window) {
  const auto w = static_cast<std::size_t>(window);
  return n_frames >= w ? n_frames - (w - 1) : 0;
}

Sample build_sample(const LoadedSequence& seq, std::size_t frame, const BevConfig& config,
                    int threads) {
  const auto window = static_cast<std::size_t>(config.n_frames);
  if (frame + 1 < window || frame >= seq.frames.size()) {
    throw IndexOutOfRange("frame " + std::to_string(frame) + " has no full window");
  }
  Sample s;
  s.frame = frame;
  const AlignedSequence aligned = align_to_current(seq.frames, seq.poses, frame, window);
  s.input = build_motion_tensor(aligned, config, threads);
  s.cells = project_to_cells(seq.frames[frame], config.grid);
  s.point_classes = seq.classes[frame];
  if (!s.point_classes.empty()) {
    s.labels = cell_labels(s.cells, s.point_classes);
  } else {
    s.labels.labels = Grid<ClassId>(config.grid.rows(), config.grid.cols(), kUnlabeled);
    s.labels.valid = Grid<std::uint8_t>(config.grid.rows(), config.grid.cols(), 0);
    for (std::size_t c = 0; c < s.cells.num_cells(); ++c) {
      s.labels.valid[c] = s.cells.points_in(c).empty() ? 0 : 1;
    }
  }
  return s;
}

std::vector<Sample> build_samples(const LoadedSequence& seq, std::size_t sequence_index,
                                  const BevConfig& config, int threads) {
  const std::size_t count = sample_count(seq.frames.size(), config.n_frames);
  const std::size_t first = static_cast<std::size_t>(config.n_frames) - 1;
  std::vector<Sample> out(count);
  parallel_for(count, threads, [&](std::size_t i) {
    out[i] = build_sample(seq, first + i, config, 1);
    out[i].sequence = sequence_index;
  });
  return out;
}

namespace {

constexpr std::uint16_t kProjectedVersion = 1;

void expect_magic(io::ByteReader& r, const char* magic, const char* what) {
  if (r.str(4) != magic) throw FormatError(std::string(what) + ": bad magic at byte offset 0");
  const auto version = r.u16();
  if (version != kProjectedVersion) {
    throw FormatError(std::string(what) + ": unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  }
}

void expect_end(const io::ByteReader& r, const char* what) {
  if (r.remaining() != 0) {
    throw FormatError(std::string(what) + ": trailing bytes at offset " + std::to_string(r.offset()));
  }
}

}  // namespace

std::vector<std::byte> encode_motion_tensor(const MotionTensor& t) {
  io::ByteWriter w;
  w.bytes("KDMT");
  w.u16(kProjectedVersion);
  w.u16(static_cast<std::uint16_t>(t.n2));
  w.u32(static_cast<std::uint32_t>(t.channels.c));
  w.u32(static_cast<std::uint32_t>(t.channels.h));
  w.u32(static_cast<std::uint32_t>(t.channels.w));
  for (double v : t.channels.data) w.f32(static_cast<float>(v));
  return w.take();
}

MotionTensor decode_motion_tensor(std::span<const std::byte> bytes) {
  io::ByteReader r(bytes);
  expect_magic(r, "KDMT", "motion tensor");
  MotionTensor t;
  t.n2 = r.u16();
  const auto c = r.u32();
  const auto h = r.u32();
  const auto w = r.u32();
  const std::uint64_t n = std::uint64_t{c} * h * w;
  if (n * 4 != r.remaining()) {
    throw FormatError("motion tensor: payload size does not match " + std::to_string(c) + "x" +
                      std::to_string(h) + "x" + std::to_string(w) + " at offset " +
                      std::to_string(r.offset()));
  }
  t.channels = Tensor3(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  for (auto& v : t.channels.data) {
    const std::size_t at = r.offset();
    const float f = r.f32();
    if (!std::isfinite(f)) {
      throw FormatError("motion tensor: non-finite value at offset " + std::to_string(at));
    }
    v = f;
  }
  return t;
}

std::vector<std::byte> encode_cell_labels(const CellLabelGrid& g) {
  io::ByteWriter w;
  w.bytes("KDCL");
  w.u16(kProjectedVersion);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(g.labels.rows()));
  w.u32(static_cast<std::uint32_t>(g.labels.cols()));
  for (ClassId c : g.labels.data()) w.u8(c);
  for (std::uint8_t v : g.valid.data()) w.u8(v);
  return w.take();
}

CellLabelGrid decode_cell_labels(std::span<const std::byte> bytes) {
  io::ByteReader r(bytes);
  expect_magic(r, "KDCL", "cell labels");
  r.u16();
  const auto h = r.u32();
  const auto w = r.u32();
  const std::uint64_t n = std::uint64_t{h} * w;
  if (2 * n != r.remaining()) {
    throw FormatError("cell labels: payload size does not match grid at offset " +
                      std::to_string(r.offset()));
  }
  CellLabelGrid g;
  g.labels = Grid<ClassId>(static_cast<int>(h), static_cast<int>(w), kUnlabeled);
  g.valid = Grid<std::uint8_t>(static_cast<int>(h), static_cast<int>(w), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = r.offset();
    const auto c = r.u8();
    if (c >= kNumClasses) {
      throw FormatError("cell labels: class " + std::to_string(c) + " at offset " +
                        std::to_string(at));
    }
    g.labels[i] = c;
  }
  for (std::size_t i = 0; i < n; ++i) g.valid[i] = r.u8() ? 1 : 0;
  expect_end(r, "cell labels");
  return g;
}

ClassMap load_class_map(const std::string& path) {
  if (path.empty()) return ClassMap::semantic_kitti_mos();
  return ClassMap::parse(io::read_text(path));
}

}  // namespace kdmos::app
