#include "kdmos/kitti_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>

#include <Eigen/Dense>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"

namespace kdmos {

namespace {

bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return ec == std::errc() && ptr == tok.data() + tok.size();
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    if (end == text.size()) break;
    start = end + 1;
  }
  return lines;
}

bool is_blank(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

// 12 row-major values of the top 3×4 block.
Eigen::Matrix4d lift_3x4(const std::array<double, 12>& v) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) m(r, c) = v[r * 4 + c];
  }
  return m;
}

std::string format_3x4(const Eigen::Matrix4d& m) {
  std::string line;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!line.empty()) line += ' ';
      line += io::format_double(m(r, c));
    }
  }
  return line;
}

}  // namespace

// ---------------------------------------------------------------- ClassMap

ClassMap::ClassMap(ClassId fallback) : table_(65536, fallback) {}

void ClassMap::set(std::uint16_t semantic, ClassId cls) {
  if (cls >= kNumClasses) throw ConfigError("class id out of range: " + std::to_string(cls));
  table_[semantic] = cls;
}

ClassMap ClassMap::semantic_kitti_mos() {
  ClassMap map(kStatic);
  map.set(0, kUnlabeled);
  map.set(1, kUnlabeled);
  for (std::uint16_t id : {10, 11, 13, 15, 18, 20, 30, 31, 32}) map.set(id, kMovable);
  for (std::uint16_t id = 252; id <= 259; ++id) map.set(id, kMoving);
  return map;
}

ClassMap ClassMap::parse(std::string_view text) {
  ClassMap map(kStatic);
  int line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks.size() != 2) {
      throw ConfigError("class map line " + std::to_string(line_no) + ": expected 2 tokens");
    }
    unsigned cls = 0;
    auto [p, ec] = std::from_chars(toks[1].data(), toks[1].data() + toks[1].size(), cls);
    if (ec != std::errc() || cls >= kNumClasses) {
      throw ConfigError("class map line " + std::to_string(line_no) + ": bad class id");
    }
    if (toks[0] == "default") {
      std::fill(map.table_.begin(), map.table_.end(), static_cast<ClassId>(cls));
      continue;
    }
    unsigned id = 0;
    auto [q, ec2] = std::from_chars(toks[0].data(), toks[0].data() + toks[0].size(), id);
    if (ec2 != std::errc() || id > 0xFFFFu) {
      throw ConfigError("class map line " + std::to_string(line_no) + ": bad semantic id");
    }
    map.set(static_cast<std::uint16_t>(id), static_cast<ClassId>(cls));
  }
  return map;
}

// -------------------------------------------------------------------- Pose

bool Pose::is_rigid(const Eigen::Matrix4d& m, double tol) {
  if (!m.allFinite()) return false;
  if (m(3, 0) != 0.0 || m(3, 1) != 0.0 || m(3, 2) != 0.0 || m(3, 3) != 1.0) return false;
  const Eigen::Matrix3d r = m.topLeftCorner<3, 3>();
  const Eigen::Matrix3d gram = r.transpose() * r;
  if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return r.determinant() > 0.0;
}

Pose::Pose(const Eigen::Matrix4d& m) : m_(m) {
  if (!is_rigid(m)) throw NonRigidTransform("matrix is not a rigid transform");
}

Pose Pose::translation(double x, double y, double z) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(0, 3) = x;
  m(1, 3) = y;
  m(2, 3) = z;
  return Pose(m, Unchecked{});
}

Pose Pose::rotation_z(double radians) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  m(0, 0) = c;
  m(0, 1) = -s;
  m(1, 0) = s;
  m(1, 1) = c;
  return Pose(m, Unchecked{});
}

Pose Pose::inverse() const {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rt = m_.topLeftCorner<3, 3>().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * m_.topRightCorner<3, 1>();
  return Pose(inv, Unchecked{});
}

Pose Pose::operator*(const Pose& rhs) const {
  Eigen::Matrix4d prod = m_ * rhs.m_;
  prod.row(3) << 0.0, 0.0, 0.0, 1.0;
  return Pose(prod, Unchecked{});
}

// ------------------------------------------------------------------- scans

PointCloud parse_scan(std::span<const std::byte> bytes) {
  if (bytes.size() % 16 != 0) {
    throw MalformedScan("size " + std::to_string(bytes.size()) + " is not a multiple of 16");
  }
  io::ByteReader in(bytes);
  PointCloud cloud;
  cloud.points.resize(bytes.size() / 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    Point& p = cloud.points[i];
    p.x = in.f32();
    p.y = in.f32();
    p.z = in.f32();
    p.intensity = in.f32();
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z)) {
      throw MalformedScan("non-finite coordinate at point " + std::to_string(i) +
                          " (byte offset " + std::to_string(i * 16) + ")");
    }
  }
  return cloud;
}

PointCloud read_scan(const std::filesystem::path& path) {
  try {
    return parse_scan(io::read_file(path));
  } catch (const MalformedScan& e) {
    throw MalformedScan(path.string() + ": " + e.what());
  }
}

std::vector<std::byte> encode_scan(const PointCloud& cloud) {
  io::ByteWriter out;
  out.buffer().reserve(cloud.size() * 16);
  for (const Point& p : cloud.points) {
    out.f32(static_cast<float>(p.x));
    out.f32(static_cast<float>(p.y));
    out.f32(static_cast<float>(p.z));
    out.f32(p.intensity);
  }
  return out.take();
}

void write_scan(const std::filesystem::path& path, const PointCloud& cloud) {
  io::write_file(path, encode_scan(cloud));
}

// ------------------------------------------------------------------ labels

LabelArray parse_labels(std::span<const std::byte> bytes, std::size_t expected_count) {
  if (bytes.size() % 4 != 0) {
    throw MalformedLabel("size " + std::to_string(bytes.size()) + " is not a multiple of 4");
  }
  const std::size_t n = bytes.size() / 4;
  if (n != expected_count) {
    throw LabelCountMismatch("file holds " + std::to_string(n) + " labels, expected " +
                             std::to_string(expected_count));
  }
  io::ByteReader in(bytes);
  LabelArray labels;
  labels.raw.resize(n);
  for (auto& v : labels.raw) v = in.u32();
  return labels;
}

LabelArray read_labels(const std::filesystem::path& path, std::size_t expected_count) {
  try {
    return parse_labels(io::read_file(path), expected_count);
  } catch (const MalformedLabel& e) {
    throw MalformedLabel(path.string() + ": " + e.what());
  } catch (const LabelCountMismatch& e) {
    throw LabelCountMismatch(path.string() + ": " + e.what());
  }
}

std::vector<std::byte> encode_labels(const LabelArray& labels) {
  io::ByteWriter out;
  out.buffer().reserve(labels.size() * 4);
  for (auto v : labels.raw) out.u32(v);
  return out.take();
}

void write_labels(const std::filesystem::path& path, const LabelArray& labels) {
  io::write_file(path, encode_labels(labels));
}

std::vector<ClassId> remap_labels(const LabelArray& labels, const ClassMap& map) {
  std::vector<ClassId> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = map(semantic_id(labels.raw[i]));
  return out;
}

// ------------------------------------------------------- calibration/poses

Calibration parse_calibration(std::string_view text) {
  int line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    auto toks = split_ws(line);
    if (toks.empty() || toks[0] != "Tr:") continue;
    if (toks.size() != 13) {
      throw MalformedPoseLine("calib line " + std::to_string(line_no) + ": Tr needs 12 values");
    }
    std::array<double, 12> v{};
    for (int i = 0; i < 12; ++i) {
      if (!parse_double(toks[i + 1], v[i]) || !std::isfinite(v[i])) {
        throw MalformedPoseLine("calib line " + std::to_string(line_no) + ": bad value '" +
                                std::string(toks[i + 1]) + "'");
      }
    }
    return Calibration{Pose(lift_3x4(v))};
  }
  throw MalformedPoseLine("calibration has no Tr: line");
}

Calibration read_calibration(const std::filesystem::path& path) {
  return parse_calibration(io::read_text(path));
}

void write_calibration(const std::filesystem::path& path, const Calibration& calib) {
  io::write_text(path, "Tr: " + format_3x4(calib.tr.matrix()) + "\n");
}

std::vector<Pose> parse_poses(std::string_view text, const Calibration& calib) {
  const Pose tr = calib.tr;
  const Pose tr_inv = tr.inverse();
  std::vector<Pose> poses;
  int line_no = 0;
  for (std::string_view line : split_lines(text)) {
    ++line_no;
    if (is_blank(line)) continue;
    auto toks = split_ws(line);
    if (toks.size() != 12) {
      throw MalformedPoseLine("line " + std::to_string(line_no) + ": expected 12 values, got " +
                              std::to_string(toks.size()));
    }
    std::array<double, 12> v{};
    for (int i = 0; i < 12; ++i) {
      if (!parse_double(toks[i], v[i]) || !std::isfinite(v[i])) {
        throw MalformedPoseLine("line " + std::to_string(line_no) + ": bad value '" +
                                std::string(toks[i]) + "'");
      }
    }
    Pose cam;
    try {
      cam = Pose(lift_3x4(v));
    } catch (const NonRigidTransform&) {
      throw MalformedPoseLine("line " + std::to_string(line_no) + ": not a rigid transform");
    }
    poses.push_back(tr_inv * cam * tr);
  }
  return poses;
}

std::vector<Pose> read_poses(const std::filesystem::path& path, const Calibration& calib) {
  try {
    return parse_poses(io::read_text(path), calib);
  } catch (const MalformedPoseLine& e) {
    throw MalformedPoseLine(path.string() + ": " + e.what());
  }
}

void write_poses(const std::filesystem::path& path, std::span<const Pose> poses,
                 const Calibration& calib) {
  const Pose tr_inv = calib.tr.inverse();
  std::string text;
  for (const Pose& velo : poses) {
    const Pose cam = calib.tr * velo * tr_inv;
    text += format_3x4(cam.matrix());
    text += '\n';
  }
  io::write_text(path, text);
}

// ------------------------------------------------------------------ layout

std::string frame_name(std::size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu", frame);
  return buf;
}

std::filesystem::path SequenceLayout::scan(std::size_t frame) const {
  return dir / "velodyne" / (frame_name(frame) + ".bin");
}

std::filesystem::path SequenceLayout::label(std::size_t frame) const {
  return dir / "labels" / (frame_name(frame) + ".label");
}

std::size_t SequenceLayout::frame_count() const {
  std::size_t n = 0;
  while (std::filesystem::exists(scan(n))) ++n;
  return n;
}

}  // namespace kdmos
