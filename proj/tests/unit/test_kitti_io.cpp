#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"
#include "kdmos/kitti_io.hpp"
#include "test_util.hpp"

using namespace kdmos;

namespace {

std::vector<std::byte> floats_le(std::initializer_list<float> vals) {
  std::vector<std::byte> out;
  for (float f : vals) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((u >> (8 * i)) & 0xFF));
  }
  return out;
}

std::vector<std::byte> u32_le(std::initializer_list<std::uint32_t> vals) {
  std::vector<std::byte> out;
  for (auto u : vals) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((u >> (8 * i)) & 0xFF));
  }
  return out;
}

}  // namespace

TEST(ScanParse, TwoPointFixture) {
  const auto bytes = floats_le({1.0f, 2.0f, 3.0f, 0.5f, -1.0f, 0.0f, 0.0f, 0.0f});
  ASSERT_EQ(bytes.size(), 32u);
  const PointCloud pc = parse_scan(bytes);
  ASSERT_EQ(pc.size(), 2u);
  EXPECT_EQ(pc.points[0], (Point{1.0, 2.0, 3.0, 0.5f}));
  EXPECT_EQ(pc.points[1], (Point{-1.0, 0.0, 0.0, 0.0f}));
}

TEST(ScanParse, EmptyFile) {
  test::TempDir dir;
  io::write_file(dir.path() / "e.bin", {});
  EXPECT_EQ(read_scan(dir.path() / "e.bin").size(), 0u);
}

TEST(ScanParse, CountIsFileSizeOverSixteen) {
  test::TempDir dir;
  std::mt19937 rng(3);
  std::uniform_real_distribution<float> u(-50.f, 50.f);
  PointCloud pc;
  for (int i = 0; i < 1234; ++i) pc.points.push_back({u(rng), u(rng), u(rng), 0.25f});
  write_scan(dir.path() / "s.bin", pc);
  const auto size = std::filesystem::file_size(dir.path() / "s.bin");
  EXPECT_EQ(read_scan(dir.path() / "s.bin").size(), size / 16);
}

TEST(ScanParse, RejectsTruncatedAndNonFinite) {
  auto bytes = floats_le({1.0f, 2.0f, 3.0f, 0.5f});
  bytes.pop_back();
  EXPECT_THROW(parse_scan(bytes), MalformedScan);
  EXPECT_THROW(parse_scan(floats_le({std::numeric_limits<float>::quiet_NaN(), 0, 0, 0})), MalformedScan);
  EXPECT_THROW(parse_scan(floats_le({0, std::numeric_limits<float>::infinity(), 0, 0})), MalformedScan);
}

TEST(ScanParse, MissingFileIsIoFailure) {
  EXPECT_THROW(read_scan("/nonexistent/000000.bin"), IoFailure);
}

TEST(ScanParse, RoundTripIsBitExact) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> u(-80.f, 80.f);
  PointCloud pc;
  for (int i = 0; i < 500; ++i) pc.points.push_back({u(rng), u(rng), u(rng), std::abs(u(rng)) / 80.f});
  const auto bytes = encode_scan(pc);
  EXPECT_EQ(encode_scan(parse_scan(bytes)), bytes);
  EXPECT_EQ(parse_scan(bytes), pc);
}

TEST(LabelParse, Fixture) {
  const auto bytes = u32_le({252, 10});
  const LabelArray l = parse_labels(bytes, 2);
  EXPECT_EQ(l.raw, (std::vector<std::uint32_t>{252, 10}));
  EXPECT_THROW(parse_labels(bytes, 3), LabelCountMismatch);
  auto odd = bytes;
  odd.pop_back();
  EXPECT_THROW(parse_labels(odd, 2), MalformedLabel);
}

TEST(LabelParse, BitSplit) {
  EXPECT_EQ(semantic_id(0x000100FCu), 252);
  EXPECT_EQ(instance_id(0x000100FCu), 1);
  EXPECT_EQ(make_label(252, 1), 0x000100FCu);
}

TEST(LabelParse, RoundTrip) {
  LabelArray l{{0, 252, 0x00070028u, 0xFFFFFFFFu}};
  EXPECT_EQ(parse_labels(encode_labels(l), 4), l);
}

TEST(Remap, DefaultMap) {
  const ClassMap m = ClassMap::semantic_kitti_mos();
  LabelArray l{{252, 10, 40, 0, 1, 259, make_label(253, 9), 30, 99}};
  const auto c = remap_labels(l, m);
  EXPECT_EQ(c, (std::vector<ClassId>{3, 2, 1, 0, 0, 3, 3, 2, 1}));
}

TEST(Remap, OverrideTable) {
  const ClassMap m = ClassMap::parse("# comment\ndefault 0\n40 1\n252 3\n");
  EXPECT_EQ(m(40), 1);
  EXPECT_EQ(m(252), 3);
  EXPECT_EQ(m(10), 0);
  EXPECT_THROW(ClassMap::parse("40 7\n"), ConfigError);
}

TEST(Poses, IdentityWithIdentityTr) {
  const auto poses = parse_poses("1 0 0 0 0 1 0 0 0 0 1 0\n", Calibration{});
  ASSERT_EQ(poses.size(), 1u);
  EXPECT_TRUE(poses[0].matrix().isApprox(Eigen::Matrix4d::Identity()));
}

TEST(Poses, IdentityConjugatedStaysIdentity) {
  const Calibration calib{Pose::translation(0, 0, 1)};
  const auto poses = parse_poses("1 0 0 0 0 1 0 0 0 0 1 0\n", calib);
  EXPECT_LT((poses[0].matrix() - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Poses, ConjugationByHand) {
  // Tr = +90 deg about z: [[0,-1,0],[1,0,0],[0,0,1]]; Tr^-1 = its transpose.
  // T_cam translates by (1,0,0). Tr^-1 * T_cam * Tr translates by Tr^-1 (1,0,0) = (0,-1,0).
  const Calibration calib{Pose::rotation_z(std::numbers::pi / 2)};
  const auto poses = parse_poses("1 0 0 1 0 1 0 0 0 0 1 0\n", calib);
  Eigen::Matrix4d expected = Eigen::Matrix4d::Identity();
  expected(1, 3) = -1.0;
  EXPECT_LT((poses[0].matrix() - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Poses, MalformedLines) {
  EXPECT_THROW(parse_poses("1 0 0 0 0 1 0 0 0 0 1\n", Calibration{}), MalformedPoseLine);
  EXPECT_THROW(parse_poses("1 0 0 0 0 1 0 0 0 0 1 nan\n", Calibration{}), MalformedPoseLine);
  EXPECT_THROW(parse_poses("2 0 0 0 0 1 0 0 0 0 1 0\n", Calibration{}), MalformedPoseLine);
}

TEST(Poses, WriteReadRoundTrip) {
  test::TempDir dir;
  const Calibration calib{Pose::rotation_z(0.3) * Pose::translation(0.1, -0.2, 0.05)};
  std::vector<Pose> poses{Pose::identity(), Pose::translation(1.5, 0.0, 0.0) * Pose::rotation_z(0.1)};
  write_calibration(dir.path() / "calib.txt", calib);
  write_poses(dir.path() / "poses.txt", poses, calib);
  const Calibration back_calib = read_calibration(dir.path() / "calib.txt");
  const auto back = read_poses(dir.path() / "poses.txt", back_calib);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_LT((back[i].matrix() - poses[i].matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(PoseType, RejectsNonRigid) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m(3, 0) = 0.5;
  EXPECT_THROW(Pose{m}, NonRigidTransform);
  m = Eigen::Matrix4d::Identity();
  m(0, 0) = -1.0;  // reflection
  EXPECT_THROW(Pose{m}, NonRigidTransform);
}

TEST(Layout, FrameNamesAndCount) {
  test::TempDir dir;
  EXPECT_EQ(frame_name(7), "000007");
  const SequenceLayout layout{dir.path()};
  for (int f = 0; f < 3; ++f) write_scan(layout.scan(f), PointCloud{});
  EXPECT_EQ(layout.frame_count(), 3u);
  EXPECT_EQ(layout.scan(2).filename(), "000002.bin");
  EXPECT_EQ(layout.label(2).filename(), "000002.label");
}
