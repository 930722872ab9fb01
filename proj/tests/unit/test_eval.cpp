#include <random>

#include <gtest/gtest.h>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"
#include "kdmos/eval.hpp"
#include "test_util.hpp"

using namespace kdmos;

TEST(Confusion, HandCountedIou) {
  const std::vector<ClassId> truth{3, 3, 3, 1, 1, 2, 0};
  const std::vector<ClassId> pred{3, 3, 1, 3, 1, 2, 3};
  ConfusionMatrix cm;
  cm.accumulate(pred, truth);
  EXPECT_EQ(cm.total(), 6u);  // class 0 ignored
  EXPECT_EQ(cm(3, 3), 2u);
  EXPECT_EQ(cm(3, 1), 1u);
  EXPECT_EQ(cm(1, 3), 1u);
  // moving: TP 2, FN 1, FP 1
  EXPECT_DOUBLE_EQ(cm.iou(3), 0.5);
  // class 1: TP 1, FN 1, FP 1
  EXPECT_DOUBLE_EQ(cm.iou(1), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(cm.iou(2), 1.0);
}

TEST(Confusion, AbsentClassConvention) {
  ConfusionMatrix cm;
  const std::vector<ClassId> t{1, 1}, p{1, 1};
  cm.accumulate(p, t);
  EXPECT_FALSE(cm.iou_defined(kMoving));
  EXPECT_DOUBLE_EQ(cm.iou(kMoving), 1.0);

  ConfusionMatrix fp;
  const std::vector<ClassId> p2{3, 1};
  fp.accumulate(p2, t);
  EXPECT_TRUE(fp.iou_defined(kMoving));
  EXPECT_DOUBLE_EQ(fp.iou(kMoving), 0.0);
}

TEST(Confusion, AdditiveOverBatches) {
  std::mt19937 rng(2);
  std::vector<ClassId> t(500), p(500);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = static_cast<ClassId>(rng() % 4);
    p[i] = static_cast<ClassId>(rng() % 4);
  }
  ConfusionMatrix whole, parts;
  whole.accumulate(p, t);
  ConfusionMatrix a, b;
  a.accumulate(std::span(p).first(200), std::span(t).first(200));
  b.accumulate(std::span(p).subspan(200), std::span(t).subspan(200));
  parts += a;
  parts += b;
  EXPECT_EQ(whole, parts);
}

TEST(Confusion, Errors) {
  ConfusionMatrix cm;
  const std::vector<ClassId> a{1, 2}, b{1};
  EXPECT_THROW(cm.accumulate(a, b), LengthMismatch);
  const std::vector<ClassId> bad{5};
  EXPECT_THROW(cm.accumulate(bad, b), ConfigError);
}

TEST(Metrics, FormatParseRoundTrip) {
  MetricsReport r;
  const std::vector<ClassId> t{3, 3, 2, 1}, p{3, 2, 2, 1};
  r.points.accumulate(p, t);
  r.cells.accumulate(t, t);
  test::TempDir dir;
  write_metrics(dir.path() / "m.txt", r);
  const auto kv = parse_key_values(io::read_text(dir.path() / "m.txt"));
  EXPECT_DOUBLE_EQ(std::stod(kv.at("moving_iou")), 0.5);
  EXPECT_EQ(kv.at("moving_iou_absent"), "0");
  EXPECT_DOUBLE_EQ(std::stod(kv.at("cell_moving_iou")), 1.0);
  EXPECT_EQ(kv.at("points_total"), "4");
  EXPECT_EQ(kv.at("point_cm_row_3"), "0,0,1,1");
  EXPECT_EQ(format_metrics(r), io::read_text(dir.path() / "m.txt"));
}

TEST(Metrics, KeyValueParsing) {
  const auto kv = parse_key_values("# header\n\n a = 1 \nb=x=y\n");
  EXPECT_EQ(kv.at("a"), "1");
  EXPECT_EQ(kv.at("b"), "x=y");
  EXPECT_THROW(parse_key_values("novalue\n"), ConfigError);
}
