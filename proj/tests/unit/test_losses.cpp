#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "kdmos/error.hpp"
#include "kdmos/losses.hpp"
#include "oracles.hpp"

using namespace kdmos;

namespace {

Logits random_logits(std::mt19937_64& rng, double sd = 2.0) {
  std::normal_distribution<double> n(0.0, sd);
  return {n(rng), n(rng), n(rng), n(rng)};
}

// Plain-probability forms of the three divergences.
double kd_plain(const Logits& zt, const Logits& zs, double tau) {
  return oracle::kl(oracle::softmax(zt, tau), oracle::softmax(zs, tau));
}

double tckd_plain(const Logits& zt, const Logits& zs, int t, double tau) {
  const auto pt = oracle::softmax(zt, tau);
  const auto ps = oracle::softmax(zs, tau);
  const std::array<double, 2> bt{pt[t], 1 - pt[t]}, bs{ps[t], 1 - ps[t]};
  return oracle::kl(bt, bs);
}

double nckd_plain(const Logits& zt, const Logits& zs, int t, double tau) {
  const auto pt = oracle::softmax(zt, tau);
  const auto ps = oracle::softmax(zs, tau);
  std::array<double, 3> ht{}, hs{};
  int k = 0;
  for (int i = 0; i < 4; ++i) {
    if (i == t) continue;
    ht[k] = pt[i] / (1 - pt[t]);
    hs[k] = ps[i] / (1 - ps[t]);
    ++k;
  }
  return oracle::kl(ht, hs);
}

struct Frame {
  LogitGrid teacher, student;
  CellLabelGrid labels;
};

Frame random_frame(std::mt19937_64& rng, int rows, int cols) {
  Frame f{LogitGrid(rows, cols), LogitGrid(rows, cols),
          {Grid<ClassId>(rows, cols), Grid<std::uint8_t>(rows, cols, 1)}};
  for (std::size_t c = 0; c < f.student.num_cells(); ++c) {
    f.student.set_cell(c, random_logits(rng));
    f.teacher.set_cell(c, random_logits(rng));
    f.labels.labels[c] = static_cast<ClassId>(rng() % 4);
  }
  return f;
}

}  // namespace

TEST(Probabilities, SoftmaxSplitAndNonTarget) {
  const Logits z{1.0, 2.0, 0.5, -1.0};
  const auto p = softmax_probs(z, 2.0);
  const auto ref = oracle::softmax(z, 2.0);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p[i], ref[i], 1e-15);
  const auto [pt, pnt] = target_split(p, 1);
  EXPECT_NEAR(pt + pnt, 1.0, 1e-15);
  const auto h = nontarget_probs(z, 1, 2.0);
  EXPECT_NEAR(h[0], ref[0] / (1 - ref[1]), 1e-15);
  EXPECT_NEAR(h[2], ref[3] / (1 - ref[1]), 1e-15);
  EXPECT_THROW(nontarget_probs(z, 4), ConfigError);
}

TEST(Divergences, MatchPlainForms) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 300; ++i) {
    const Logits zt = random_logits(rng), zs = random_logits(rng);
    const int t = static_cast<int>(rng() % 4);
    for (double tau : {1.0, 2.0, 4.0}) {
      EXPECT_NEAR(kd_kl(zt, zs, tau), kd_plain(zt, zs, tau), 1e-12);
      EXPECT_NEAR(tckd(zt, zs, t, tau), tckd_plain(zt, zs, t, tau), 1e-12);
      EXPECT_NEAR(nckd(zt, zs, t, tau), nckd_plain(zt, zs, t, tau), 1e-12);
    }
  }
}

TEST(Divergences, DecompositionIdentity) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Logits zt = random_logits(rng, 3.0), zs = random_logits(rng, 3.0);
    const int t = static_cast<int>(rng() % 4);
    for (double tau : {1.0, 2.0, 4.0}) {
      const double pt = oracle::softmax(zt, tau)[t];
      EXPECT_LT(std::abs(kd_kl(zt, zs, tau) - tckd(zt, zs, t, tau) - (1 - pt) * nckd(zt, zs, t, tau)), 1e-9);
    }
  }
}

TEST(Divergences, ZeroWhenEqual) {
  const Logits z{0.3, -1.0, 2.0, 0.0};
  EXPECT_NEAR(kd_kl(z, z), 0.0, 1e-15);
  EXPECT_NEAR(tckd(z, z, 2), 0.0, 1e-15);
  EXPECT_NEAR(nckd(z, z, 0), 0.0, 1e-15);
}

TEST(Divergences, ExtremeLogitsStayFinite) {
  const Logits zt{800.0, -800.0, 0.0, 0.0};
  const Logits zs{-800.0, 800.0, 0.0, 0.0};
  EXPECT_TRUE(std::isfinite(kd_kl(zt, zs)));
  EXPECT_TRUE(std::isfinite(tckd(zt, zs, 0)));
  EXPECT_TRUE(std::isfinite(nckd(zt, zs, 0)));
  // student assigns ~0 to the teacher's class: bounded by the floor
  EXPECT_LE(kd_kl(zt, zs), -std::log(1e-12) + 1e-9);
}

TEST(Dcd, MovingGetsBothTermsOthersOnlyNonTarget) {
  DistillConfig cfg;
  cfg.beta = 0.7;
  const Logits zt{1, 0, -1, 2}, zs{0, 1, 1, 0};
  EXPECT_NEAR(dcd(zt, zs, 3, cfg), tckd(zt, zs, 3) + 0.7 * nckd(zt, zs, 3), 1e-15);
  EXPECT_NEAR(dcd(zt, zs, 1, cfg), 0.7 * nckd(zt, zs, 1), 1e-15);
  cfg.tckd_scope = TckdScope::AllClasses;
  EXPECT_NEAR(dcd(zt, zs, 1, cfg), tckd(zt, zs, 1) + 0.7 * nckd(zt, zs, 1), 1e-15);
}

TEST(CellGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(33);
  for (int i = 0; i < 50; ++i) {
    const Logits zt = random_logits(rng);
    Logits zs = random_logits(rng);
    const int t = static_cast<int>(rng() % 4);
    const double tau = i % 3 == 0 ? 1.0 : (i % 3 == 1 ? 2.0 : 4.0);
    std::vector<double> xs(zs.begin(), zs.end());
    auto as_logits = [&] {
      Logits z;
      std::copy(xs.begin(), xs.end(), z.begin());
      return z;
    };
    auto check = [&](const CellLoss& cl, auto fn) {
      const auto num = oracle::numeric_gradient(xs, [&] { return fn(as_logits()); });
      EXPECT_LT(oracle::max_rel_error(std::vector<double>(cl.grad.begin(), cl.grad.end()), num), 1e-5);
    };
    check(kd_kl_grad(zt, zs, tau), [&](const Logits& z) { return kd_kl(zt, z, tau); });
    check(tckd_grad(zt, zs, t, tau), [&](const Logits& z) { return tckd(zt, z, t, tau); });
    check(nckd_grad(zt, zs, t, tau), [&](const Logits& z) { return nckd(zt, z, t, tau); });
  }
}

TEST(FrameWeights, CountsAndFloor) {
  CellLabelGrid g{Grid<ClassId>(10, 10, kStatic), Grid<std::uint8_t>(10, 10, 1)};
  g.labels[0] = kMoving;
  DistillConfig cfg;
  const auto w = frame_weights(g, cfg);
  EXPECT_DOUBLE_EQ(w.w[kMoving], 0.01);
  EXPECT_DOUBLE_EQ(w.w[kStatic], 0.99);
  EXPECT_DOUBLE_EQ(w.w[kMovable], 0.01);  // absent, floored at 1/#valid
  cfg.weight_floor = 0.05;
  EXPECT_DOUBLE_EQ(frame_weights(g, cfg).w[kMoving], 0.05);

  CellLabelGrid empty{Grid<ClassId>(2, 2), Grid<std::uint8_t>(2, 2, 0)};
  EXPECT_THROW(frame_weights(empty, DistillConfig{}), EmptyFrame);
}

TEST(Wdcd, MatchesDirectSum) {
  std::mt19937_64 rng(44);
  Frame f = random_frame(rng, 3, 5);
  f.labels.valid[4] = 0;
  for (double tau : {1.0, 2.0}) {
    DistillConfig cfg;
    cfg.temperature = tau;
    cfg.beta = 1.5;
    const auto w = frame_weights(f.labels, cfg);
    double sum = 0;
    int n = 0;
    for (std::size_t c = 0; c < f.student.num_cells(); ++c) {
      if (!f.labels.valid[c]) continue;
      const int t = f.labels.labels[c];
      const Logits zt = f.teacher.cell(c), zs = f.student.cell(c);
      const double d = (t == kMoving ? tckd_plain(zt, zs, t, tau) : 0.0) + 1.5 * nckd_plain(zt, zs, t, tau);
      sum += d / w.w[t];
      ++n;
    }
    const double expected = sum / n * (tau == 1.0 ? 1.0 : tau * tau);
    const LossResult r = wdcd_frame(f.teacher, f.student, f.labels, cfg);
    EXPECT_NEAR(r.value, expected, 1e-12);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(r.grad.scores[4 * 4 + k], 0.0);
  }
}

TEST(Wdcd, ReplicationDividesPerCellWeight) {
  // one moving cell among 3 static; then the moving cell replicated 2x among 6 static
  const Logits zt{0.0, 1.0, 0.0, 2.0}, zs{0.5, 0.0, 0.2, 0.1}, zst{0.1, 2.0, 0.0, -1.0};
  auto build = [&](int moving, int statics) {
    const int n = moving + statics;
    Frame f{LogitGrid(1, n), LogitGrid(1, n), {Grid<ClassId>(1, n), Grid<std::uint8_t>(1, n, 1)}};
    for (int c = 0; c < n; ++c) {
      const bool mv = c < moving;
      f.teacher.set_cell(c, mv ? zt : zst);
      f.student.set_cell(c, zs);
      f.labels.labels[c] = mv ? kMoving : kStatic;
    }
    return f;
  };
  const Frame a = build(1, 3), b = build(2, 6);
  DistillConfig cfg;
  const auto ra = wdcd_frame(a.teacher, a.student, a.labels, cfg);
  const auto rb = wdcd_frame(b.teacher, b.student, b.labels, cfg);
  EXPECT_NEAR(ra.value, rb.value, 1e-12);  // same composition, same loss
  // per-cell gradient of the moving cell halves because n doubles
  EXPECT_NEAR(rb.grad.scores[3], ra.grad.scores[3] / 2, 1e-12);
}

TEST(Wdcd, Errors) {
  std::mt19937_64 rng(1);
  Frame f = random_frame(rng, 2, 2);
  LogitGrid other(2, 3);
  EXPECT_THROW(wdcd_frame(other, f.student, f.labels, DistillConfig{}), ShapeMismatch);
  LogitGrid masked = f.teacher;
  masked.valid[0] = 0;
  EXPECT_THROW(wdcd_frame(masked, f.student, f.labels, DistillConfig{}), ShapeMismatch);
  f.labels.valid = Grid<std::uint8_t>(2, 2, 0);
  EXPECT_THROW(wdcd_frame(f.teacher, f.student, f.labels, DistillConfig{}), EmptyFrame);
}

TEST(WeightedCe, ValueAndGradient) {
  std::mt19937_64 rng(5);
  Frame f = random_frame(rng, 2, 4);
  f.labels.valid[1] = 0;
  const std::array<double, 4> w{0.5, 1.0, 2.0, 3.0};
  double sum = 0;
  int n = 0;
  for (std::size_t c = 0; c < f.student.num_cells(); ++c) {
    if (!f.labels.valid[c]) continue;
    const int t = f.labels.labels[c];
    sum += -w[t] * std::log(oracle::softmax(f.student.cell(c))[t]);
    ++n;
  }
  const LossResult r = weighted_cross_entropy(f.student, f.labels, w);
  EXPECT_NEAR(r.value, sum / n, 1e-12);
  const auto num = oracle::numeric_gradient(f.student.scores, [&] {
    return weighted_cross_entropy(f.student, f.labels, w).value;
  });
  EXPECT_LT(oracle::max_rel_error(r.grad.scores, num), 1e-5);
  EXPECT_THROW(weighted_cross_entropy(f.student, f.labels, std::vector<double>{1, 1}), ShapeMismatch);
}

TEST(Lovasz, MatchesSetFunctionExtension) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 40; ++trial) {
    Frame f = random_frame(rng, 2 + trial % 3, 3 + trial % 4);
    if (trial % 4 == 0) f.labels.valid[0] = 0;
    double total = 0;
    int present = 0;
    for (int cls = 0; cls < 4; ++cls) {
      std::vector<double> m;
      std::vector<bool> fg;
      for (std::size_t c = 0; c < f.student.num_cells(); ++c) {
        if (!f.labels.valid[c]) continue;
        const double p = oracle::softmax(f.student.cell(c))[cls];
        fg.push_back(f.labels.labels[c] == cls);
        m.push_back(fg.back() ? 1 - p : p);
      }
      if (std::count(fg.begin(), fg.end(), true) == 0) continue;
      total += oracle::lovasz_extension(m, fg);
      ++present;
    }
    const double got = lovasz_softmax(f.student, f.labels, kAllClasses).value;
    EXPECT_NEAR(got, total / present, 1e-12);
  }
}

TEST(Lovasz, PerfectPredictionIsNearZeroAndSubsetOfClasses) {
  CellLabelGrid g{Grid<ClassId>(1, 4), Grid<std::uint8_t>(1, 4, 1)};
  LogitGrid z(1, 4);
  for (int c = 0; c < 4; ++c) {
    g.labels[c] = static_cast<ClassId>(c);
    Logits l{-30, -30, -30, -30};
    l[c] = 30;
    z.set_cell(c, l);
  }
  EXPECT_LT(lovasz_softmax(z, g, kAllClasses).value, 1e-12);
  const std::vector<ClassId> only_moving{3, 3};
  EXPECT_LT(lovasz_softmax(z, g, only_moving).value, 1e-12);
  EXPECT_THROW(lovasz_softmax(z, g, std::vector<ClassId>{5}), ConfigError);
}

TEST(TotalLossComposition, SumsTermsAndSkipsDistillation) {
  std::mt19937_64 rng(90);
  Frame f = random_frame(rng, 2, 4);
  const std::array<double, 4> w{1, 1, 1, 1};
  DistillConfig cfg;
  cfg.gamma = 0.25;
  const TotalLoss with = total_loss(f.student, &f.teacher, f.labels, cfg, w, kAllClasses);
  EXPECT_NEAR(with.total.value, with.wce + with.lovasz + 0.25 * with.wdcd, 1e-12);
  EXPECT_GT(with.wdcd, 0.0);
  const TotalLoss none = total_loss(f.student, nullptr, f.labels, cfg, w, kAllClasses);
  EXPECT_EQ(none.wdcd, 0.0);
  cfg.gamma = 0.0;
  const TotalLoss zero = total_loss(f.student, &f.teacher, f.labels, cfg, w, kAllClasses);
  EXPECT_EQ(zero.total.value, none.total.value);
  EXPECT_EQ(zero.total.grad.scores, none.total.grad.scores);
}

TEST(Losses, InputsUntouchedAndInvalidCellsZero) {
  std::mt19937_64 rng(2);
  Frame f = random_frame(rng, 2, 3);
  f.labels.valid[2] = 0;
  const Frame copy = f;
  const TotalLoss t = total_loss(f.student, &f.teacher, f.labels, DistillConfig{},
                                 std::array<double, 4>{1, 1, 1, 1}, kAllClasses);
  EXPECT_EQ(f.student, copy.student);
  EXPECT_EQ(f.teacher, copy.teacher);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(t.total.grad.scores[2 * 4 + k], 0.0);
}
