#include <random>

#include <benchmark/benchmark.h>

#include "kdmos/bev.hpp"
#include "kdmos/geometry.hpp"
#include "kdmos/losses.hpp"
#include "kdmos/nnet/layers.hpp"
#include "kdmos/nnet/network.hpp"

using namespace kdmos;

namespace {

PointCloud lidar_like(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> r(1.0, 49.0), th(-3.14159, 3.14159), z(-2.0, 1.0);
  PointCloud pc;
  pc.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rr = r(rng), t = th(rng);
    pc.points.push_back({rr * std::cos(t), rr * std::sin(t), z(rng), 0.1f});
  }
  return pc;
}

Tensor3 random_tensor(int c, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Tensor3 t(c, h, w);
  for (double& v : t.data) v = n(rng);
  return t;
}

LogitGrid random_logits(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 2.0);
  LogitGrid g(rows, cols);
  for (double& v : g.scores) v = n(rng);
  return g;
}

CellLabelGrid random_labels(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  CellLabelGrid g{Grid<ClassId>(rows, cols), Grid<std::uint8_t>(rows, cols, 1)};
  for (std::size_t c = 0; c < g.labels.size(); ++c) g.labels[c] = static_cast<ClassId>(1 + rng() % 3);
  return g;
}

void BM_ProjectToCells(benchmark::State& state) {
  const PointCloud pc = lidar_like(static_cast<std::size_t>(state.range(0)), 1);
  const BevGrid g;
  for (auto _ : state) benchmark::DoNotOptimize(project_to_cells(pc, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ProjectToCells)->Arg(10000)->Arg(130000);

void BM_MotionTensor(benchmark::State& state) {
  const BevConfig cfg;
  std::vector<PointCloud> frames;
  std::vector<Pose> poses;
  for (int f = 0; f < cfg.n_frames; ++f) {
    frames.push_back(lidar_like(static_cast<std::size_t>(state.range(0)), static_cast<std::uint64_t>(f)));
    poses.push_back(Pose::translation(0.3 * f, 0.0, 0.0));
  }
  const AlignedSequence window = align_to_current(frames, poses, frames.size() - 1);
  for (auto _ : state) benchmark::DoNotOptimize(build_motion_tensor(window, cfg));
}
BENCHMARK(BM_MotionTensor)->Arg(130000)->Unit(benchmark::kMillisecond);

void BM_Conv3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  nn::Conv2d conv("c", c, c, 3, 1);
  const Tensor3 x = random_tensor(c, 32, 360, 2);
  for (auto _ : state) {
    const Tensor3 y = conv.forward(x);
    benchmark::DoNotOptimize(conv.backward(y));
  }
}
BENCHMARK(BM_Conv3x3)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_DySample(benchmark::State& state) {
  nn::DySample up("u", 32, 2, 0.25);
  const Tensor3 x = random_tensor(32, 16, 180, 3);
  for (auto _ : state) {
    const Tensor3 y = up.forward(x);
    benchmark::DoNotOptimize(up.backward(y));
  }
}
BENCHMARK(BM_DySample)->Unit(benchmark::kMillisecond);

void BM_StudentForward(benchmark::State& state) {
  nn::Network net(nn::ArchSpec{});
  net.initialize(0);
  const Tensor3 x = random_tensor(8, 32, 360, 4);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_StudentForward)->Unit(benchmark::kMillisecond);

void BM_WdcdFrame(benchmark::State& state) {
  const LogitGrid t = random_logits(32, 360, 5), s = random_logits(32, 360, 6);
  const CellLabelGrid labels = random_labels(32, 360, 7);
  const DistillConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(wdcd_frame(t, s, labels, cfg));
}
BENCHMARK(BM_WdcdFrame)->Unit(benchmark::kMicrosecond);

void BM_Lovasz(benchmark::State& state) {
  const LogitGrid s = random_logits(32, 360, 8);
  const CellLabelGrid labels = random_labels(32, 360, 9);
  for (auto _ : state) benchmark::DoNotOptimize(lovasz_softmax(s, labels, kAllClasses));
}
BENCHMARK(BM_Lovasz)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
