#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Core>

#include "kdmos/error.hpp"
#include "kdmos/nnet/layers.hpp"
#include "kdmos/parallel.hpp"

namespace kdmos::nn {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMatrix = Eigen::Map<RowMatrix>;
using ConstMapMatrix = Eigen::Map<const RowMatrix>;

struct Tap {
  int x0, x1, y0, y1;
  double wx, wy;
  bool clamped_x, clamped_y;
};

Tap make_tap(double fx, double fy, int w, int h) {
  Tap t{};
  const double cx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
  const double cy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
  t.clamped_x = cx != fx;
  t.clamped_y = cy != fy;
  t.x0 = static_cast<int>(std::floor(cx));
  t.y0 = static_cast<int>(std::floor(cy));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = cx - t.x0;
  t.wy = cy - t.y0;
  return t;
}

}  // namespace

DySample::DySample(const std::string& name, int channels, int scale, double offset_factor)
    : weight(name + ".weight", {2 * scale * scale, channels}),
      bias(name + ".bias", {2 * scale * scale}),
      channels_(channels),
      scale_(scale),
      offset_factor_(offset_factor) {
  if (scale < 2) throw ConfigError("DySample scale must be >= 2");
  if (!(offset_factor >= 0.0)) throw ConfigError("DySample offset factor must be >= 0");
}

Tensor3 DySample::forward(const Tensor3& x) {
  if (x.c != channels_) {
    throw ShapeMismatch(weight.name + ": expected " + std::to_string(channels_) +
                        " channels, got " + std::to_string(x.c));
  }
  input_ = x;
  const int s = scale_;
  const int s2 = s * s;
  const int oh = x.h * s;
  const int ow = x.w * s;
  const std::size_t plane = x.plane();
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;

  // offsets at input resolution: 2s² × (H·W)
  RowMatrix offsets = ConstMapMatrix(weight.value.data(), 2 * s2, channels_) *
                      ConstMapMatrix(x.data.data(), channels_, static_cast<Eigen::Index>(plane));
  for (int k = 0; k < 2 * s2; ++k) {
    offsets.row(k).array() = (offsets.row(k).array() + bias.value[k]) * offset_factor_;
  }

  // pixel shuffle + base grid
  positions_.assign(2 * out_plane, 0.0);
  for (int oy = 0; oy < oh; ++oy) {
    const int h = oy / s;
    const int i = oy % s;
    for (int ox = 0; ox < ow; ++ox) {
      const int w = ox / s;
      const int j = ox % s;
      const std::size_t src = static_cast<std::size_t>(h) * x.w + w;
      const std::size_t dst = static_cast<std::size_t>(oy) * ow + ox;
      const double dx = offsets(i * s + j, static_cast<Eigen::Index>(src));
      const double dy = offsets(s2 + i * s + j, static_cast<Eigen::Index>(src));
      positions_[dst] = (ox + 0.5) / s + dx - 0.5;
      positions_[out_plane + dst] = (oy + 0.5) / s + dy - 0.5;
    }
  }

  Tensor3 y(x.c, oh, ow);
  for (std::size_t p = 0; p < out_plane; ++p) {
    const Tap t = make_tap(positions_[p], positions_[out_plane + p], x.w, x.h);
    const std::size_t i00 = static_cast<std::size_t>(t.y0) * x.w + t.x0;
    const std::size_t i01 = static_cast<std::size_t>(t.y0) * x.w + t.x1;
    const std::size_t i10 = static_cast<std::size_t>(t.y1) * x.w + t.x0;
    const std::size_t i11 = static_cast<std::size_t>(t.y1) * x.w + t.x1;
    const double w00 = (1 - t.wy) * (1 - t.wx);
    const double w01 = (1 - t.wy) * t.wx;
    const double w10 = t.wy * (1 - t.wx);
    const double w11 = t.wy * t.wx;
    for (int c = 0; c < x.c; ++c) {
      const double* src = x.data.data() + c * plane;
      y.data[c * out_plane + p] = w00 * src[i00] + w01 * src[i01] + w10 * src[i10] + w11 * src[i11];
    }
  }
  return y;
}

Tensor3 DySample::backward(const Tensor3& dy) {
  const Tensor3& x = input_;
  const int s = scale_;
  const int s2 = s * s;
  const int oh = x.h * s;
  const int ow = x.w * s;
  if (dy.c != x.c || dy.h != oh || dy.w != ow) {
    throw ShapeMismatch(weight.name + ": gradient shape does not match forward output");
  }
  const std::size_t plane = x.plane();
  const std::size_t out_plane = static_cast<std::size_t>(oh) * ow;

  Tensor3 dx(x.c, x.h, x.w);
  RowMatrix doffsets = RowMatrix::Zero(2 * s2, static_cast<Eigen::Index>(plane));

  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const std::size_t p = static_cast<std::size_t>(oy) * ow + ox;
      const Tap t = make_tap(positions_[p], positions_[out_plane + p], x.w, x.h);
      const std::size_t i00 = static_cast<std::size_t>(t.y0) * x.w + t.x0;
      const std::size_t i01 = static_cast<std::size_t>(t.y0) * x.w + t.x1;
      const std::size_t i10 = static_cast<std::size_t>(t.y1) * x.w + t.x0;
      const std::size_t i11 = static_cast<std::size_t>(t.y1) * x.w + t.x1;
      const double w00 = (1 - t.wy) * (1 - t.wx);
      const double w01 = (1 - t.wy) * t.wx;
      const double w10 = t.wy * (1 - t.wx);
      const double w11 = t.wy * t.wx;
      double dfx = 0.0;
      double dfy = 0.0;
      for (int c = 0; c < x.c; ++c) {
        const double g = dy.data[c * out_plane + p];
        if (g == 0.0) continue;
        const double* src = x.data.data() + c * plane;
        double* dst = dx.data.data() + c * plane;
        dst[i00] += g * w00;
        dst[i01] += g * w01;
        dst[i10] += g * w10;
        dst[i11] += g * w11;
        dfx += g * ((1 - t.wy) * (src[i01] - src[i00]) + t.wy * (src[i11] - src[i10]));
        dfy += g * ((1 - t.wx) * (src[i10] - src[i00]) + t.wx * (src[i11] - src[i01]));
      }
      if (t.clamped_x) dfx = 0.0;
      if (t.clamped_y) dfy = 0.0;
      const int h = oy / s;
      const int w = ox / s;
      const Eigen::Index src_col = static_cast<Eigen::Index>(h) * x.w + w;
      const int k = (oy % s) * s + (ox % s);
      doffsets(k, src_col) += dfx;
      doffsets(s2 + k, src_col) += dfy;
    }
  }

  // offsets = a · (W x + b)
  doffsets *= offset_factor_;
  ConstMapMatrix xm(x.data.data(), channels_, static_cast<Eigen::Index>(plane));
  MapMatrix(weight.grad.data(), 2 * s2, channels_).noalias() += doffsets * xm.transpose();
  for (int k = 0; k < 2 * s2; ++k) {
    bias.grad[k] += pairwise_sum(std::span<const double>(doffsets.row(k).data(), static_cast<std::size_t>(plane)));
  }
  MapMatrix(dx.data.data(), channels_, static_cast<Eigen::Index>(plane)).noalias() +=
      ConstMapMatrix(weight.value.data(), 2 * s2, channels_).transpose() * doffsets;
  return dx;
}

}  // namespace kdmos::nn
