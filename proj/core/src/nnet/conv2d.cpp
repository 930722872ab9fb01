#include <algorithm>
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

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

Param::Param(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)), value(product(shape), 0.0), grad(product(shape), 0.0) {}

Conv2d::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride)
    : weight(name + ".weight", {out_channels, in_channels, kernel, kernel}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      k_(kernel),
      stride_(stride) {
  if (kernel != 1 && kernel != 3) throw ConfigError("conv kernel must be 1 or 3");
  if (stride != 1 && stride != 2) throw ConfigError("conv stride must be 1 or 2");
}

Tensor3 Conv2d::forward(const Tensor3& x) {
  if (x.c != in_) {
    throw ShapeMismatch(weight.name + ": expected " + std::to_string(in_) + " channels, got " +
                        std::to_string(x.c));
  }
  const int pad = k_ / 2;
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = (x.h + 2 * pad - k_) / stride_ + 1;
  out_w_ = (x.w + 2 * pad - k_) / stride_ + 1;
  const int patch = in_ * k_ * k_;
  const std::size_t out_plane = static_cast<std::size_t>(out_h_) * out_w_;

  // im2col: row (c, ky, kx), column (oy, ox)
  cols_.assign(static_cast<std::size_t>(patch) * out_plane, 0.0);
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        double* row = cols_.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * out_plane;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int iy = oy * stride_ + ky - pad;
          if (iy < 0 || iy >= x.h) continue;
          const double* src = x.data.data() + (static_cast<std::size_t>(c) * x.h + iy) * x.w;
          double* dst = row + static_cast<std::size_t>(oy) * out_w_;
          for (int ox = 0; ox < out_w_; ++ox) {
            const int ix = ox * stride_ + kx - pad;
            if (ix >= 0 && ix < x.w) dst[ox] = src[ix];
          }
        }
      }
    }
  }

  Tensor3 y(out_, out_h_, out_w_);
  ConstMapMatrix w(weight.value.data(), out_, patch);
  ConstMapMatrix cols(cols_.data(), patch, static_cast<Eigen::Index>(out_plane));
  MapMatrix ym(y.data.data(), out_, static_cast<Eigen::Index>(out_plane));
  ym.noalias() = w * cols;
  for (int o = 0; o < out_; ++o) ym.row(o).array() += bias.value[o];
  return y;
}

Tensor3 Conv2d::backward(const Tensor3& dy) {
  if (dy.c != out_ || dy.h != out_h_ || dy.w != out_w_) {
    throw ShapeMismatch(weight.name + ": gradient shape does not match forward output");
  }
  const int pad = k_ / 2;
  const int patch = in_ * k_ * k_;
  const std::size_t out_plane = static_cast<std::size_t>(out_h_) * out_w_;
  ConstMapMatrix dym(dy.data.data(), out_, static_cast<Eigen::Index>(out_plane));
  ConstMapMatrix cols(cols_.data(), patch, static_cast<Eigen::Index>(out_plane));
  MapMatrix dw(weight.grad.data(), out_, patch);
  dw.noalias() += dym * cols.transpose();
  // Eigen's vectorized sum peels by address, so reduce in a fixed order
  for (int o = 0; o < out_; ++o) bias.grad[o] += pairwise_sum(dy.channel(o));

  ConstMapMatrix w(weight.value.data(), out_, patch);
  RowMatrix dcols = w.transpose() * dym;

  // col2im
  Tensor3 dx(in_, in_h_, in_w_);
  for (int c = 0; c < in_; ++c) {
    for (int ky = 0; ky < k_; ++ky) {
      for (int kx = 0; kx < k_; ++kx) {
        const double* row = dcols.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * out_plane;
        for (int oy = 0; oy < out_h_; ++oy) {
          const int iy = oy * stride_ + ky - pad;
          if (iy < 0 || iy >= in_h_) continue;
          double* dst = dx.data.data() + (static_cast<std::size_t>(c) * in_h_ + iy) * in_w_;
          const double* src = row + static_cast<std::size_t>(oy) * out_w_;
          for (int ox = 0; ox < out_w_; ++ox) {
            const int ix = ox * stride_ + kx - pad;
            if (ix >= 0 && ix < in_w_) dst[ix] += src[ox];
          }
        }
      }
    }
  }
  return dx;
}

Tensor3 Relu::forward(const Tensor3& x) {
  Tensor3 y = x;
  mask_.resize(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    mask_[i] = y.data[i] > 0.0;
    if (!mask_[i]) y.data[i] = 0.0;
  }
  return y;
}

Tensor3 Relu::backward(const Tensor3& dy) {
  if (dy.size() != mask_.size()) throw ShapeMismatch("relu: gradient size mismatch");
  Tensor3 dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!mask_[i]) dx.data[i] = 0.0;
  }
  return dx;
}

}  // namespace kdmos::nn
