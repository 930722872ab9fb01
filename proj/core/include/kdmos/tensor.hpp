#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace kdmos {

/// C×H×W float64 tensor, channel-major.
struct Tensor3 {
  int c = 0;
  int h = 0;
  int w = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(int channels, int height, int width, double fill = 0.0)
      : c(channels), h(height), w(width),
        data(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t size() const noexcept { return data.size(); }

  double& at(int ch, int y, int x) { return data[ch * plane() + static_cast<std::size_t>(y) * w + x]; }
  double at(int ch, int y, int x) const {
    return data[ch * plane() + static_cast<std::size_t>(y) * w + x];
  }

  std::span<double> channel(int ch) { return {data.data() + ch * plane(), plane()}; }
  std::span<const double> channel(int ch) const { return {data.data() + ch * plane(), plane()}; }

  bool same_shape(const Tensor3& o) const noexcept { return c == o.c && h == o.h && w == o.w; }

  friend bool operator==(const Tensor3&, const Tensor3&) = default;
};

}  // namespace kdmos
