#pragma once

#include <memory>
#include <string>
#include <vector>

#include "kdmos/tensor.hpp"

namespace kdmos::nn {

/// A named trainable array and its gradient accumulator.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s);
  std::size_t size() const noexcept { return value.size(); }
};

/// Layers cache what backward needs during forward, so one instance serves
/// one forward/backward pair at a time.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual Tensor3 forward(const Tensor3& x) = 0;
  /// Returns d loss / d input and adds parameter gradients into Param::grad.
  virtual Tensor3 backward(const Tensor3& dy) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

/// k×k cross-correlation (k = 1 or 3), zero padding k/2, stride 1 or 2.
class Conv2d final : public Layer {
 public:
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride);

  Tensor3 forward(const Tensor3& x) override;
  Tensor3 backward(const Tensor3& dy) override;
  std::vector<Param*> params() override { return {&weight, &bias}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int kernel() const noexcept { return k_; }
  int stride() const noexcept { return stride_; }

  Param weight;  // [out][in][k][k]
  Param bias;    // [out]

 private:
  int in_;
  int out_;
  int k_;
  int stride_;
  // forward cache
  int in_h_ = 0;
  int in_w_ = 0;
  int out_h_ = 0;
  int out_w_ = 0;
  std::vector<double> cols_;
};

class Relu final : public Layer {
 public:
  Tensor3 forward(const Tensor3& x) override;
  Tensor3 backward(const Tensor3& dy) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }

 private:
  std::vector<unsigned char> mask_;
};

/// Learned dynamic upsampler: a per-pixel linear layer predicts 2·s² offsets,
/// scaled by the offset factor and pixel-shuffled to one (dx, dy) pair per
/// output pixel; the input is bilinearly sampled at base grid + offset.
///
/// Output pixel (i, j) has base position ((j + 0.5) / s, (i + 0.5) / s) in
/// input units where input pixel centers sit at integer + 0.5. Sampling
/// positions are clamped to the input rectangle.
class DySample final : public Layer {
 public:
  DySample(const std::string& name, int channels, int scale, double offset_factor);

  Tensor3 forward(const Tensor3& x) override;
  Tensor3 backward(const Tensor3& dy) override;
  std::vector<Param*> params() override { return {&weight, &bias}; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<DySample>(*this); }

  int channels() const noexcept { return channels_; }
  int scale() const noexcept { return scale_; }
  double offset_factor() const noexcept { return offset_factor_; }

  /// Per-output-pixel sampling positions in input index space (pixel centers
  /// at integers), before clamping. Layout: [2][sH][sW], x first.
  const std::vector<double>& last_positions() const noexcept { return positions_; }

  Param weight;  // [2s²][C]
  Param bias;    // [2s²]

 private:
  int channels_;
  int scale_;
  double offset_factor_;
  Tensor3 input_;
  std::vector<double> positions_;
};

}  // namespace kdmos::nn
