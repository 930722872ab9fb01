#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "kdmos/bev.hpp"
#include "kdmos/losses.hpp"
#include "kdmos/nnet/layers.hpp"
#include "kdmos/tensor.hpp"

namespace kdmos::nn {

enum class ArchKind { Student, Teacher };

/// Architecture descriptor, serialized into checkpoints as
/// `student in=8 width=16 scale=2 a=0.25`.
struct ArchSpec {
  ArchKind kind = ArchKind::Student;
  int in_channels = 8;
  int base_width = 16;
  int scale = 2;
  double offset_factor = 0.25;

  std::string to_string() const;
  static ArchSpec parse(const std::string& text);

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Feed-forward encoder/decoder. Student:
///   conv(N→w) → conv/2(w→2w) → conv/2(2w→4w) → DySample → conv(4w→2w)
///   → DySample → conv(2w→w) → 1×1 head(w→4), ReLU after every 3×3 conv.
/// Teacher doubles w and adds a stride-1 conv at the bottleneck.
class Network {
 public:
  Network() = default;
  explicit Network(const ArchSpec& arch);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  const ArchSpec& arch() const noexcept { return arch_; }

  Tensor3 forward(const Tensor3& x);
  /// Backpropagates d loss / d output; parameter gradients accumulate.
  Tensor3 backward(const Tensor3& dy);

  std::vector<Param*> params();
  std::vector<const Param*> params() const;
  void zero_grad();
  std::size_t parameter_count() const;

  /// He-uniform weights from a seeded generator; biases and DySample linears zero.
  void initialize(std::uint64_t seed);

  /// Spatial dims must be divisible by this.
  int spatial_multiple() const noexcept { return 4; }

 private:
  ArchSpec arch_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Channel-major network output (4×H×W) to cell-major logits. All cells valid.
LogitGrid to_logit_grid(const Tensor3& logits);
/// Cell-major gradient back to a 4×H×W tensor.
Tensor3 to_tensor(const LogitGrid& grid);

LogitGrid student_forward(const MotionTensor& input, Network& net);

/// argmax per cell; ties resolve to the lowest class id.
Grid<ClassId> predict_classes(const LogitGrid& logits);

}  // namespace kdmos::nn
