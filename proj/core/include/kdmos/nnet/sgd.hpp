#pragma once

#include <span>
#include <vector>

#include "kdmos/nnet/layers.hpp"

namespace kdmos::nn {

struct SgdConfig {
  double lr = 0.005;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double epoch_decay = 0.99;
};

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
class Sgd {
 public:
  explicit Sgd(SgdConfig config = {});

  void step(std::span<Param* const> params);
  /// Multiplies the learning rate by epoch_decay.
  void end_epoch();

  double lr() const noexcept { return lr_; }
  const SgdConfig& config() const noexcept { return config_; }
  const std::vector<std::vector<double>>& velocity() const noexcept { return velocity_; }

 private:
  SgdConfig config_;
  double lr_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace kdmos::nn
