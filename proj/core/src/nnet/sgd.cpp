#include "kdmos/nnet/sgd.hpp"

#include <string>

#include "kdmos/error.hpp"

namespace kdmos::nn {

Sgd::Sgd(SgdConfig config) : config_(config), lr_(config.lr) {
  if (!(config.lr > 0.0)) throw ConfigError("learning rate must be > 0");
}

void Sgd::step(std::span<Param* const> params) {
  if (velocity_.empty()) {
    velocity_.reserve(params.size());
    for (const Param* p : params) velocity_.emplace_back(p->size(), 0.0);
  }
  if (velocity_.size() != params.size()) {
    throw ShapeMismatch("optimizer state holds " + std::to_string(velocity_.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    auto& v = velocity_[k];
    if (v.size() != p.size() || p.grad.size() != p.size()) {
      throw ShapeMismatch("optimizer state shape mismatch for " + p.name);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = config_.momentum * v[i] + p.grad[i] + config_.weight_decay * p.value[i];
      p.value[i] -= lr_ * v[i];
    }
  }
}

void Sgd::end_epoch() { lr_ *= config_.epoch_decay; }

}  // namespace kdmos::nn
