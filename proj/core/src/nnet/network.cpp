#include "kdmos/nnet/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"

namespace kdmos::nn {

std::string ArchSpec::to_string() const {
  return std::string(kind == ArchKind::Student ? "student" : "teacher") +
         " in=" + std::to_string(in_channels) + " width=" + std::to_string(base_width) +
         " scale=" + std::to_string(scale) + " a=" + io::format_double(offset_factor);
}

ArchSpec ArchSpec::parse(const std::string& text) {
  std::istringstream in(text);
  std::string kind;
  in >> kind;
  ArchSpec spec;
  if (kind == "student") {
    spec.kind = ArchKind::Student;
  } else if (kind == "teacher") {
    spec.kind = ArchKind::Teacher;
  } else {
    throw ConfigError("unknown architecture kind '" + kind + "'");
  }
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError("bad architecture token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    try {
      if (key == "in") {
        spec.in_channels = std::stoi(val);
      } else if (key == "width") {
        spec.base_width = std::stoi(val);
      } else if (key == "scale") {
        spec.scale = std::stoi(val);
      } else if (key == "a") {
        spec.offset_factor = std::stod(val);
      } else {
        throw ConfigError("unknown architecture key '" + key + "'");
      }
    } catch (const std::logic_error&) {
      throw ConfigError("bad architecture value '" + tok + "'");
    }
  }
  if (spec.in_channels < 1 || spec.base_width < 1 || spec.scale != 2) {
    throw ConfigError("invalid architecture '" + text + "'");
  }
  return spec;
}

Network::Network(const ArchSpec& arch) : arch_(arch) {
  const int w = arch.kind == ArchKind::Teacher ? 2 * arch.base_width : arch.base_width;
  const int s = arch.scale;
  const double a = arch.offset_factor;
  auto conv = [&](const std::string& name, int in, int out, int k, int stride, bool relu) {
    layers_.push_back(std::make_unique<Conv2d>(name, in, out, k, stride));
    if (relu) layers_.push_back(std::make_unique<Relu>());
  };
  conv("enc1", arch.in_channels, w, 3, 1, true);
  conv("enc2", w, 2 * w, 3, 2, true);
  conv("enc3", 2 * w, 4 * w, 3, 2, true);
  if (arch.kind == ArchKind::Teacher) conv("enc4", 4 * w, 4 * w, 3, 1, true);
  layers_.push_back(std::make_unique<DySample>("up1", 4 * w, s, a));
  conv("dec1", 4 * w, 2 * w, 3, 1, true);
  layers_.push_back(std::make_unique<DySample>("up2", 2 * w, s, a));
  conv("dec2", 2 * w, w, 3, 1, true);
  conv("head", w, kNumClasses, 1, 1, false);
}

Network::Network(const Network& other) : arch_(other.arch_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network tmp(other);
    *this = std::move(tmp);
  }
  return *this;
}

Tensor3 Network::forward(const Tensor3& x) {
  if (x.h % spatial_multiple() != 0 || x.w % spatial_multiple() != 0) {
    throw ShapeMismatch("input spatial size " + std::to_string(x.h) + "x" + std::to_string(x.w) +
                        " must be divisible by " + std::to_string(spatial_multiple()));
  }
  Tensor3 h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

Tensor3 Network::backward(const Tensor3& dy) {
  Tensor3 g = dy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Network::params() {
  std::vector<Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

std::vector<const Param*> Network::params() const {
  std::vector<const Param*> out;
  for (auto& l : layers_) {
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

void Network::zero_grad() {
  for (Param* p : params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Param* p : params()) n += p->size();
  return n;
}

void Network::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& l : layers_) {
    if (auto* conv = dynamic_cast<Conv2d*>(l.get())) {
      const int fan_in = conv->in_channels() * conv->kernel() * conv->kernel();
      const double bound = std::sqrt(6.0 / fan_in);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : conv->weight.value) v = dist(rng);
      std::fill(conv->bias.value.begin(), conv->bias.value.end(), 0.0);
    } else if (auto* up = dynamic_cast<DySample*>(l.get())) {
      std::fill(up->weight.value.begin(), up->weight.value.end(), 0.0);
      std::fill(up->bias.value.begin(), up->bias.value.end(), 0.0);
    }
  }
}

LogitGrid to_logit_grid(const Tensor3& logits) {
  if (logits.c != kNumClasses) throw ShapeMismatch("logit tensor must have 4 channels");
  LogitGrid g(logits.h, logits.w);
  const std::size_t plane = logits.plane();
  for (std::size_t cell = 0; cell < plane; ++cell) {
    for (int k = 0; k < kNumClasses; ++k) g.scores[cell * kNumClasses + k] = logits.data[k * plane + cell];
  }
  return g;
}

Tensor3 to_tensor(const LogitGrid& grid) {
  Tensor3 t(kNumClasses, grid.rows(), grid.cols());
  const std::size_t plane = t.plane();
  for (std::size_t cell = 0; cell < plane; ++cell) {
    for (int k = 0; k < kNumClasses; ++k) t.data[k * plane + cell] = grid.scores[cell * kNumClasses + k];
  }
  return t;
}

LogitGrid student_forward(const MotionTensor& input, Network& net) {
  if (input.channels.c != net.arch().in_channels) {
    throw ShapeMismatch("motion tensor has " + std::to_string(input.channels.c) +
                        " channels, network expects " + std::to_string(net.arch().in_channels));
  }
  return to_logit_grid(net.forward(input.channels));
}

Grid<ClassId> predict_classes(const LogitGrid& logits) {
  Grid<ClassId> out(logits.rows(), logits.cols(), kUnlabeled);
  for (std::size_t c = 0; c < logits.num_cells(); ++c) {
    const double* z = logits.scores.data() + c * kNumClasses;
    int best = 0;
    for (int k = 1; k < kNumClasses; ++k) {
      if (z[k] > z[best]) best = k;
    }
    out[c] = static_cast<ClassId>(best);
  }
  return out;
}

}  // namespace kdmos::nn
