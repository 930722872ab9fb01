#include "kdmos/app/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"
#include "kdmos/losses.hpp"
#include "kdmos/nnet/layers.hpp"

namespace kdmos::app {

namespace {

constexpr double kStep = 1e-5;
constexpr double kGradFloor = 1e-6;
constexpr int kInstances = 20;

using Rng = std::mt19937_64;

double normal(Rng& rng, double sd = 1.0) { return std::normal_distribution<double>(0.0, sd)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
}

/// Central differences of f over every entry of `xs`, compared to `analytic`.
double check_gradient(std::vector<double>& xs, const std::vector<double>& analytic,
                      const std::function<double()>& f) {
  double worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double keep = xs[i];
    xs[i] = keep + kStep;
    const double up = f();
    xs[i] = keep - kStep;
    const double down = f();
    xs[i] = keep;
    worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * kStep)));
  }
  return worst;
}

struct LossInstance {
  LogitGrid student;
  LogitGrid teacher;
  CellLabelGrid labels;
  DistillConfig cfg;
  std::array<double, kNumClasses> class_weights{};
};

LossInstance random_loss_instance(Rng& rng) {
  const int rows = uniform_int(rng, 2, 4);
  const int cols = uniform_int(rng, 3, 6);
  LossInstance in;
  in.student = LogitGrid(rows, cols);
  in.teacher = LogitGrid(rows, cols);
  in.labels.labels = Grid<ClassId>(rows, cols, kUnlabeled);
  in.labels.valid = Grid<std::uint8_t>(rows, cols, 0);
  for (std::size_t c = 0; c < in.student.num_cells(); ++c) {
    const bool occupied = std::bernoulli_distribution(0.8)(rng) || c == 0;
    in.student.valid[c] = in.teacher.valid[c] = occupied ? 1 : 0;
    in.labels.valid[c] = occupied ? 1 : 0;
    in.labels.labels[c] = static_cast<ClassId>(uniform_int(rng, 0, kNumClasses - 1));
    for (int k = 0; k < kNumClasses; ++k) {
      in.student.scores[c * kNumClasses + k] = normal(rng, 2.0);
      in.teacher.scores[c * kNumClasses + k] = normal(rng, 2.0);
    }
  }
  const double taus[] = {1.0, 2.0, 4.0};
  in.cfg.temperature = taus[uniform_int(rng, 0, 2)];
  in.cfg.beta = std::uniform_real_distribution<double>(0.0, 2.0)(rng);
  in.cfg.gamma = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
  in.cfg.tckd_scope = uniform_int(rng, 0, 1) ? TckdScope::AllClasses : TckdScope::MovingOnly;
  for (double& w : in.class_weights) w = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
  return in;
}

/// The Lovász loss has kinks where two errors of a class tie; instances with
/// errors closer than `gap` are not differentiable at FD resolution.
bool lovasz_errors_separated(const LogitGrid& z, const CellLabelGrid& labels, double gap) {
  for (int cls = 0; cls < kNumClasses; ++cls) {
    std::vector<double> m;
    for (std::size_t c = 0; c < z.num_cells(); ++c) {
      if (!z.valid[c] || !labels.valid[c]) continue;
      const Logits p = softmax_probs(z.cell(c));
      m.push_back(labels.labels[c] == cls ? 1.0 - p[cls] : p[cls]);
    }
    std::sort(m.begin(), m.end());
    for (std::size_t i = 1; i < m.size(); ++i) {
      if (m[i] - m[i - 1] < gap) return false;
    }
  }
  return true;
}

Tensor3 random_tensor(Rng& rng, int c, int h, int w, double sd = 1.0) {
  Tensor3 t(c, h, w);
  for (double& v : t.data) v = normal(rng, sd);
  return t;
}

double dot(const Tensor3& a, const Tensor3& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
  return s;
}

/// Checks input and parameter gradients of `layer` for L = <r, layer(x)>.
double check_layer(nn::Layer& layer, Tensor3 x, Rng& rng) {
  const Tensor3 y0 = layer.forward(x);
  const Tensor3 r = random_tensor(rng, y0.c, y0.h, y0.w);
  for (nn::Param* p : layer.params()) std::fill(p->grad.begin(), p->grad.end(), 0.0);
  layer.forward(x);
  const Tensor3 dx = layer.backward(r);
  std::vector<std::vector<double>> param_grads;
  for (nn::Param* p : layer.params()) param_grads.push_back(p->grad);

  auto loss = [&] { return dot(r, layer.forward(x)); };
  double worst = check_gradient(x.data, dx.data, loss);
  auto params = layer.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    worst = std::max(worst, check_gradient(params[i]->value, param_grads[i], loss));
  }
  return worst;
}

/// DySample sampling positions within `gap` of an integer sit on a bilinear
/// kink (cell change or clamp edge).
bool positions_clear_of_integers(const std::vector<double>& positions, double gap) {
  for (double p : positions) {
    if (std::abs(p - std::round(p)) < gap) return false;
  }
  return true;
}

void randomize(nn::Param& p, Rng& rng, double sd) {
  for (double& v : p.value) v = normal(rng, sd);
}

}  // namespace

SuiteReport verify_identity(std::uint64_t seed) {
  SuiteReport r{"identity", 0, 0.0, 1e-9, {}};
  Rng rng(seed);
  for (double tau : {1.0, 2.0, 4.0}) {
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      Logits zt, zs;
      for (int k = 0; k < kNumClasses; ++k) {
        zt[k] = normal(rng, 3.0);
        zs[k] = normal(rng, 3.0);
      }
      const int t = uniform_int(rng, 0, kNumClasses - 1);
      const double pt = softmax_probs(zt, tau)[t];
      const double residual =
          kd_kl(zt, zs, tau) - (tckd(zt, zs, t, tau) + (1.0 - pt) * nckd(zt, zs, t, tau));
      worst = std::max(worst, std::abs(residual));
      ++r.instances;
    }
    r.max_error = std::max(r.max_error, worst);
    r.details.push_back("tau=" + io::format_double(tau) + " max_residual=" + io::format_double(worst));
  }
  return r;
}

SuiteReport verify_gradcheck(std::uint64_t seed) {
  SuiteReport r{"gradcheck", 0, 0.0, 1e-4, {}};
  Rng rng(seed);
  auto record = [&](const std::string& target, int count, double worst) {
    r.instances += static_cast<std::size_t>(count);
    r.max_error = std::max(r.max_error, worst);
    r.details.push_back(target + " instances=" + std::to_string(count) +
                        " max_rel_error=" + io::format_double(worst));
  };

  {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) {
      LossInstance in = random_loss_instance(rng);
      const LossResult res = wdcd_frame(in.teacher, in.student, in.labels, in.cfg);
      worst = std::max(worst, check_gradient(in.student.scores, res.grad.scores, [&] {
        return wdcd_frame(in.teacher, in.student, in.labels, in.cfg).value;
      }));
    }
    record("wdcd_frame", kInstances, worst);
  }
  {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) {
      LossInstance in = random_loss_instance(rng);
      const LossResult res = weighted_cross_entropy(in.student, in.labels, in.class_weights);
      worst = std::max(worst, check_gradient(in.student.scores, res.grad.scores, [&] {
        return weighted_cross_entropy(in.student, in.labels, in.class_weights).value;
      }));
    }
    record("weighted_cross_entropy", kInstances, worst);
  }
  {
    double worst = 0.0;
    int done = 0;
    while (done < kInstances) {
      LossInstance in = random_loss_instance(rng);
      if (!lovasz_errors_separated(in.student, in.labels, 1e-4)) continue;
      const LossResult res = lovasz_softmax(in.student, in.labels, kAllClasses);
      worst = std::max(worst, check_gradient(in.student.scores, res.grad.scores, [&] {
        return lovasz_softmax(in.student, in.labels, kAllClasses).value;
      }));
      ++done;
    }
    record("lovasz_softmax", kInstances, worst);
  }
  {
    double worst = 0.0;
    int done = 0;
    while (done < kInstances) {
      LossInstance in = random_loss_instance(rng);
      if (!lovasz_errors_separated(in.student, in.labels, 1e-4)) continue;
      auto eval = [&] {
        return total_loss(in.student, &in.teacher, in.labels, in.cfg, in.class_weights, kAllClasses);
      };
      const TotalLoss res = eval();
      worst = std::max(worst, check_gradient(in.student.scores, res.total.grad.scores,
                                             [&] { return eval().total.value; }));
      ++done;
    }
    record("total_loss", kInstances, worst);
  }
  {
    struct ConvShape {
      int in, out, k, stride, h, w;
    };
    const ConvShape shapes[] = {{3, 4, 3, 1, 5, 6}, {3, 4, 3, 2, 6, 8}, {4, 3, 1, 1, 4, 5},
                                {2, 3, 3, 2, 5, 7}};
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) {
      const ConvShape& s = shapes[i % 4];
      nn::Conv2d conv("conv", s.in, s.out, s.k, s.stride);
      randomize(conv.weight, rng, 0.5);
      randomize(conv.bias, rng, 0.5);
      worst = std::max(worst, check_layer(conv, random_tensor(rng, s.in, s.h, s.w), rng));
    }
    record("conv2d", kInstances, worst);
  }
  {
    double worst = 0.0;
    for (int i = 0; i < kInstances; ++i) {
      Tensor3 x = random_tensor(rng, 3, 4, 5);
      // keep inputs off the kink at zero
      for (double& v : x.data) {
        if (std::abs(v) < 1e-3) v = v < 0 ? -1e-3 : 1e-3;
      }
      nn::Relu relu;
      worst = std::max(worst, check_layer(relu, x, rng));
    }
    record("relu", kInstances, worst);
  }
  {
    double worst = 0.0;
    int done = 0;
    while (done < kInstances) {
      const int scale = done % 2 == 0 ? 2 : 3;
      const int c = uniform_int(rng, 2, 4);
      nn::DySample up("up", c, scale, std::uniform_real_distribution<double>(0.1, 0.5)(rng));
      randomize(up.weight, rng, 0.5);
      randomize(up.bias, rng, 0.5);
      const Tensor3 x = random_tensor(rng, c, uniform_int(rng, 2, 4), uniform_int(rng, 2, 5));
      up.forward(x);
      if (!positions_clear_of_integers(up.last_positions(), 1e-4)) continue;
      worst = std::max(worst, check_layer(up, x, rng));
      ++done;
    }
    record("dysample", kInstances, worst);
  }
  return r;
}

SuiteReport verify_dysample(std::uint64_t seed) {
  SuiteReport r{"dysample", 0, 0.0, 1e-6, {}};
  Rng rng(seed);
  for (int i = 0; i < kInstances; ++i) {
    const int c = uniform_int(rng, 1, 5);
    const int h = uniform_int(rng, 1, 6);
    const int w = uniform_int(rng, 1, 6);
    const int s = i % 3 == 2 ? 3 : 2;
    const Tensor3 x = random_tensor(rng, c, h, w);
    nn::DySample up("up", c, s, 0.25);  // weights and bias start at zero
    const Tensor3 y = up.forward(x);

    // half-pixel bilinear resize with edge clamping
    double worst = 0.0;
    for (int ch = 0; ch < c; ++ch) {
      for (int oy = 0; oy < h * s; ++oy) {
        for (int ox = 0; ox < w * s; ++ox) {
          const double sy = std::clamp((oy + 0.5) / s - 0.5, 0.0, h - 1.0);
          const double sx = std::clamp((ox + 0.5) / s - 0.5, 0.0, w - 1.0);
          const int y0 = static_cast<int>(sy);
          const int x0 = static_cast<int>(sx);
          const int y1 = std::min(y0 + 1, h - 1);
          const int x1 = std::min(x0 + 1, w - 1);
          const double fy = sy - y0;
          const double fx = sx - x0;
          const double top = x.at(ch, y0, x0) * (1 - fx) + x.at(ch, y0, x1) * fx;
          const double bottom = x.at(ch, y1, x0) * (1 - fx) + x.at(ch, y1, x1) * fx;
          const double expected = top * (1 - fy) + bottom * fy;
          worst = std::max(worst, std::abs(expected - y.at(ch, oy, ox)));
        }
      }
    }
    r.max_error = std::max(r.max_error, worst);
    ++r.instances;
  }
  return r;
}

SuiteReport verify_lovasz(std::uint64_t seed) {
  SuiteReport r{"lovasz", 0, 0.0, 1e-9, {}};
  Rng rng(seed);
  for (int i = 0; i < 50; ++i) {
    LossInstance in = random_loss_instance(rng);
    const double got = lovasz_softmax(in.student, in.labels, kAllClasses).value;

    // per class: integral over thresholds of the Jaccard loss of {i : m_i >= theta}
    std::vector<double> per_class;
    for (int cls = 0; cls < kNumClasses; ++cls) {
      std::vector<double> m;
      std::vector<bool> fg;
      for (std::size_t c = 0; c < in.student.num_cells(); ++c) {
        if (!in.student.valid[c] || !in.labels.valid[c]) continue;
        const Logits p = softmax_probs(in.student.cell(c));
        fg.push_back(in.labels.labels[c] == cls);
        m.push_back(fg.back() ? 1.0 - p[cls] : p[cls]);
      }
      const auto positives = std::count(fg.begin(), fg.end(), true);
      if (positives == 0) continue;
      auto jaccard_loss = [&](double theta) {
        std::size_t missed_fg = 0, false_bg = 0;
        for (std::size_t k = 0; k < m.size(); ++k) {
          if (m[k] < theta) continue;
          (fg[k] ? missed_fg : false_bg) += 1;
        }
        const double inter = static_cast<double>(positives) - static_cast<double>(missed_fg);
        const double uni = static_cast<double>(positives) + static_cast<double>(false_bg);
        return 1.0 - inter / uni;
      };
      std::vector<double> levels = m;
      levels.push_back(0.0);
      std::sort(levels.begin(), levels.end());
      levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
      double integral = 0.0;
      for (std::size_t k = 1; k < levels.size(); ++k) {
        integral += (levels[k] - levels[k - 1]) * jaccard_loss(levels[k]);
      }
      per_class.push_back(integral);
    }
    double expected = 0.0;
    for (double v : per_class) expected += v;
    if (!per_class.empty()) expected /= static_cast<double>(per_class.size());
    r.max_error = std::max(r.max_error, std::abs(expected - got));
    ++r.instances;
  }
  return r;
}

std::vector<SuiteReport> run_verify(std::string_view suite) {
  if (suite == "identity") return {verify_identity()};
  if (suite == "gradcheck") return {verify_gradcheck()};
  if (suite == "dysample") return {verify_dysample()};
  if (suite == "lovasz") return {verify_lovasz()};
  if (suite == "all") return {verify_identity(), verify_gradcheck(), verify_dysample(), verify_lovasz()};
  throw ConfigError("unknown verify suite '" + std::string(suite) +
                    "' (identity | gradcheck | dysample | lovasz | all)");
}

std::string format_report(const SuiteReport& r) {
  std::ostringstream o;
  for (const auto& d : r.details) o << r.name << ": " << d << '\n';
  o << "suite=" << r.name << " instances=" << r.instances
    << " max_error=" << io::format_double(r.max_error)
    << " threshold=" << io::format_double(r.threshold) << " status=" << (r.passed() ? "PASS" : "FAIL")
    << '\n';
  return o.str();
}

}  // namespace kdmos::app
