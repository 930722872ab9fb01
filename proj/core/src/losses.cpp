#include "kdmos/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "kdmos/error.hpp"
#include "kdmos/parallel.hpp"

namespace kdmos {

LogitGrid::LogitGrid(int rows, int cols, double fill)
    : scores(static_cast<std::size_t>(rows) * cols * kNumClasses, fill),
      valid(rows, cols, 1),
      rows_(rows),
      cols_(cols) {}

Logits LogitGrid::cell(std::size_t i) const {
  Logits z;
  std::copy_n(scores.begin() + static_cast<std::ptrdiff_t>(i * kNumClasses), kNumClasses, z.begin());
  return z;
}

void LogitGrid::set_cell(std::size_t i, const Logits& z) {
  std::copy(z.begin(), z.end(), scores.begin() + static_cast<std::ptrdiff_t>(i * kNumClasses));
}

void DistillConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (moving_class >= kNumClasses) throw ConfigError("moving_class out of range");
  if (!(prob_floor > 0.0)) throw ConfigError("prob_floor must be > 0");
}

namespace {

// Log-space view of softmax(z / tau) around one target class.
struct LogSplit {
  Logits scaled{};   // z / tau
  double lse = 0.0;  // log sum exp over all classes
  double lse_nt = 0.0;  // log sum exp over non-target classes

  double log_p(int i) const { return scaled[i] - lse; }
  double log_p_target(int t) const { return scaled[t] - lse; }
  double log_p_nontarget() const { return lse_nt - lse; }
  double log_phat(int i) const { return scaled[i] - lse_nt; }
};

double log_sum_exp(const Logits& s, int skip) {
  double mx = -INFINITY;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i != skip) mx = std::max(mx, s[i]);
  }
  double acc = 0.0;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i != skip) acc += std::exp(s[i] - mx);
  }
  return mx + std::log(acc);
}

LogSplit log_split(const Logits& z, int t, double tau) {
  LogSplit ls;
  for (int i = 0; i < kNumClasses; ++i) ls.scaled[i] = z[i] / tau;
  ls.lse = log_sum_exp(ls.scaled, -1);
  ls.lse_nt = t >= 0 ? log_sum_exp(ls.scaled, t) : ls.lse;
  return ls;
}

void check_class(int t) {
  if (t < 0 || t >= kNumClasses) throw ConfigError("class id out of range: " + std::to_string(t));
}

}  // namespace

Logits softmax_probs(const Logits& z, double tau) {
  const LogSplit ls = log_split(z, -1, tau);
  Logits p;
  for (int i = 0; i < kNumClasses; ++i) p[i] = std::exp(ls.log_p(i));
  return p;
}

std::pair<double, double> target_split(const Logits& p, int t) {
  check_class(t);
  return {p[t], 1.0 - p[t]};
}

NonTargetProbs nontarget_probs(const Logits& z, int t, double tau) {
  check_class(t);
  const LogSplit ls = log_split(z, t, tau);
  NonTargetProbs out{};
  int k = 0;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i != t) out[k++] = std::exp(ls.log_phat(i));
  }
  return out;
}

double kd_kl(const Logits& z_teacher, const Logits& z_student, double tau, double prob_floor) {
  const LogSplit tt = log_split(z_teacher, -1, tau);
  const LogSplit ss = log_split(z_student, -1, tau);
  const double lf = std::log(prob_floor);
  double kl = 0.0;
  for (int i = 0; i < kNumClasses; ++i) {
    const double lt = tt.log_p(i);
    kl += std::exp(lt) * (lt - std::max(ss.log_p(i), lf));
  }
  return kl;
}

double tckd(const Logits& z_teacher, const Logits& z_student, int t, double tau,
            double prob_floor) {
  check_class(t);
  const LogSplit tt = log_split(z_teacher, t, tau);
  const LogSplit ss = log_split(z_student, t, tau);
  const double lf = std::log(prob_floor);
  const double lt_t = tt.log_p_target(t);
  const double lt_nt = tt.log_p_nontarget();
  return std::exp(lt_t) * (lt_t - std::max(ss.log_p_target(t), lf)) +
         std::exp(lt_nt) * (lt_nt - std::max(ss.log_p_nontarget(), lf));
}

double nckd(const Logits& z_teacher, const Logits& z_student, int t, double tau,
            double prob_floor) {
  check_class(t);
  const LogSplit tt = log_split(z_teacher, t, tau);
  const LogSplit ss = log_split(z_student, t, tau);
  const double lf = std::log(prob_floor);
  double kl = 0.0;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i == t) continue;
    const double lt = tt.log_phat(i);
    kl += std::exp(lt) * (lt - std::max(ss.log_phat(i), lf));
  }
  return kl;
}

double dcd(const Logits& z_teacher, const Logits& z_student, int t, const DistillConfig& cfg) {
  const double tau = cfg.temperature;
  const double nc = cfg.beta * nckd(z_teacher, z_student, t, tau, cfg.prob_floor);
  const bool with_tckd = t == cfg.moving_class || cfg.tckd_scope == TckdScope::AllClasses;
  return with_tckd ? tckd(z_teacher, z_student, t, tau, cfg.prob_floor) + nc : nc;
}

// Gradients below are of the unfloored expressions.

CellLoss kd_kl_grad(const Logits& z_teacher, const Logits& z_student, double tau,
                    double prob_floor) {
  CellLoss out;
  out.value = kd_kl(z_teacher, z_student, tau, prob_floor);
  const Logits pt = softmax_probs(z_teacher, tau);
  const Logits ps = softmax_probs(z_student, tau);
  for (int i = 0; i < kNumClasses; ++i) out.grad[i] = (ps[i] - pt[i]) / tau;
  return out;
}

CellLoss tckd_grad(const Logits& z_teacher, const Logits& z_student, int t, double tau,
                   double prob_floor) {
  CellLoss out;
  out.value = tckd(z_teacher, z_student, t, tau, prob_floor);
  const double bt = softmax_probs(z_teacher, tau)[t];
  const double q = softmax_probs(z_student, tau)[t];
  const NonTargetProbs phat = nontarget_probs(z_student, t, tau);
  const double d = (q - bt) / tau;
  int k = 0;
  for (int i = 0; i < kNumClasses; ++i) out.grad[i] = i == t ? d : -phat[k++] * d;
  return out;
}

CellLoss nckd_grad(const Logits& z_teacher, const Logits& z_student, int t, double tau,
                   double prob_floor) {
  CellLoss out;
  out.value = nckd(z_teacher, z_student, t, tau, prob_floor);
  const NonTargetProbs ht = nontarget_probs(z_teacher, t, tau);
  const NonTargetProbs hs = nontarget_probs(z_student, t, tau);
  int k = 0;
  for (int i = 0; i < kNumClasses; ++i) {
    if (i == t) {
      out.grad[i] = 0.0;
    } else {
      out.grad[i] = (hs[k] - ht[k]) / tau;
      ++k;
    }
  }
  return out;
}

CellLoss dcd_grad(const Logits& z_teacher, const Logits& z_student, int t,
                  const DistillConfig& cfg) {
  const double tau = cfg.temperature;
  CellLoss out = nckd_grad(z_teacher, z_student, t, tau, cfg.prob_floor);
  out.value *= cfg.beta;
  for (auto& g : out.grad) g *= cfg.beta;
  if (t == cfg.moving_class || cfg.tckd_scope == TckdScope::AllClasses) {
    const CellLoss tc = tckd_grad(z_teacher, z_student, t, tau, cfg.prob_floor);
    out.value = tc.value + out.value;
    for (int i = 0; i < kNumClasses; ++i) out.grad[i] += tc.grad[i];
  }
  return out;
}

FrameClassWeights frame_weights(const CellLabelGrid& labels, const DistillConfig& cfg) {
  std::array<std::size_t, kNumClasses> counts{};
  std::size_t total = 0;
  for (std::size_t c = 0; c < labels.valid.size(); ++c) {
    if (!labels.valid[c]) continue;
    ++counts[labels.labels[c]];
    ++total;
  }
  if (total == 0) throw EmptyFrame("no valid cells in frame");
  const double floor = cfg.weight_floor > 0.0 ? cfg.weight_floor : 1.0 / static_cast<double>(total);
  FrameClassWeights w;
  for (int k = 0; k < kNumClasses; ++k) {
    w.w[k] = std::max(static_cast<double>(counts[k]) / static_cast<double>(total), floor);
  }
  return w;
}

namespace {

void check_label_shape(const LogitGrid& g, const CellLabelGrid& labels) {
  if (labels.labels.rows() != g.rows() || labels.labels.cols() != g.cols() ||
      !labels.valid.same_shape(labels.labels)) {
    throw ShapeMismatch("label grid " + std::to_string(labels.labels.rows()) + "x" +
                        std::to_string(labels.labels.cols()) + " vs logits " +
                        std::to_string(g.rows()) + "x" + std::to_string(g.cols()));
  }
}

std::vector<std::size_t> participating_cells(const LogitGrid& student, const CellLabelGrid& labels) {
  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < student.num_cells(); ++c) {
    if (student.valid[c] && labels.valid[c]) cells.push_back(c);
  }
  return cells;
}

LossResult zero_result(const LogitGrid& student) {
  LossResult r;
  r.grad = LogitGrid(student.rows(), student.cols(), 0.0);
  r.grad.valid = student.valid;
  return r;
}

}  // namespace

LossResult wdcd_frame(const LogitGrid& teacher, const LogitGrid& student,
                      const CellLabelGrid& labels, const DistillConfig& cfg) {
  cfg.validate();
  if (!teacher.same_shape(student)) throw ShapeMismatch("teacher and student grids differ in shape");
  if (teacher.valid != student.valid) throw ShapeMismatch("teacher and student validity masks differ");
  check_label_shape(student, labels);
  const FrameClassWeights weights = frame_weights(labels, cfg);

  LossResult r = zero_result(student);
  const auto cells = participating_cells(student, labels);
  if (cells.empty()) return r;

  const double tau = cfg.temperature;
  const double scale = tau == 1.0 ? 1.0 : tau * tau;
  const double inv_n = 1.0 / static_cast<double>(cells.size());
  std::vector<double> terms(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::size_t c = cells[k];
    const int t = labels.labels[c];
    const CellLoss cl = dcd_grad(teacher.cell(c), student.cell(c), t, cfg);
    const double inv_w = 1.0 / weights.w[t];
    terms[k] = cl.value * inv_w;
    auto g = r.grad.cell_span(c);
    for (int i = 0; i < kNumClasses; ++i) g[i] = cl.grad[i] * inv_w * inv_n * scale;
  }
  r.value = scale * pairwise_sum(terms) * inv_n;
  return r;
}

LossResult weighted_cross_entropy(const LogitGrid& student, const CellLabelGrid& labels,
                                  std::span<const double> class_weights) {
  check_label_shape(student, labels);
  if (class_weights.size() != kNumClasses) {
    throw ShapeMismatch("expected " + std::to_string(kNumClasses) + " class weights");
  }
  LossResult r = zero_result(student);
  const auto cells = participating_cells(student, labels);
  if (cells.empty()) return r;

  const double inv_n = 1.0 / static_cast<double>(cells.size());
  std::vector<double> terms(cells.size());
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const std::size_t c = cells[k];
    const int t = labels.labels[c];
    const Logits z = student.cell(c);
    const LogSplit ls = log_split(z, -1, 1.0);
    const double w = class_weights[t];
    terms[k] = -w * ls.log_p(t);
    auto g = r.grad.cell_span(c);
    for (int i = 0; i < kNumClasses; ++i) {
      g[i] = w * (std::exp(ls.log_p(i)) - (i == t ? 1.0 : 0.0)) * inv_n;
    }
  }
  r.value = pairwise_sum(terms) * inv_n;
  return r;
}

TotalLoss total_loss(const LogitGrid& student, const LogitGrid* teacher,
                     const CellLabelGrid& labels, const DistillConfig& cfg,
                     std::span<const double> class_weights,
                     std::span<const ClassId> lovasz_classes) {
  TotalLoss out;
  LossResult wce = weighted_cross_entropy(student, labels, class_weights);
  const LossResult ls = lovasz_softmax(student, labels, lovasz_classes);
  out.wce = wce.value;
  out.lovasz = ls.value;
  out.total = std::move(wce);
  out.total.value = out.wce + out.lovasz;
  for (std::size_t i = 0; i < out.total.grad.scores.size(); ++i) {
    out.total.grad.scores[i] += ls.grad.scores[i];
  }
  if (teacher != nullptr && cfg.gamma != 0.0) {
    const LossResult kd = wdcd_frame(*teacher, student, labels, cfg);
    out.wdcd = kd.value;
    out.total.value += cfg.gamma * kd.value;
    for (std::size_t i = 0; i < out.total.grad.scores.size(); ++i) {
      out.total.grad.scores[i] += cfg.gamma * kd.grad.scores[i];
    }
  }
  return out;
}

}  // namespace kdmos
