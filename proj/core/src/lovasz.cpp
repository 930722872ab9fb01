#include <algorithm>
#include <numeric>

#include "kdmos/error.hpp"
#include "kdmos/losses.hpp"

namespace kdmos {

// Lovász extension of the Jaccard loss over softmax errors. The loss is
// piecewise linear in the errors m, so between sort changes the gradient is
// the vector of Jaccard increments scattered back through the sort.
LossResult lovasz_softmax(const LogitGrid& student, const CellLabelGrid& labels,
                          std::span<const ClassId> classes) {
  if (labels.labels.rows() != student.rows() || labels.labels.cols() != student.cols()) {
    throw ShapeMismatch("label grid does not match logits");
  }
  LossResult r;
  r.grad = LogitGrid(student.rows(), student.cols(), 0.0);
  r.grad.valid = student.valid;

  std::vector<std::size_t> cells;
  for (std::size_t c = 0; c < student.num_cells(); ++c) {
    if (student.valid[c] && labels.valid[c]) cells.push_back(c);
  }
  if (cells.empty()) return r;

  const std::size_t n = cells.size();
  std::vector<Logits> probs(n);
  for (std::size_t i = 0; i < n; ++i) probs[i] = softmax_probs(student.cell(cells[i]), 1.0);

  std::vector<ClassId> wanted(classes.begin(), classes.end());
  std::sort(wanted.begin(), wanted.end());
  wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

  std::vector<double> errors(n);
  std::vector<std::size_t> order(n);
  std::vector<double> delta(n);
  std::vector<Logits> dloss_dp(n, Logits{});
  std::vector<double> class_losses;

  for (ClassId cls : wanted) {
    if (cls >= kNumClasses) throw ConfigError("Lovasz class out of range");
    std::size_t positives = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool fg = labels.labels[cells[i]] == cls;
      positives += fg ? 1 : 0;
      errors[i] = fg ? 1.0 - probs[i][cls] : probs[i][cls];
    }
    if (positives == 0) continue;

    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });

    const double gts = static_cast<double>(positives);
    double cum_fg = 0.0;
    double cum_bg = 0.0;
    double prev = 0.0;
    double loss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      const bool fg = labels.labels[cells[i]] == cls;
      (fg ? cum_fg : cum_bg) += 1.0;
      const double jaccard = 1.0 - (gts - cum_fg) / (gts + cum_bg);
      delta[k] = jaccard - prev;
      prev = jaccard;
      loss += errors[i] * delta[k];
      // d m_i / d p_cls,i = -1 for foreground, +1 otherwise
      dloss_dp[i][cls] += fg ? -delta[k] : delta[k];
    }
    class_losses.push_back(loss);
  }
  if (class_losses.empty()) return r;

  const double inv_classes = 1.0 / static_cast<double>(class_losses.size());
  double total = 0.0;
  for (double l : class_losses) total += l;
  r.value = total * inv_classes;

  for (std::size_t i = 0; i < n; ++i) {
    const Logits& p = probs[i];
    auto g = r.grad.cell_span(cells[i]);
    // chain through softmax: dp_k/dz_j = p_k (δ_kj - p_j)
    double dot = 0.0;
    for (int k = 0; k < kNumClasses; ++k) dot += dloss_dp[i][k] * p[k];
    for (int j = 0; j < kNumClasses; ++j) {
      g[j] = p[j] * (dloss_dp[i][j] - dot) * inv_classes;
    }
  }
  return r;
}

}  // namespace kdmos
