#include "kdmos/eval.hpp"

#include <algorithm>
#include <sstream>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"

namespace kdmos {

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t n = 0;
  for (const auto& row : counts_) {
    for (auto v : row) n += v;
  }
  return n;
}

void ConfusionMatrix::accumulate(std::span<const ClassId> preds, std::span<const ClassId> truth,
                                 std::initializer_list<ClassId> ignore) {
  if (preds.size() != truth.size()) {
    throw LengthMismatch(std::to_string(preds.size()) + " predictions vs " +
                         std::to_string(truth.size()) + " labels");
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const ClassId t = truth[i];
    if (std::find(ignore.begin(), ignore.end(), t) != ignore.end()) continue;
    if (t >= kNumClasses || preds[i] >= kNumClasses) throw ConfigError("class id out of range");
    ++counts_[t][preds[i]];
  }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (int t = 0; t < kNumClasses; ++t) {
    for (int p = 0; p < kNumClasses; ++p) counts_[t][p] += o.counts_[t][p];
  }
  return *this;
}

bool ConfusionMatrix::iou_defined(int cls) const {
  std::uint64_t denom = 0;
  for (int k = 0; k < kNumClasses; ++k) denom += counts_[cls][k] + counts_[k][cls];
  return denom > 0;
}

double ConfusionMatrix::iou(int cls) const {
  const std::uint64_t tp = counts_[cls][cls];
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    if (k == cls) continue;
    fp += counts_[k][cls];
    fn += counts_[cls][k];
  }
  const std::uint64_t denom = tp + fp + fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

namespace {

void append_matrix(std::ostringstream& out, const std::string& prefix, const ConfusionMatrix& cm) {
  for (int c = 0; c < kNumClasses; ++c) {
    out << prefix << "iou_" << c << '=' << io::format_double(cm.iou(c)) << '\n';
    out << prefix << "absent_" << c << '=' << (cm.iou_defined(c) ? 0 : 1) << '\n';
  }
  for (int t = 0; t < kNumClasses; ++t) {
    out << prefix << "cm_row_" << t << '=';
    for (int p = 0; p < kNumClasses; ++p) out << (p ? "," : "") << cm(t, p);
    out << '\n';
  }
}

}  // namespace

std::string format_metrics(const MetricsReport& report) {
  std::ostringstream out;
  out << "moving_iou=" << io::format_double(report.points.iou(kMoving)) << '\n';
  out << "moving_iou_absent=" << (report.points.iou_defined(kMoving) ? 0 : 1) << '\n';
  out << "cell_moving_iou=" << io::format_double(report.cells.iou(kMoving)) << '\n';
  out << "points_total=" << report.points.total() << '\n';
  out << "cells_total=" << report.cells.total() << '\n';
  append_matrix(out, "point_", report.points);
  append_matrix(out, "cell_", report.cells);
  return out.str();
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    auto last = line.find_last_not_of(" \t\r");
    line = line.substr(first, last - first + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      return s.substr(a, s.find_last_not_of(" \t") - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

void write_metrics(const std::filesystem::path& path, const MetricsReport& report) {
  io::write_text(path, format_metrics(report));
}

}  // namespace kdmos
