#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kdmos::app {

struct SuiteReport {
  std::string name;
  std::size_t instances = 0;
  double max_error = 0.0;
  double threshold = 0.0;
  std::vector<std::string> details;  // per-target breakdown

  bool passed() const { return instances > 0 && max_error < threshold; }
};

/// KD = TCKD + (1 - p_t) NCKD over 1000 random draws for each tau in {1,2,4}.
SuiteReport verify_identity(std::uint64_t seed = 1);
/// Analytic vs central-difference gradients (h = 1e-5) of the frame losses
/// and every layer; error is |a - n| / max(|a|, |n|, 1e-6).
SuiteReport verify_gradcheck(std::uint64_t seed = 2);
/// Zero-offset DySample against plain bilinear upsampling.
SuiteReport verify_dysample(std::uint64_t seed = 3);
/// Lovasz loss against the threshold integral of the Jaccard set function.
SuiteReport verify_lovasz(std::uint64_t seed = 4);

/// `identity`, `gradcheck`, `dysample`, `lovasz` or `all`.
std::vector<SuiteReport> run_verify(std::string_view suite);

std::string format_report(const SuiteReport& r);

}  // namespace kdmos::app
