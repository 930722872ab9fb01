#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kdmos/bev.hpp"
#include "kdmos/losses.hpp"

namespace kdmos {

inline constexpr std::uint16_t kLogitsVersion = 1;
inline constexpr std::size_t kLogitsHeaderBytes = 16;

/// Teacher logits file (little-endian):
///   "KDTL" | u16 version | u16 n_classes (=4) | u32 height | u32 width |
///   f32 payload, cell-major (row, column) with class fastest |
///   validity bitmap, row-major, LSB-first, padded to a whole byte.
/// Scores are stored as float32.
std::vector<std::byte> encode_logits(const LogitGrid& grid);
LogitGrid decode_logits(std::span<const std::byte> bytes);

void write_logits(const LogitGrid& grid, const std::filesystem::path& path);
LogitGrid read_logits(const std::filesystem::path& path);

/// `<dir>/<frame:06d>.logits`
std::filesystem::path logits_path(const std::filesystem::path& dir, std::size_t frame);

/// Label-conditioned oracle teacher: kappa at the labelled class plus
/// N(0, sigma²) noise on every class of every valid cell; invalid cells are 0.
LogitGrid synth_teacher(const CellLabelGrid& labels, double kappa, double sigma, std::uint64_t seed);

}  // namespace kdmos
