#include "kdmos/teacher_bridge.hpp"

#include <cmath>
#include <random>
#include <string>

#include "kdmos/binary_io.hpp"
#include "kdmos/error.hpp"

namespace kdmos {

std::vector<std::byte> encode_logits(const LogitGrid& grid) {
  const std::size_t cells = grid.num_cells();
  io::ByteWriter out;
  out.buffer().reserve(kLogitsHeaderBytes + cells * kNumClasses * 4 + (cells + 7) / 8);
  out.bytes("KDTL");
  out.u16(kLogitsVersion);
  out.u16(kNumClasses);
  out.u32(static_cast<std::uint32_t>(grid.rows()));
  out.u32(static_cast<std::uint32_t>(grid.cols()));
  for (double v : grid.scores) {
    if (!std::isfinite(v)) throw FormatError("refusing to write non-finite logit");
    out.f32(static_cast<float>(v));
  }
  std::vector<std::uint8_t> bitmap((cells + 7) / 8, 0);
  for (std::size_t c = 0; c < cells; ++c) {
    if (grid.valid[c]) bitmap[c / 8] |= static_cast<std::uint8_t>(1u << (c % 8));
  }
  for (auto b : bitmap) out.u8(b);
  return out.take();
}

LogitGrid decode_logits(std::span<const std::byte> bytes) {
  io::ByteReader in(bytes);
  if (bytes.size() < kLogitsHeaderBytes) throw FormatError("file shorter than header");
  if (in.str(4) != "KDTL") throw FormatError("bad magic");
  const auto version = in.u16();
  if (version != kLogitsVersion) throw FormatError("unsupported version " + std::to_string(version));
  const auto classes = in.u16();
  if (classes != kNumClasses) throw FormatError("expected 4 classes, got " + std::to_string(classes));
  const std::uint64_t rows = in.u32();
  const std::uint64_t cols = in.u32();
  const std::uint64_t cells = rows * cols;
  const std::uint64_t expected = kLogitsHeaderBytes + cells * kNumClasses * 4 + (cells + 7) / 8;
  if (rows > (1u << 20) || cols > (1u << 20) || expected != bytes.size()) {
    throw FormatError("size " + std::to_string(bytes.size()) + " does not match " +
                      std::to_string(rows) + "x" + std::to_string(cols) + " grid");
  }
  LogitGrid grid(static_cast<int>(rows), static_cast<int>(cols));
  for (std::size_t i = 0; i < grid.scores.size(); ++i) {
    const float f = in.f32();
    if (!std::isfinite(f)) throw FormatError("non-finite logit at cell " + std::to_string(i / kNumClasses));
    grid.scores[i] = f;
  }
  for (std::size_t byte = 0; byte < (cells + 7) / 8; ++byte) {
    const auto b = in.u8();
    for (std::size_t bit = 0; bit < 8; ++bit) {
      const std::size_t c = byte * 8 + bit;
      if (c < cells) {
        grid.valid[c] = (b >> bit) & 1u;
      } else if ((b >> bit) & 1u) {
        throw FormatError("padding bits set in validity bitmap");
      }
    }
  }
  return grid;
}

void write_logits(const LogitGrid& grid, const std::filesystem::path& path) {
  io::write_file(path, encode_logits(grid));
}

LogitGrid read_logits(const std::filesystem::path& path) {
  try {
    return decode_logits(io::read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::filesystem::path logits_path(const std::filesystem::path& dir, std::size_t frame) {
  return dir / (frame_name(frame) + ".logits");
}

LogitGrid synth_teacher(const CellLabelGrid& labels, double kappa, double sigma, std::uint64_t seed) {
  if (!(kappa > 0.0)) throw ConfigError("teacher confidence must be > 0");
  if (!(sigma >= 0.0)) throw ConfigError("teacher noise must be >= 0");
  LogitGrid grid(labels.labels.rows(), labels.labels.cols(), 0.0);
  grid.valid = labels.valid;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  for (std::size_t c = 0; c < grid.num_cells(); ++c) {
    if (!labels.valid[c]) continue;
    auto z = grid.cell_span(c);
    for (int k = 0; k < kNumClasses; ++k) {
      z[k] = (k == labels.labels[c] ? kappa : 0.0) + (sigma > 0.0 ? noise(rng) : 0.0);
    }
  }
  return grid;
}

}  // namespace kdmos
