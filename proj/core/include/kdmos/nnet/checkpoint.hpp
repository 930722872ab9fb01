#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "kdmos/nnet/network.hpp"

namespace kdmos::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout (little-endian):
///   "KDCK" | u32 version | u32 len, architecture descriptor |
///   u32 param count | per param: u32 len, name | u32 rank | u32 dims[rank] |
///   f32 values
/// Values are stored as float32.
std::vector<std::byte> encode_checkpoint(const Network& net);
Network decode_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace kdmos::nn
