#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kdmos/bev.hpp"
#include "kdmos/kitti_io.hpp"

namespace kdmos::app {

/// A KITTI-layout sequence in memory, labels already mapped to classes.
struct LoadedSequence {
  std::filesystem::path dir;
  std::vector<PointCloud> frames;
  std::vector<std::vector<ClassId>> classes;  // empty per frame when no label file
  std::vector<Pose> poses;
};

/// Reads every consecutive scan with its labels and poses.
/// Labels are optional per sequence: either all frames have them or none.
LoadedSequence load_sequence(const std::filesystem::path& dir, const ClassMap& map);

/// One network input: the motion tensor of the window ending at `frame`,
/// plus everything needed to score it.
struct Sample {
  std::size_t sequence = 0;  // index into the caller's sequence list
  std::size_t frame = 0;
  MotionTensor input;
  CellIndexMap cells;  // current-frame point -> cell
  CellLabelGrid labels;  // valid = occupied; unlabelled frames keep class 0
  std::vector<ClassId> point_classes;  // current frame, may be empty
};

/// Frames with a full history: window-1, ..., n-1. Zero when n < window.
std::size_t sample_count(std::size_t n_frames, int window);

Sample build_sample(const LoadedSequence& seq, std::size_t frame, const BevConfig& config,
                    int threads = 1);

/// All samples of a sequence, frames built on up to `threads` workers.
std::vector<Sample> build_samples(const LoadedSequence& seq, std::size_t sequence_index,
                                  const BevConfig& config, int threads = 1);

/// Projected-frame files written by `project`:
///   "KDMT" | u16 version | u16 n2 | u32 channels | u32 height | u32 width | f32 data
///   "KDCL" | u16 version | u16 0 | u32 height | u32 width | u8 labels[] | u8 valid[]
std::vector<std::byte> encode_motion_tensor(const MotionTensor& t);
MotionTensor decode_motion_tensor(std::span<const std::byte> bytes);
std::vector<std::byte> encode_cell_labels(const CellLabelGrid& g);
CellLabelGrid decode_cell_labels(std::span<const std::byte> bytes);

/// Loads the class map named in a config value; empty selects the built-in one.
ClassMap load_class_map(const std::string& path);

}  // namespace kdmos::app
