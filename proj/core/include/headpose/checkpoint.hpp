#pragma once

#include <filesystem>
#include <vector>

#include "headpose/model.hpp"

namespace headpose {

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

/// Self-describing training snapshot: everything needed to rebuild the model
/// and continue training. Parameter and optimizer arrays are 32-bit floats,
/// row-major, so a save/load cycle reproduces forward outputs bitwise on the
/// same platform. Optimizer velocity arrays are named
/// "optimizer.velocity.<parameter name>".
struct Checkpoint {
  BackboneSpec spec;
  uint64_t seed = 0;
  int epoch = 0;
  std::vector<NamedArray> arrays;
};

/// Binary archive layout: magic "HPCKPT1\n", a little-endian u64 header
/// length, a JSON header (spec, seed, epoch, array directory), then the raw
/// float payload. Writes go to a temp file renamed into place.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Arrays only; used to overlay externally supplied pretrained backbone
/// weights.
std::vector<NamedArray> read_array_archive(const std::filesystem::path& path);

/// Snapshot of the model's current parameters and buffers (plus optional
/// extra arrays, e.g. optimizer state).
Checkpoint snapshot_model(Model& model, int epoch,
                          std::vector<NamedArray> extra_arrays = {});

/// Rebuilds the model described by the checkpoint and restores every
/// parameter and buffer. Ignores "optimizer.velocity.*" arrays.
Model model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace headpose
