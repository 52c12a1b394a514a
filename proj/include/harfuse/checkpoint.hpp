#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "harfuse/tensor.hpp"

namespace harfuse {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Checkpoint = JSON manifest (names, shapes, dtype, byte offsets) plus a
// sidecar `<manifest>.bin` holding little-endian float64 values in manifest
// order. Round-trips are bit-exact; loaded tensors are plain values (no grad).
void save_checkpoint(const std::filesystem::path& manifest_path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::filesystem::path& manifest_path);

}  // namespace harfuse
