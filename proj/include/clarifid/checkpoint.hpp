#pragma once

#include <filesystem>

#include "clarifid/model.hpp"

namespace clarifid {

inline constexpr char kCheckpointMagic[] = "CLFD1";

/// Raw record list: magic, then [u32 name length, name, u32 rank, u32 dims…, f64 payload].
void write_tensors(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_tensors(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
/// Rebuilds the model configuration from the stored shapes and metadata.
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace clarifid
