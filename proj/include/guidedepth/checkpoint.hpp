#pragma once

#include <filesystem>

#include "guidedepth/blocks.hpp"

namespace guidedepth {

// A checkpoint is a directory holding one GDT1 file per parameter and
// running-statistics buffer, plus `manifest.txt` with `config.<key>` lines
// and `param.<name>` / `buffer.<name>` -> file lines.

void save_checkpoint(const std::filesystem::path& dir, Model<float>& model);

/// Rebuilds the model from the manifest config and validates every tensor
/// shape against it. Missing or unexpected entries are errors.
Model<float> load_checkpoint(const std::filesystem::path& dir);

}  // namespace guidedepth
