#pragma once

#include <filesystem>

#include "hsittt/model.hpp"

namespace hsittt {

// Model checkpoint directory:
//   model.json  - architecture, coordinate convention, parameter count
//   weights.f32 - little-endian binary32 values in ParamLayout order
void save_checkpoint(const SRModelParams& params,
                     const std::filesystem::path& dir);

// Throws ValidationError when model.json is malformed or when the declared
// parameter count disagrees with the architecture or the weights payload.
SRModelParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace hsittt
