// Binary model persistence: "RLLB" magic, version, JSON header with the
// tensor directory, then raw little-endian fp32 data. Round-trips bit-exact.
#pragma once

#include <string>

#include "revlab/model.hpp"

namespace revlab {

inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

}  // namespace revlab
