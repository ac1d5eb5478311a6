#pragma once

#include <string>

#include "splatfuse/gaussian_map.hpp"

namespace splatfuse {

// Binary little-endian PLY in the common splat-viewer layout:
// x y z opacity(logit) scale_0..2(log) rot_0..3 f_dc_0..2((c-0.5)/SH0).
// float32 payload; export -> import round-trips the stored floats bitwise.
void export_ply(const GaussianPrimitives& prims, const std::string& path);
GaussianPrimitives import_ply(const std::string& path);

constexpr double kSh0 = 0.28209479177387814;

}  // namespace splatfuse
