// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "mlpcm/geometry.hpp"

namespace mlpcm {

// ASCII .xyz: one "x y z" triple per line, '.' decimal separator, '\n' line
// endings. Values printed with 9 significant digits (float round-trips
// within 1e-6; in practice exactly).
void save_xyz(const std::string& path, const PointCloud& cloud);
PointCloud load_xyz(const std::string& path);

// Binary: magic "PCF1", u32 point count, then N x 3 little-endian float32.
// Bit-exact round trip.
void save_pcf(const std::string& path, const PointCloud& cloud);
PointCloud load_pcf(const std::string& path);

// Dispatch on extension: ".xyz" -> ASCII, anything else -> binary.
void save_point_cloud(const std::string& path, const PointCloud& cloud);
PointCloud load_point_cloud(const std::string& path);

}  // namespace mlpcm
