// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "mlpcm/params.hpp"

namespace mlpcm {

// Checkpoint file layout:
//   MLPCMCKPT1\n
//   <name> <d0xd1x...> f32 <payload byte offset>\n     (one line per tensor)
//   ---\n
//   little-endian float32 payloads, in header order
// Round-trips are bit-exact.

void save_checkpoint(const std::string& path, const ParamStore& store);

// Fills an existing store; every store tensor must be present in the file
// with a matching shape. Extra file entries are ignored.
void load_checkpoint(const std::string& path, ParamStore& store);

// Reads everything in the file into a fresh store (requires_grad=false).
ParamStore read_checkpoint(const std::string& path);

bool checkpoint_exists(const std::string& path);

}  // namespace mlpcm
