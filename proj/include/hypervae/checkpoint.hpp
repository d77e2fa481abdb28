#pragma once

#include <string>

#include "hypervae/nn.hpp"

namespace hypervae {

// Binary checkpoint: magic "HVAEWTS\n", one version byte, u32 record count,
// then per record { u16 name length, name bytes, u8 rank, u32 extents...,
// little-endian f64 payload }. Full layout documented in docs/formats.md.
// Writes are atomic (temp file + rename).
void save_checkpoint(const ParamStore& params, const std::string& path);

// Loads into an existing store; names, order, and shapes must match exactly.
void load_checkpoint(ParamStore& params, const std::string& path);

}  // namespace hypervae
