#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "bapf/params.hpp"

namespace bapf {

/// Layout, all integers little-endian:
///   "BAPF", u8 version (1), u8 stage, u32 tensor count, then per tensor
///   u16 name length, name bytes, u8 rank, u32 dims..., f32 values.
void write_checkpoint(std::ostream& out, const ModelParams<float>& params);
ModelParams<float> read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const ModelParams<float>& params);
ModelParams<float> load_checkpoint(const std::string& path);

}  // namespace bapf
