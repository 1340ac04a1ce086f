#pragma once

#include <cstdint>
#include <string>

#include "kao/grid.hpp"

namespace kao {

/// Linear [-1, 1] -> [0, 255] with round-half-away-from-zero; values outside
/// the range are clamped first.
uint8_t quantize_unit(float v, int64_t* clamped = nullptr);

/// Writes a P5 (C = 1) or P6 (C = 3) binary netpbm file, atomically.
/// Returns the number of clamped out-of-range samples.
int64_t write_image(const Grid& g, const std::string& path);

/// Reads a P5/P6 file back into [-1, 1]; quantization is the only loss, so
/// write(read(path)) is byte-identical to the original file.
Grid read_image(const std::string& path);

}  // namespace kao
