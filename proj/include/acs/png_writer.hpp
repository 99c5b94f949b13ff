#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acs/image.hpp"

namespace acs {

/// Linear min-max map to [0, 255]; a constant image maps to all zeros.
std::vector<std::uint8_t> to_gray8(const RealImage& img);

/// 8-bit grayscale PNG of to_gray8(img).
void write_png(const std::string& path, const RealImage& img);

}  // namespace acs
