// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace textseg {

// Minimal 8-bit grayscale PNG support, enough for the dataset contract.
// Writing always emits filter 0 scanlines; reading handles all five
// standard filters.

void write_png_gray8(const std::string& path, const std::vector<uint8_t>& pixels, size_t width,
                     size_t height);

std::vector<uint8_t> read_png_gray8(const std::string& path, size_t& width, size_t& height);

}  // namespace textseg
