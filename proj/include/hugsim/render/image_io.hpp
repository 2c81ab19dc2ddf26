#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hugsim/core/image.hpp"

namespace hugsim::render {

/// Clamps to [0,1] and rounds to 8 bits, row-major RGB.
std::vector<std::uint8_t> to_rgb8(const Image& color);

/// Binary PPM (P6) of a 3-channel image, clamped to [0,1].
void write_ppm(const Image& color, const std::filesystem::path& path);
Image read_ppm(const std::filesystem::path& path);

/// Little-endian PFM. 1-channel images are written as "Pf", 3-channel as
/// "PF"; 2-channel images (flow) are padded with a zero third channel.
void write_pfm(const Image& img, const std::filesystem::path& path);
Image read_pfm(const std::filesystem::path& path);

/// 8-bit PGM of per-pixel labels (argmax over channels; 255 where the
/// pixel has no coverage according to `alpha` < 0.5 when alpha is given).
void write_label_pgm(const Image& semantic, const std::filesystem::path& path, const Image* alpha = nullptr);
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height);

}  // namespace hugsim::render
