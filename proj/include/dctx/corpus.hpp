#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "dctx/blockdct.hpp"

namespace dctx {

/// Deterministic natural-looking RGB test image: smooth shading, overlapping
/// anti-aliased shapes and mild multi-scale texture. 8-bit valued.
PixelImage synth_image(int height, int width, std::uint64_t seed);

std::vector<PixelImage> synth_corpus(int count, int height, int width, std::uint64_t seed);

/// Every .ppm/.pgm file of a directory, in lexicographic file-name order.
std::vector<PixelImage> load_corpus(const std::filesystem::path& dir);
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace dctx
