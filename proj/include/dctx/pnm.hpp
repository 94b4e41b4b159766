#pragma once

#include <filesystem>

#include "dctx/blockdct.hpp"

namespace dctx {

/// Binary P6 (RGB) or P5 (Gray), maxval 255.
PixelImage read_pnm(const std::filesystem::path& path);

/// Samples are rounded and clamped to 8 bits. Gray images become P5, RGB P6.
void write_pnm(const std::filesystem::path& path, const PixelImage& img);

/// Writes a single real plane as P5 after an affine map of [lo, hi] onto [0, 255].
void write_pgm_normalized(const std::filesystem::path& path, const RealPlane& plane);

}  // namespace dctx
