#pragma once

#include <array>
#include <utility>
#include <vector>

#include "dctx/jfif.hpp"
#include "dctx/plane.hpp"

namespace dctx {

enum class Colorspace { RGB, YCbCr, Gray };

/// Real-valued image with one plane per channel, samples nominally in [0, 255].
struct PixelImage {
  std::vector<RealPlane> planes;
  Colorspace colorspace = Colorspace::RGB;

  int height() const { return planes.empty() ? 0 : planes.front().height; }
  int width() const { return planes.empty() ? 0 : planes.front().width; }
  int channels() const { return static_cast<int>(planes.size()); }
};

enum class ComponentKind { Luma, Chroma };

/// 8x8 block of reals in raster order, index 8*u + v.
using Block = std::array<double, 64>;
using IntBlock = std::array<int, 64>;

struct QuantMatrix {
  QuantTable values{};  // raster order, entries in [1, 255]
  ComponentKind kind = ComponentKind::Luma;
};

// Colour conversion (full-range BT.601, as used by JFIF).
PixelImage rgb_to_ycbcr(const PixelImage& rgb);
/// Luma plane of an RGB image as a one-channel Gray image; Gray passes through.
PixelImage to_gray(const PixelImage& img);
PixelImage ycbcr_to_rgb(const PixelImage& ycc);

// Orthonormal 2-D DCT-II on level-shifted samples and its inverse.
Block dct2_8x8(const Block& samples);
Block idct2_8x8(const Block& coeffs);

/// Row-major 8x8 orthonormal DCT basis: basis[u][x] = a(u) cos((2x+1) u pi / 16).
const std::array<std::array<double, 8>, 8>& dct_basis();

/// Annex K base tables in raster order.
const QuantTable& annex_k_luma();
const QuantTable& annex_k_chroma();

/// IJG quality scaling of the Annex K tables.
QuantMatrix qf_to_qm(int qf, ComponentKind kind);

IntBlock quantize(const Block& coeffs, const QuantTable& qm);
Block dequantize(const IntBlock& q, const QuantTable& qm);

RealPlane chroma_downsample(const RealPlane& plane);
RealPlane chroma_upsample(const RealPlane& plane);

/// Edge-replicating pad of a plane to (h, w); h, w must be >= the source dims.
RealPlane pad_replicate(const RealPlane& plane, int h, int w);

/// Blockwise forward transform of a padded plane (level shift applied), no quantisation.
RealPlane plane_dct(const RealPlane& samples);
/// Blockwise inverse transform, +128 added back, no clamping.
RealPlane plane_idct(const RealPlane& coeffs);

QuantizedImage compress(const PixelImage& img, int qf, Subsampling subsampling);
PixelImage decompress(const QuantizedImage& img);

/// Translate towards the bottom-right by (dx, dy); vacated rows/columns copy the edge.
PixelImage translate(const PixelImage& img, int dx, int dy);

/// JPEG(shift(JPEG(img, qf1), (dx, dy)), qf2) with 8-bit rounding between the passes.
QuantizedImage degrade_double(const PixelImage& img, int qf1, int qf2,
                              std::pair<int, int> shift,
                              Subsampling subsampling = Subsampling::S420);

/// Round and clamp every sample to an 8-bit value (kept as double).
PixelImage quantize_to_8bit(const PixelImage& img);

/// Fraction of quantised coefficients equal to zero.
double zero_fraction(const QuantizedImage& img);

}  // namespace dctx
