#pragma once

#include <vector>

#include "dctx/blockdct.hpp"

namespace dctx {

/// Coefficients of one component rearranged so that channel k = 8u + v at
/// site (i, j) holds frequency (u, v) of block (i, j). Stored channel-major,
/// shape (64, rows, cols).
struct CollocatedMap {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;
  ComponentKind kind = ComponentKind::Luma;
  QuantMatrix qm;

  double& at(int k, int i, int j) { return data[(static_cast<std::size_t>(k) * rows + i) * cols + j]; }
  double at(int k, int i, int j) const { return data[(static_cast<std::size_t>(k) * rows + i) * cols + j]; }
};

/// Blockwise Hadamard product of quantised coefficients with their quantiser.
RealPlane qm_embed(const IntPlane& plane, const QuantTable& qm);

CollocatedMap rearrange(const RealPlane& plane);
RealPlane inverse_rearrange(const CollocatedMap& map);

/// Chroma map at half resolution -> map at target (2x) resolution, via the
/// pixel domain: IDCT, clamp, bilinear x2, DCT.
CollocatedMap chroma_dct_upsample(const CollocatedMap& map, int target_rows, int target_cols);

/// Embedded + rearranged maps of every component of a quantised image.
std::vector<CollocatedMap> collocated_maps(const QuantizedImage& img);

}  // namespace dctx
