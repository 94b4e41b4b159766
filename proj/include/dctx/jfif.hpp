#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dctx/plane.hpp"

namespace dctx {

/// 8x8 quantisation table in raster (row-major) order.
using QuantTable = std::array<int, 64>;

enum class Subsampling { S444, S420 };

/// Quantised coefficients of one component. The plane keeps the coefficient
/// (u, v) of block (by, bx) at row 8*by + u, column 8*bx + v.
struct Component {
  int id = 0;
  IntPlane plane;
  int qm_index = 0;

  bool operator==(const Component&) const = default;
};

struct QuantizedImage {
  std::vector<Component> components;  // 1 (gray) or 3 (Y, Cb, Cr)
  std::vector<QuantTable> quant_tables;
  Subsampling subsampling = Subsampling::S444;
  int height = 0;  // pixel dims before padding
  int width = 0;

  bool operator==(const QuantizedImage&) const = default;

  bool is_gray() const { return components.size() == 1; }
  const QuantTable& table_for(std::size_t component) const {
    return quant_tables.at(static_cast<std::size_t>(components.at(component).qm_index));
  }
};

/// Throws Error(BadDims/RangeOverflow/...) when the structural invariants do not hold.
void validate(const QuantizedImage& img);

/// Baseline sequential JFIF reader (Huffman, 8-bit, 1 or 3 components, 4:4:4 or 4:2:0).
QuantizedImage parse_jpeg(std::span<const std::uint8_t> bytes);

/// Baseline writer using the Annex K Huffman tables. Deterministic.
std::vector<std::uint8_t> encode_jpeg(const QuantizedImage& img);

/// Raster index -> zigzag position and back.
const std::array<int, 64>& zigzag_to_raster();
const std::array<int, 64>& raster_to_zigzag();

}  // namespace dctx
