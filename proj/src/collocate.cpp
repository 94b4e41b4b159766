#include "dctx/collocate.hpp"

#include <algorithm>

#include "dctx/error.hpp"

namespace dctx {

RealPlane qm_embed(const IntPlane& plane, const QuantTable& qm) {
  if (plane.height % 8 != 0 || plane.width % 8 != 0 || plane.height == 0 || plane.width == 0)
    fail(ErrorKind::BadDims, "coefficient plane must be a positive multiple of 8");
  RealPlane out(plane.height, plane.width);
  for (int y = 0; y < plane.height; ++y)
    for (int x = 0; x < plane.width; ++x)
      out(y, x) = static_cast<double>(plane(y, x)) * qm[8 * (y % 8) + x % 8];
  return out;
}

CollocatedMap rearrange(const RealPlane& plane) {
  if (plane.height % 8 != 0 || plane.width % 8 != 0 || plane.height == 0 || plane.width == 0)
    fail(ErrorKind::BadDims, "plane must be a positive multiple of 8");
  CollocatedMap m;
  m.rows = plane.height / 8;
  m.cols = plane.width / 8;
  m.data.resize(static_cast<std::size_t>(64) * m.rows * m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) m.at(8 * u + v, i, j) = plane(8 * i + u, 8 * j + v);
  return m;
}

RealPlane inverse_rearrange(const CollocatedMap& m) {
  if (m.data.size() != static_cast<std::size_t>(64) * m.rows * m.cols)
    fail(ErrorKind::BadDims, "map storage does not match (64, rows, cols)");
  RealPlane plane(8 * m.rows, 8 * m.cols);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j)
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) plane(8 * i + u, 8 * j + v) = m.at(8 * u + v, i, j);
  return plane;
}

CollocatedMap chroma_dct_upsample(const CollocatedMap& map, int target_rows, int target_cols) {
  if (map.kind != ComponentKind::Chroma)
    fail(ErrorKind::BadDims, "chroma_dct_upsample applies to chroma maps only");
  if (target_rows != 2 * map.rows || target_cols != 2 * map.cols)
    fail(ErrorKind::BadDims, "target dims must be twice the source dims");
  RealPlane pixels = plane_idct(inverse_rearrange(map));
  for (double& v : pixels.data) v = std::clamp(v, 0.0, 255.0);
  CollocatedMap out = rearrange(plane_dct(chroma_upsample(pixels)));
  out.kind = map.kind;
  out.qm = map.qm;
  return out;
}

std::vector<CollocatedMap> collocated_maps(const QuantizedImage& img) {
  std::vector<CollocatedMap> maps;
  for (std::size_t c = 0; c < img.components.size(); ++c) {
    const QuantTable& t = img.table_for(c);
    CollocatedMap m = rearrange(qm_embed(img.components[c].plane, t));
    m.kind = c == 0 ? ComponentKind::Luma : ComponentKind::Chroma;
    m.qm = {t, m.kind};
    maps.push_back(std::move(m));
  }
  return maps;
}

}  // namespace dctx
