#include "dctx/blockdct.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dctx/error.hpp"

namespace dctx {

namespace {

constexpr QuantTable kLumaBase = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

constexpr QuantTable kChromaBase = {
    17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

double clamp255(double v) { return std::clamp(v, 0.0, 255.0); }

int round_up(int v, int m) { return (v + m - 1) / m * m; }

void check_qf(int qf) {
  if (qf < 1 || qf > 100) fail(ErrorKind::QfOutOfRange, "quality factor " + std::to_string(qf));
}

}  // namespace

PixelImage to_gray(const PixelImage& img) {
  if (img.channels() == 1) return img;
  PixelImage g;
  g.colorspace = Colorspace::Gray;
  g.planes.push_back(img.colorspace == Colorspace::YCbCr ? img.planes[0] : rgb_to_ycbcr(img).planes[0]);
  return g;
}

PixelImage rgb_to_ycbcr(const PixelImage& rgb) {
  if (rgb.colorspace != Colorspace::RGB || rgb.channels() != 3)
    fail(ErrorKind::WrongColorspace, "rgb_to_ycbcr expects a 3-channel RGB image");
  PixelImage out;
  out.colorspace = Colorspace::YCbCr;
  const int h = rgb.height(), w = rgb.width();
  out.planes.assign(3, RealPlane(h, w));
  for (std::size_t i = 0; i < rgb.planes[0].size(); ++i) {
    const double r = rgb.planes[0].data[i], g = rgb.planes[1].data[i], b = rgb.planes[2].data[i];
    out.planes[0].data[i] = clamp255(0.299 * r + 0.587 * g + 0.114 * b);
    out.planes[1].data[i] = clamp255(-0.168735892 * r - 0.331264108 * g + 0.5 * b + 128.0);
    out.planes[2].data[i] = clamp255(0.5 * r - 0.418687589 * g - 0.081312411 * b + 128.0);
  }
  return out;
}

PixelImage ycbcr_to_rgb(const PixelImage& ycc) {
  if (ycc.colorspace != Colorspace::YCbCr || ycc.channels() != 3)
    fail(ErrorKind::WrongColorspace, "ycbcr_to_rgb expects a 3-channel YCbCr image");
  PixelImage out;
  out.colorspace = Colorspace::RGB;
  out.planes.assign(3, RealPlane(ycc.height(), ycc.width()));
  for (std::size_t i = 0; i < ycc.planes[0].size(); ++i) {
    const double y = ycc.planes[0].data[i];
    const double cb = ycc.planes[1].data[i] - 128.0;
    const double cr = ycc.planes[2].data[i] - 128.0;
    out.planes[0].data[i] = clamp255(y + 1.402 * cr);
    out.planes[1].data[i] = clamp255(y - 0.344136286 * cb - 0.714136286 * cr);
    out.planes[2].data[i] = clamp255(y + 1.772 * cb);
  }
  return out;
}

const std::array<std::array<double, 8>, 8>& dct_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> b{};
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int x = 0; x < 8; ++x)
        b[u][x] = a * std::cos((2 * x + 1) * u * std::numbers::pi / 16.0);
    }
    return b;
  }();
  return basis;
}

Block dct2_8x8(const Block& s) {
  const auto& c = dct_basis();
  Block tmp{}, out{};
  // rows: tmp[y][v] = sum_x c[v][x] s[y][x]
  for (int y = 0; y < 8; ++y)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int x = 0; x < 8; ++x) acc += c[v][x] * s[8 * y + x];
      tmp[8 * y + v] = acc;
    }
  for (int u = 0; u < 8; ++u)
    for (int v = 0; v < 8; ++v) {
      double acc = 0.0;
      for (int y = 0; y < 8; ++y) acc += c[u][y] * tmp[8 * y + v];
      out[8 * u + v] = acc;
    }
  return out;
}

Block idct2_8x8(const Block& f) {
  const auto& c = dct_basis();
  Block tmp{}, out{};
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int v = 0; v < 8; ++v) acc += c[v][x] * f[8 * u + v];
      tmp[8 * u + x] = acc;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double acc = 0.0;
      for (int u = 0; u < 8; ++u) acc += c[u][y] * tmp[8 * u + x];
      out[8 * y + x] = acc;
    }
  return out;
}

const QuantTable& annex_k_luma() { return kLumaBase; }
const QuantTable& annex_k_chroma() { return kChromaBase; }

QuantMatrix qf_to_qm(int qf, ComponentKind kind) {
  check_qf(qf);
  const long scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
  const QuantTable& base = kind == ComponentKind::Luma ? kLumaBase : kChromaBase;
  QuantMatrix qm;
  qm.kind = kind;
  for (int i = 0; i < 64; ++i) {
    const long v = (base[i] * scale + 50) / 100;
    qm.values[i] = static_cast<int>(std::clamp(v, 1L, 255L));
  }
  return qm;
}

IntBlock quantize(const Block& coeffs, const QuantTable& qm) {
  IntBlock q{};
  for (int i = 0; i < 64; ++i) q[i] = static_cast<int>(std::round(coeffs[i] / qm[i]));
  return q;
}

Block dequantize(const IntBlock& q, const QuantTable& qm) {
  Block c{};
  for (int i = 0; i < 64; ++i) c[i] = static_cast<double>(q[i]) * qm[i];
  return c;
}

RealPlane chroma_downsample(const RealPlane& p) {
  if (p.height % 2 != 0 || p.width % 2 != 0)
    fail(ErrorKind::OddDims, "downsample needs even dims");
  RealPlane out(p.height / 2, p.width / 2);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      out(y, x) = 0.25 * (p(2 * y, 2 * x) + p(2 * y, 2 * x + 1) + p(2 * y + 1, 2 * x) +
                          p(2 * y + 1, 2 * x + 1));
  return out;
}

RealPlane chroma_upsample(const RealPlane& p) {
  // Output sample i sits at source coordinate i/2 - 1/4, so every output is a
  // 3:1 blend of its nearest and next-nearest source samples (edges replicate).
  RealPlane rows(p.height, 2 * p.width);
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      const double c = p(y, x);
      const double l = p(y, std::max(x - 1, 0));
      const double r = p(y, std::min(x + 1, p.width - 1));
      rows(y, 2 * x) = 0.75 * c + 0.25 * l;
      rows(y, 2 * x + 1) = 0.75 * c + 0.25 * r;
    }
  RealPlane out(2 * p.height, 2 * p.width);
  for (int y = 0; y < p.height; ++y) {
    const int up = std::max(y - 1, 0), down = std::min(y + 1, p.height - 1);
    for (int x = 0; x < out.width; ++x) {
      const double c = rows(y, x);
      out(2 * y, x) = 0.75 * c + 0.25 * rows(up, x);
      out(2 * y + 1, x) = 0.75 * c + 0.25 * rows(down, x);
    }
  }
  return out;
}

RealPlane pad_replicate(const RealPlane& p, int h, int w) {
  if (h < p.height || w < p.width || p.height == 0 || p.width == 0)
    fail(ErrorKind::BadDims, "pad target smaller than source");
  RealPlane out(h, w);
  for (int y = 0; y < h; ++y) {
    const int sy = std::min(y, p.height - 1);
    for (int x = 0; x < w; ++x) out(y, x) = p(sy, std::min(x, p.width - 1));
  }
  return out;
}

RealPlane plane_dct(const RealPlane& s) {
  if (s.height % 8 != 0 || s.width % 8 != 0) fail(ErrorKind::BadDims, "plane not 8-aligned");
  RealPlane out(s.height, s.width);
  Block b{};
  for (int by = 0; by < s.height; by += 8)
    for (int bx = 0; bx < s.width; bx += 8) {
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) b[8 * u + v] = s(by + u, bx + v) - 128.0;
      const Block c = dct2_8x8(b);
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) out(by + u, bx + v) = c[8 * u + v];
    }
  return out;
}

RealPlane plane_idct(const RealPlane& c) {
  if (c.height % 8 != 0 || c.width % 8 != 0) fail(ErrorKind::BadDims, "plane not 8-aligned");
  RealPlane out(c.height, c.width);
  Block b{};
  for (int by = 0; by < c.height; by += 8)
    for (int bx = 0; bx < c.width; bx += 8) {
      for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) b[8 * u + v] = c(by + u, bx + v);
      const Block s = idct2_8x8(b);
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) out(by + y, bx + x) = s[8 * y + x] + 128.0;
    }
  return out;
}

namespace {

IntPlane quantize_plane(const RealPlane& samples, const QuantTable& qm) {
  const RealPlane coeffs = plane_dct(samples);
  IntPlane out(samples.height, samples.width);
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    const int row = static_cast<int>(i / coeffs.width) % 8;
    const int col = static_cast<int>(i % coeffs.width) % 8;
    out.data[i] = static_cast<int>(std::round(coeffs.data[i] / qm[8 * row + col]));
  }
  return out;
}

RealPlane dequantize_plane(const IntPlane& q, const QuantTable& qm) {
  RealPlane out(q.height, q.width);
  for (int y = 0; y < q.height; ++y)
    for (int x = 0; x < q.width; ++x)
      out(y, x) = static_cast<double>(q(y, x)) * qm[8 * (y % 8) + (x % 8)];
  return out;
}

}  // namespace

QuantizedImage compress(const PixelImage& img, int qf, Subsampling subsampling) {
  check_qf(qf);
  if (img.channels() == 0 || img.height() == 0 || img.width() == 0)
    fail(ErrorKind::BadDims, "empty image");
  QuantizedImage out;
  out.height = img.height();
  out.width = img.width();

  const QuantMatrix luma = qf_to_qm(qf, ComponentKind::Luma);
  if (img.colorspace == Colorspace::Gray) {
    if (img.channels() != 1) fail(ErrorKind::WrongColorspace, "gray image must have one plane");
    out.subsampling = Subsampling::S444;
    out.quant_tables = {luma.values};
    const RealPlane padded =
        pad_replicate(img.planes[0], round_up(out.height, 8), round_up(out.width, 8));
    out.components.push_back({1, quantize_plane(padded, luma.values), 0});
    return out;
  }

  const PixelImage ycc = img.colorspace == Colorspace::YCbCr ? img : rgb_to_ycbcr(img);
  const QuantMatrix chroma = qf_to_qm(qf, ComponentKind::Chroma);
  out.subsampling = subsampling;
  out.quant_tables = {luma.values, chroma.values};
  const int align = subsampling == Subsampling::S420 ? 16 : 8;
  const int ph = round_up(out.height, align), pw = round_up(out.width, align);
  for (int c = 0; c < 3; ++c) {
    RealPlane padded = pad_replicate(ycc.planes[c], ph, pw);
    if (c > 0 && subsampling == Subsampling::S420) padded = chroma_downsample(padded);
    const QuantTable& qm = c == 0 ? luma.values : chroma.values;
    out.components.push_back({c + 1, quantize_plane(padded, qm), c == 0 ? 0 : 1});
  }
  return out;
}

PixelImage decompress(const QuantizedImage& img) {
  validate(img);
  std::vector<RealPlane> planes;
  for (std::size_t c = 0; c < img.components.size(); ++c) {
    RealPlane p = plane_idct(dequantize_plane(img.components[c].plane, img.table_for(c)));
    for (double& v : p.data) v = clamp255(v);
    if (c > 0 && img.subsampling == Subsampling::S420) p = chroma_upsample(p);
    planes.push_back(std::move(p));
  }
  PixelImage full;
  full.colorspace = img.is_gray() ? Colorspace::Gray : Colorspace::YCbCr;
  for (auto& p : planes) {
    RealPlane cropped(img.height, img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) cropped(y, x) = p(y, x);
    full.planes.push_back(std::move(cropped));
  }
  return img.is_gray() ? full : ycbcr_to_rgb(full);
}

PixelImage translate(const PixelImage& img, int dx, int dy) {
  PixelImage out = img;
  for (std::size_t c = 0; c < img.planes.size(); ++c) {
    const RealPlane& src = img.planes[c];
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < src.width; ++x)
        out.planes[c](y, x) = src(std::max(y - dy, 0), std::max(x - dx, 0));
  }
  return out;
}

PixelImage quantize_to_8bit(const PixelImage& img) {
  PixelImage out = img;
  for (auto& p : out.planes)
    for (double& v : p.data) v = std::round(clamp255(v));
  return out;
}

QuantizedImage degrade_double(const PixelImage& img, int qf1, int qf2,
                              std::pair<int, int> shift, Subsampling subsampling) {
  const auto [dx, dy] = shift;
  if (dx < 0 || dx > 7 || dy < 0 || dy > 7)
    fail(ErrorKind::ShiftOutOfRange,
         "shift (" + std::to_string(dx) + "," + std::to_string(dy) + ") outside [0,7]");
  check_qf(qf1);
  check_qf(qf2);
  const PixelImage first = quantize_to_8bit(decompress(compress(img, qf1, subsampling)));
  return compress(translate(first, dx, dy), qf2, subsampling);
}

double zero_fraction(const QuantizedImage& img) {
  std::size_t zeros = 0, total = 0;
  for (const auto& comp : img.components) {
    total += comp.plane.size();
    zeros += static_cast<std::size_t>(std::count(comp.plane.data.begin(), comp.plane.data.end(), 0));
  }
  return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

}  // namespace dctx
