#include "dctx/jfif.hpp"

#include <algorithm>
#include <cstdlib>
#include <optional>
#include <string>

#include "dctx/error.hpp"

namespace dctx {

namespace {

constexpr std::array<int, 64> kZigzagToRaster = {
    0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
    12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
    35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
    58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

constexpr std::array<int, 64> invert(const std::array<int, 64>& order) {
  std::array<int, 64> inv{};
  for (int i = 0; i < 64; ++i) inv[order[i]] = i;
  return inv;
}

constexpr std::array<int, 64> kRasterToZigzag = invert(kZigzagToRaster);

// Annex K.3 typical Huffman tables.
struct HuffSpec {
  std::array<std::uint8_t, 16> counts;
  std::vector<std::uint8_t> values;
};

const HuffSpec& dc_luma_spec() {
  static const HuffSpec s{{0, 1, 5, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0},
                          {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  return s;
}

const HuffSpec& dc_chroma_spec() {
  static const HuffSpec s{{0, 3, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0},
                          {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}};
  return s;
}

const HuffSpec& ac_luma_spec() {
  static const HuffSpec s{
      {0, 2, 1, 3, 3, 2, 4, 3, 5, 5, 4, 4, 0, 0, 1, 125},
      {0x01, 0x02, 0x03, 0x00, 0x04, 0x11, 0x05, 0x12, 0x21, 0x31, 0x41, 0x06, 0x13, 0x51,
       0x61, 0x07, 0x22, 0x71, 0x14, 0x32, 0x81, 0x91, 0xA1, 0x08, 0x23, 0x42, 0xB1, 0xC1,
       0x15, 0x52, 0xD1, 0xF0, 0x24, 0x33, 0x62, 0x72, 0x82, 0x09, 0x0A, 0x16, 0x17, 0x18,
       0x19, 0x1A, 0x25, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x34, 0x35, 0x36, 0x37, 0x38, 0x39,
       0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56, 0x57,
       0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74, 0x75,
       0x76, 0x77, 0x78, 0x79, 0x7A, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89, 0x8A, 0x92,
       0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5, 0xA6, 0xA7,
       0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA, 0xC2, 0xC3,
       0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6, 0xD7, 0xD8,
       0xD9, 0xDA, 0xE1, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF1, 0xF2,
       0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA}};
  return s;
}

const HuffSpec& ac_chroma_spec() {
  static const HuffSpec s{
      {0, 2, 1, 2, 4, 4, 3, 4, 7, 5, 4, 4, 0, 1, 2, 119},
      {0x00, 0x01, 0x02, 0x03, 0x11, 0x04, 0x05, 0x21, 0x31, 0x06, 0x12, 0x41, 0x51, 0x07,
       0x61, 0x71, 0x13, 0x22, 0x32, 0x81, 0x08, 0x14, 0x42, 0x91, 0xA1, 0xB1, 0xC1, 0x09,
       0x23, 0x33, 0x52, 0xF0, 0x15, 0x62, 0x72, 0xD1, 0x0A, 0x16, 0x24, 0x34, 0xE1, 0x25,
       0xF1, 0x17, 0x18, 0x19, 0x1A, 0x26, 0x27, 0x28, 0x29, 0x2A, 0x35, 0x36, 0x37, 0x38,
       0x39, 0x3A, 0x43, 0x44, 0x45, 0x46, 0x47, 0x48, 0x49, 0x4A, 0x53, 0x54, 0x55, 0x56,
       0x57, 0x58, 0x59, 0x5A, 0x63, 0x64, 0x65, 0x66, 0x67, 0x68, 0x69, 0x6A, 0x73, 0x74,
       0x75, 0x76, 0x77, 0x78, 0x79, 0x7A, 0x82, 0x83, 0x84, 0x85, 0x86, 0x87, 0x88, 0x89,
       0x8A, 0x92, 0x93, 0x94, 0x95, 0x96, 0x97, 0x98, 0x99, 0x9A, 0xA2, 0xA3, 0xA4, 0xA5,
       0xA6, 0xA7, 0xA8, 0xA9, 0xAA, 0xB2, 0xB3, 0xB4, 0xB5, 0xB6, 0xB7, 0xB8, 0xB9, 0xBA,
       0xC2, 0xC3, 0xC4, 0xC5, 0xC6, 0xC7, 0xC8, 0xC9, 0xCA, 0xD2, 0xD3, 0xD4, 0xD5, 0xD6,
       0xD7, 0xD8, 0xD9, 0xDA, 0xE2, 0xE3, 0xE4, 0xE5, 0xE6, 0xE7, 0xE8, 0xE9, 0xEA, 0xF2,
       0xF3, 0xF4, 0xF5, 0xF6, 0xF7, 0xF8, 0xF9, 0xFA}};
  return s;
}

int magnitude_bits(int v) {
  int a = std::abs(v), n = 0;
  while (a > 0) {
    ++n;
    a >>= 1;
  }
  return n;
}

int block_count(int pixels, int factor, int max_factor) {
  const int comp = (pixels * factor + max_factor - 1) / max_factor;
  return (comp + 7) / 8;
}

// ---------------------------------------------------------------- encoder

struct Code {
  std::uint16_t bits = 0;
  std::uint8_t length = 0;
};

std::array<Code, 256> build_codes(const HuffSpec& spec) {
  std::array<Code, 256> table{};
  std::uint16_t code = 0;
  std::size_t k = 0;
  for (int len = 1; len <= 16; ++len) {
    for (int i = 0; i < spec.counts[len - 1]; ++i) table[spec.values[k++]] = {code++, static_cast<std::uint8_t>(len)};
    code <<= 1;
  }
  return table;
}

class BitWriter {
 public:
  explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void put(std::uint32_t bits, int length) {
    for (int i = length - 1; i >= 0; --i) {
      acc_ = static_cast<std::uint8_t>((acc_ << 1) | ((bits >> i) & 1u));
      if (++count_ == 8) emit();
    }
  }

  void flush() {
    while (count_ != 0) put(1, 1);
  }

 private:
  void emit() {
    out_.push_back(acc_);
    if (acc_ == 0xFF) out_.push_back(0x00);
    acc_ = 0;
    count_ = 0;
  }

  std::vector<std::uint8_t>& out_;
  std::uint8_t acc_ = 0;
  int count_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, int v) {
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

void put_marker(std::vector<std::uint8_t>& out, std::uint8_t m) {
  out.push_back(0xFF);
  out.push_back(m);
}

void put_dht(std::vector<std::uint8_t>& out, int cls, int id, const HuffSpec& spec) {
  put_marker(out, 0xC4);
  put_u16(out, 2 + 1 + 16 + static_cast<int>(spec.values.size()));
  out.push_back(static_cast<std::uint8_t>((cls << 4) | id));
  out.insert(out.end(), spec.counts.begin(), spec.counts.end());
  out.insert(out.end(), spec.values.begin(), spec.values.end());
}

struct BlockEncoder {
  std::array<Code, 256> dc, ac;
  int pred = 0;

  void encode(BitWriter& bw, const IntPlane& plane, int by, int bx) {
    std::array<int, 64> zz{};
    for (int k = 0; k < 64; ++k) {
      const int r = kZigzagToRaster[k];
      zz[k] = plane(8 * by + r / 8, 8 * bx + r % 8);
    }
    const int diff = zz[0] - pred;
    pred = zz[0];
    const int dcat = magnitude_bits(diff);
    if (dcat > 11) fail(ErrorKind::RangeOverflow, "DC difference " + std::to_string(diff));
    bw.put(dc[dcat].bits, dc[dcat].length);
    if (dcat > 0) bw.put(static_cast<std::uint32_t>(diff < 0 ? diff - 1 : diff) & ((1u << dcat) - 1), dcat);

    int run = 0;
    for (int k = 1; k < 64; ++k) {
      const int v = zz[k];
      if (v == 0) {
        ++run;
        continue;
      }
      while (run > 15) {
        bw.put(ac[0xF0].bits, ac[0xF0].length);
        run -= 16;
      }
      const int cat = magnitude_bits(v);
      if (cat > 10) fail(ErrorKind::RangeOverflow, "AC coefficient " + std::to_string(v));
      const int sym = (run << 4) | cat;
      bw.put(ac[sym].bits, ac[sym].length);
      bw.put(static_cast<std::uint32_t>(v < 0 ? v - 1 : v) & ((1u << cat) - 1), cat);
      run = 0;
    }
    if (run > 0) bw.put(ac[0x00].bits, ac[0x00].length);
  }
};

// ---------------------------------------------------------------- decoder

struct HuffDecoder {
  std::array<int, 18> maxcode{};
  std::array<int, 17> valptr{};
  std::array<int, 17> mincode{};
  std::vector<std::uint8_t> values;
  bool defined = false;

  void build(const std::array<std::uint8_t, 16>& counts, std::vector<std::uint8_t> vals) {
    values = std::move(vals);
    int code = 0, k = 0;
    for (int len = 1; len <= 16; ++len) {
      const int n = counts[len - 1];
      valptr[len] = k;
      mincode[len] = code;
      code += n;
      k += n;
      maxcode[len] = n > 0 ? code - 1 : -1;
      code <<= 1;
    }
    maxcode[17] = 0x7FFFFFFF;
    defined = true;
  }
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool at_end() const { return pos_ >= bytes_.size(); }
  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

  std::uint8_t u8() {
    if (pos_ >= bytes_.size()) fail(ErrorKind::CorruptEntropyStream, "unexpected end of data");
    return bytes_[pos_++];
  }
  int u16() {
    const int hi = u8();
    return (hi << 8) | u8();
  }
  void skip(std::size_t n) {
    if (pos_ + n > bytes_.size()) fail(ErrorKind::CorruptEntropyStream, "segment runs past end of data");
    pos_ += n;
  }
  std::span<const std::uint8_t> bytes() const { return bytes_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

class BitReader {
 public:
  explicit BitReader(ByteReader& src) : src_(src) {}

  int bit() {
    if (count_ == 0) fill();
    --count_;
    return (acc_ >> count_) & 1;
  }

  int bits(int n) {
    int v = 0;
    for (int i = 0; i < n; ++i) v = (v << 1) | bit();
    return v;
  }

  int decode(const HuffDecoder& h) {
    int code = 0;
    for (int len = 1; len <= 16; ++len) {
      code = (code << 1) | bit();
      if (code <= h.maxcode[len]) {
        const int idx = h.valptr[len] + code - h.mincode[len];
        if (idx < 0 || idx >= static_cast<int>(h.values.size())) break;
        return h.values[static_cast<std::size_t>(idx)];
      }
    }
    fail(ErrorKind::CorruptEntropyStream, "Huffman code not in table");
  }

  /// Drops buffered bits and consumes the expected RSTn marker.
  void restart(int expected) {
    count_ = 0;
    const auto b = src_.bytes();
    std::size_t p = src_.pos();
    if (p + 1 >= b.size() || b[p] != 0xFF || b[p + 1] != 0xD0 + expected)
      fail(ErrorKind::CorruptEntropyStream, "missing restart marker RST" + std::to_string(expected));
    src_.seek(p + 2);
  }

 private:
  void fill() {
    const auto b = src_.bytes();
    std::size_t p = src_.pos();
    if (p >= b.size()) fail(ErrorKind::CorruptEntropyStream, "entropy data truncated");
    std::uint8_t v = b[p];
    if (v == 0xFF) {
      if (p + 1 >= b.size()) fail(ErrorKind::CorruptEntropyStream, "entropy data truncated");
      if (b[p + 1] != 0x00)
        fail(ErrorKind::CorruptEntropyStream, "marker inside entropy data (premature end of scan)");
      src_.seek(p + 2);
    } else {
      src_.seek(p + 1);
    }
    acc_ = v;
    count_ = 8;
  }

  ByteReader& src_;
  int acc_ = 0;
  int count_ = 0;
};

int extend(int v, int t) { return t == 0 ? 0 : (v < (1 << (t - 1)) ? v - (1 << t) + 1 : v); }

struct FrameComponent {
  int id = 0;
  int h = 1, v = 1;
  int tq = 0;
  IntPlane plane;
  int dc_table = 0, ac_table = 0;
  int pred = 0;
};

void decode_block(BitReader& br, FrameComponent& c, const HuffDecoder& dc, const HuffDecoder& ac,
                  int by, int bx) {
  if (!dc.defined || !ac.defined) fail(ErrorKind::CorruptEntropyStream, "scan references undefined Huffman table");
  std::array<int, 64> zz{};
  const int t = dc.values.empty() ? 0 : br.decode(dc);
  if (t > 11) fail(ErrorKind::CorruptEntropyStream, "DC magnitude category " + std::to_string(t));
  c.pred += extend(br.bits(t), t);
  zz[0] = c.pred;
  for (int k = 1; k < 64;) {
    const int rs = br.decode(ac);
    const int r = rs >> 4, s = rs & 15;
    if (s == 0) {
      if (r != 15) break;
      k += 16;
      continue;
    }
    k += r;
    if (k > 63) fail(ErrorKind::CorruptEntropyStream, "AC run past end of block");
    zz[k++] = extend(br.bits(s), s);
  }
  if (8 * by + 7 >= c.plane.height || 8 * bx + 7 >= c.plane.width) return;
  for (int k = 0; k < 64; ++k) {
    const int r = kZigzagToRaster[k];
    c.plane(8 * by + r / 8, 8 * bx + r % 8) = zz[k];
  }
}

}  // namespace

const std::array<int, 64>& zigzag_to_raster() { return kZigzagToRaster; }
const std::array<int, 64>& raster_to_zigzag() { return kRasterToZigzag; }

void validate(const QuantizedImage& img) {
  if (img.components.size() != 1 && img.components.size() != 3)
    fail(ErrorKind::BadDims, "expected 1 or 3 components");
  if (img.height <= 0 || img.width <= 0 || img.height > 65535 || img.width > 65535)
    fail(ErrorKind::BadDims, "pixel dims out of range");
  if (img.quant_tables.empty() || img.quant_tables.size() > 4)
    fail(ErrorKind::BadDims, "expected 1..4 quantisation tables");
  for (const auto& t : img.quant_tables)
    for (int v : t)
      if (v < 1 || v > 255) fail(ErrorKind::RangeOverflow, "quantiser entry outside [1,255]");
  const bool s420 = img.subsampling == Subsampling::S420 && !img.is_gray();
  const int align = s420 ? 16 : 8;
  const int lh = (img.height + align - 1) / align * align;
  const int lw = (img.width + align - 1) / align * align;
  for (std::size_t c = 0; c < img.components.size(); ++c) {
    const auto& comp = img.components[c];
    if (comp.qm_index < 0 || comp.qm_index >= static_cast<int>(img.quant_tables.size()))
      fail(ErrorKind::BadDims, "component references a missing table");
    const bool chroma_sub = s420 && c > 0;
    const int eh = chroma_sub ? lh / 2 : lh, ew = chroma_sub ? lw / 2 : lw;
    if (comp.plane.height != eh || comp.plane.width != ew ||
        comp.plane.size() != static_cast<std::size_t>(eh) * ew)
      fail(ErrorKind::BadDims, "component " + std::to_string(c) + " plane is " +
                                   std::to_string(comp.plane.height) + "x" +
                                   std::to_string(comp.plane.width) + ", expected " +
                                   std::to_string(eh) + "x" + std::to_string(ew));
  }
}

std::vector<std::uint8_t> encode_jpeg(const QuantizedImage& img) {
  validate(img);
  std::vector<std::uint8_t> out;
  put_marker(out, 0xD8);

  // APP0 / JFIF 1.01, no thumbnail
  put_marker(out, 0xE0);
  put_u16(out, 16);
  for (std::uint8_t b : {'J', 'F', 'I', 'F', '\0'}) out.push_back(b);
  for (std::uint8_t b : {1, 1, 0}) out.push_back(b);
  put_u16(out, 1);
  put_u16(out, 1);
  out.push_back(0);
  out.push_back(0);

  for (std::size_t t = 0; t < img.quant_tables.size(); ++t) {
    put_marker(out, 0xDB);
    put_u16(out, 2 + 1 + 64);
    out.push_back(static_cast<std::uint8_t>(t));
    for (int k = 0; k < 64; ++k) out.push_back(static_cast<std::uint8_t>(img.quant_tables[t][kZigzagToRaster[k]]));
  }

  const bool gray = img.is_gray();
  const bool s420 = !gray && img.subsampling == Subsampling::S420;
  put_marker(out, 0xC0);
  put_u16(out, 8 + 3 * static_cast<int>(img.components.size()));
  out.push_back(8);
  put_u16(out, img.height);
  put_u16(out, img.width);
  out.push_back(static_cast<std::uint8_t>(img.components.size()));
  for (std::size_t c = 0; c < img.components.size(); ++c) {
    out.push_back(static_cast<std::uint8_t>(img.components[c].id));
    out.push_back(s420 && c == 0 ? 0x22 : 0x11);
    out.push_back(static_cast<std::uint8_t>(img.components[c].qm_index));
  }

  put_dht(out, 0, 0, dc_luma_spec());
  put_dht(out, 1, 0, ac_luma_spec());
  if (!gray) {
    put_dht(out, 0, 1, dc_chroma_spec());
    put_dht(out, 1, 1, ac_chroma_spec());
  }

  put_marker(out, 0xDA);
  put_u16(out, 6 + 2 * static_cast<int>(img.components.size()));
  out.push_back(static_cast<std::uint8_t>(img.components.size()));
  for (std::size_t c = 0; c < img.components.size(); ++c) {
    out.push_back(static_cast<std::uint8_t>(img.components[c].id));
    out.push_back(c == 0 ? 0x00 : 0x11);
  }
  out.push_back(0);
  out.push_back(63);
  out.push_back(0);

  static const auto dc_l = build_codes(dc_luma_spec()), ac_l = build_codes(ac_luma_spec());
  static const auto dc_c = build_codes(dc_chroma_spec()), ac_c = build_codes(ac_chroma_spec());
  std::vector<BlockEncoder> enc;
  for (std::size_t c = 0; c < img.components.size(); ++c)
    enc.push_back(c == 0 ? BlockEncoder{dc_l, ac_l, 0} : BlockEncoder{dc_c, ac_c, 0});

  BitWriter bw(out);
  const IntPlane& luma = img.components[0].plane;
  if (gray) {
    for (int by = 0; by < luma.height / 8; ++by)
      for (int bx = 0; bx < luma.width / 8; ++bx) enc[0].encode(bw, luma, by, bx);
  } else {
    const int mcu = s420 ? 16 : 8;
    for (int my = 0; my < luma.height / mcu; ++my)
      for (int mx = 0; mx < luma.width / mcu; ++mx) {
        if (s420) {
          for (int sy = 0; sy < 2; ++sy)
            for (int sx = 0; sx < 2; ++sx) enc[0].encode(bw, luma, 2 * my + sy, 2 * mx + sx);
        } else {
          enc[0].encode(bw, luma, my, mx);
        }
        enc[1].encode(bw, img.components[1].plane, my, mx);
        enc[2].encode(bw, img.components[2].plane, my, mx);
      }
  }
  bw.flush();
  put_marker(out, 0xD9);
  return out;
}

QuantizedImage parse_jpeg(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 0xFF || bytes[1] != 0xD8)
    fail(ErrorKind::MissingMarker, "stream does not start with SOI");
  ByteReader rd(bytes);
  rd.skip(2);

  std::array<std::optional<QuantTable>, 4> qtables;
  std::array<HuffDecoder, 4> dc_tables, ac_tables;
  std::vector<FrameComponent> comps;
  bool have_frame = false, have_scan = false, done = false;
  int height = 0, width = 0, hmax = 1, vmax = 1, restart_interval = 0;

  while (!done) {
    // find the next marker, tolerating fill bytes
    if (rd.at_end()) {
      if (!have_scan) fail(ErrorKind::MissingMarker, "no scan before end of data");
      break;  // missing EOI after a complete scan
    }
    if (rd.u8() != 0xFF) fail(ErrorKind::CorruptEntropyStream, "expected a marker");
    std::uint8_t m = rd.u8();
    while (m == 0xFF) m = rd.u8();

    if (m == 0xD9) {
      done = true;
      break;
    }
    if (m >= 0xD0 && m <= 0xD7) continue;  // stray RSTn between scans
    const int len = rd.u16();
    if (len < 2) fail(ErrorKind::CorruptEntropyStream, "bad segment length");
    const std::size_t seg_end = rd.pos() + static_cast<std::size_t>(len - 2);
    if (seg_end > bytes.size()) fail(ErrorKind::CorruptEntropyStream, "segment runs past end of data");

    switch (m) {
      case 0xDB:  // DQT
        while (rd.pos() < seg_end) {
          const int pq_tq = rd.u8();
          if ((pq_tq >> 4) != 0) fail(ErrorKind::UnsupportedProcess, "16-bit quantisation table");
          const int tq = pq_tq & 15;
          if (tq > 3) fail(ErrorKind::CorruptEntropyStream, "quantisation table id > 3");
          QuantTable t{};
          for (int k = 0; k < 64; ++k) {
            const int v = rd.u8();
            if (v == 0) fail(ErrorKind::CorruptEntropyStream, "zero quantiser entry");
            t[kZigzagToRaster[k]] = v;
          }
          qtables[tq] = t;
        }
        break;
      case 0xC4:  // DHT
        while (rd.pos() < seg_end) {
          const int tc_th = rd.u8();
          const int tc = tc_th >> 4, th = tc_th & 15;
          if (tc > 1 || th > 3) fail(ErrorKind::CorruptEntropyStream, "bad Huffman table class/id");
          std::array<std::uint8_t, 16> counts{};
          int total = 0;
          for (auto& c : counts) {
            c = rd.u8();
            total += c;
          }
          if (total > 256) fail(ErrorKind::CorruptEntropyStream, "Huffman table too large");
          std::vector<std::uint8_t> vals(static_cast<std::size_t>(total));
          for (auto& v : vals) v = rd.u8();
          (tc == 0 ? dc_tables : ac_tables)[th].build(counts, std::move(vals));
        }
        break;
      case 0xDD:  // DRI
        restart_interval = rd.u16();
        break;
      case 0xC0:
      case 0xC1: {
        if (have_frame) fail(ErrorKind::UnsupportedProcess, "multiple frames");
        const int precision = rd.u8();
        if (precision != 8) fail(ErrorKind::UnsupportedProcess, std::to_string(precision) + "-bit samples");
        height = rd.u16();
        width = rd.u16();
        if (height == 0 || width == 0) fail(ErrorKind::UnsupportedProcess, "DNL-defined height");
        const int nf = rd.u8();
        if (nf != 1 && nf != 3) fail(ErrorKind::UnsupportedProcess, std::to_string(nf) + " components");
        for (int i = 0; i < nf; ++i) {
          FrameComponent c;
          c.id = rd.u8();
          const int hv = rd.u8();
          c.h = hv >> 4;
          c.v = hv & 15;
          c.tq = rd.u8();
          if (c.h < 1 || c.h > 4 || c.v < 1 || c.v > 4 || c.tq > 3)
            fail(ErrorKind::CorruptEntropyStream, "bad frame component header");
          comps.push_back(c);
        }
        if (nf == 1) {
          comps[0].h = comps[0].v = 1;
        } else {
          const bool all_one = std::all_of(comps.begin(), comps.end(), [](const auto& c) { return c.h == 1 && c.v == 1; });
          const bool is420 = comps[0].h == 2 && comps[0].v == 2 && comps[1].h == 1 && comps[1].v == 1 &&
                             comps[2].h == 1 && comps[2].v == 1;
          if (!all_one && !is420) fail(ErrorKind::UnsupportedSampling, "only 4:4:4 and 4:2:0 are supported");
        }
        for (const auto& c : comps) {
          hmax = std::max(hmax, c.h);
          vmax = std::max(vmax, c.v);
        }
        const int mcux = (width + 8 * hmax - 1) / (8 * hmax);
        const int mcuy = (height + 8 * vmax - 1) / (8 * vmax);
        for (auto& c : comps) c.plane = IntPlane(mcuy * c.v * 8, mcux * c.h * 8);
        have_frame = true;
        break;
      }
      case 0xC2: case 0xC3: case 0xC5: case 0xC6: case 0xC7:
      case 0xC9: case 0xCA: case 0xCB: case 0xCD: case 0xCE: case 0xCF: case 0xCC:
        fail(ErrorKind::UnsupportedProcess, "non-baseline frame type (marker 0x" +
                                                std::to_string(static_cast<int>(m)) + ")");
      case 0xDA: {  // SOS
        if (!have_frame) fail(ErrorKind::MissingMarker, "SOS before SOF0");
        const int ns = rd.u8();
        if (ns < 1 || ns > static_cast<int>(comps.size()))
          fail(ErrorKind::CorruptEntropyStream, "bad scan component count");
        std::vector<FrameComponent*> scan;
        for (int i = 0; i < ns; ++i) {
          const int cid = rd.u8();
          const int tables = rd.u8();
          auto it = std::find_if(comps.begin(), comps.end(), [&](const auto& c) { return c.id == cid; });
          if (it == comps.end()) fail(ErrorKind::CorruptEntropyStream, "scan references unknown component");
          it->dc_table = tables >> 4;
          it->ac_table = tables & 15;
          if (it->dc_table > 3 || it->ac_table > 3) fail(ErrorKind::CorruptEntropyStream, "bad table selector");
          scan.push_back(&*it);
        }
        const int ss = rd.u8(), se = rd.u8(), ahal = rd.u8();
        if (ss != 0 || se != 63 || ahal != 0) fail(ErrorKind::UnsupportedProcess, "spectral selection / approximation");
        rd.seek(seg_end);

        BitReader br(rd);
        for (auto* c : scan) c->pred = 0;
        int mcus_done = 0, next_rst = 0;
        auto maybe_restart = [&](int total) {
          ++mcus_done;
          if (restart_interval > 0 && mcus_done % restart_interval == 0 && mcus_done < total) {
            br.restart(next_rst);
            next_rst = (next_rst + 1) & 7;
            for (auto* c : scan) c->pred = 0;
          }
        };
        if (ns == 1) {
          FrameComponent& c = *scan[0];
          const int bw = block_count(width, c.h, hmax), bh = block_count(height, c.v, vmax);
          for (int by = 0; by < bh; ++by)
            for (int bx = 0; bx < bw; ++bx) {
              decode_block(br, c, dc_tables[c.dc_table], ac_tables[c.ac_table], by, bx);
              maybe_restart(bw * bh);
            }
        } else {
          const int mcux = (width + 8 * hmax - 1) / (8 * hmax);
          const int mcuy = (height + 8 * vmax - 1) / (8 * vmax);
          for (int my = 0; my < mcuy; ++my)
            for (int mx = 0; mx < mcux; ++mx) {
              for (auto* c : scan)
                for (int sy = 0; sy < c->v; ++sy)
                  for (int sx = 0; sx < c->h; ++sx)
                    decode_block(br, *c, dc_tables[c->dc_table], ac_tables[c->ac_table], my * c->v + sy,
                                 mx * c->h + sx);
              maybe_restart(mcux * mcuy);
            }
        }
        have_scan = true;
        // skip trailing fill up to the next marker
        while (!rd.at_end()) {
          const std::size_t p = rd.pos();
          if (bytes[p] == 0xFF && p + 1 < bytes.size() && bytes[p + 1] != 0x00 &&
              !(bytes[p + 1] >= 0xD0 && bytes[p + 1] <= 0xD7))
            break;
          rd.seek(p + 1);
        }
        continue;  // segment end already handled
      }
      default:  // APPn, COM and anything else
        break;
    }
    rd.seek(seg_end);
  }

  if (!have_frame) fail(ErrorKind::MissingMarker, "no SOF0 frame header");
  if (!have_scan) fail(ErrorKind::MissingMarker, "no scan");

  QuantizedImage img;
  img.height = height;
  img.width = width;
  img.subsampling = (comps.size() == 3 && comps[0].h == 2) ? Subsampling::S420 : Subsampling::S444;
  std::array<int, 4> remap{-1, -1, -1, -1};
  for (int t = 0; t < 4; ++t)
    if (qtables[t]) {
      remap[t] = static_cast<int>(img.quant_tables.size());
      img.quant_tables.push_back(*qtables[t]);
    }
  for (auto& c : comps) {
    if (remap[c.tq] < 0) fail(ErrorKind::MissingMarker, "component uses undefined quantisation table");
    img.components.push_back({c.id, std::move(c.plane), remap[c.tq]});
  }
  return img;
}

}  // namespace dctx
