#include "dctx/pnm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "dctx/error.hpp"

namespace dctx {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<char>& buf) : buf_(buf) {}

  std::string token() {
    skip_space_and_comments();
    std::string t;
    while (pos_ < buf_.size() && !std::isspace(static_cast<unsigned char>(buf_[pos_]))) t += buf_[pos_++];
    return t;
  }

  int number() {
    const std::string t = token();
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      fail(ErrorKind::BadImageFile, "bad PNM header field '" + t + "'");
    return std::stoi(t);
  }

  // exactly one whitespace byte separates the header from the raster
  std::size_t raster_start() const { return pos_ + 1; }

 private:
  void skip_space_and_comments() {
    while (pos_ < buf_.size()) {
      if (buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(buf_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& buf_;
  std::size_t pos_ = 0;
};

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

PixelImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  const std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  HeaderReader hdr(buf);
  const std::string magic = hdr.token();
  if (magic != "P5" && magic != "P6") fail(ErrorKind::BadImageFile, path.string() + ": not a binary PGM/PPM");
  const int w = hdr.number(), h = hdr.number(), maxval = hdr.number();
  if (maxval != 255) fail(ErrorKind::BadImageFile, "only maxval 255 is supported");
  if (w <= 0 || h <= 0) fail(ErrorKind::BadImageFile, "empty image");
  const int channels = magic == "P6" ? 3 : 1;
  const std::size_t start = hdr.raster_start();
  const std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (buf.size() < start + need) fail(ErrorKind::BadImageFile, path.string() + ": truncated raster");

  PixelImage img;
  img.colorspace = channels == 3 ? Colorspace::RGB : Colorspace::Gray;
  img.planes.assign(static_cast<std::size_t>(channels), RealPlane(h, w));
  for (std::size_t i = 0; i < static_cast<std::size_t>(w) * h; ++i)
    for (int c = 0; c < channels; ++c)
      img.planes[c].data[i] = static_cast<unsigned char>(buf[start + i * channels + c]);
  return img;
}

void write_pnm(const std::filesystem::path& path, const PixelImage& img) {
  const int channels = img.channels();
  if (channels != 1 && channels != 3) fail(ErrorKind::WrongColorspace, "PNM needs 1 or 3 channels");
  if (channels == 3 && img.colorspace != Colorspace::RGB)
    fail(ErrorKind::WrongColorspace, "PPM output must be RGB");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << (channels == 3 ? "P6" : "P5") << '\n' << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<char> raster(static_cast<std::size_t>(img.width()) * img.height() * channels);
  for (std::size_t i = 0; i < img.planes[0].size(); ++i)
    for (int c = 0; c < channels; ++c) raster[i * channels + c] = static_cast<char>(to_byte(img.planes[c].data[i]));
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
}

void write_pgm_normalized(const std::filesystem::path& path, const RealPlane& plane) {
  PixelImage img;
  img.colorspace = Colorspace::Gray;
  RealPlane p = plane;
  const auto [lo, hi] = std::minmax_element(p.data.begin(), p.data.end());
  const double a = *lo, span = *hi - *lo;
  for (double& v : p.data) v = span > 0 ? 255.0 * (v - a) / span : 0.0;
  img.planes.push_back(std::move(p));
  write_pnm(path, img);
}

}  // namespace dctx
