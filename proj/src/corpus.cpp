#include "dctx/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "dctx/error.hpp"
#include "dctx/pnm.hpp"
#include "dctx/rng.hpp"

namespace dctx {

namespace {

using Rgb = std::array<double, 3>;

Rgb random_colour(Rng& rng) {
  const double level = rng.uniform(30, 225);
  return {level + rng.uniform(-25, 25), level + rng.uniform(-25, 25), level + rng.uniform(-25, 25)};
}

/// Bilinearly interpolated lattice noise with the given cell size, in [-1, 1].
std::vector<double> value_noise(int h, int w, int cell, Rng& rng) {
  const int gh = h / cell + 2, gw = w / cell + 2;
  std::vector<double> grid(static_cast<std::size_t>(gh) * gw);
  for (double& g : grid) g = rng.uniform(-1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double fy = static_cast<double>(y) / cell, fx = static_cast<double>(x) / cell;
      const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
      const double ty = fy - iy, tx = fx - ix;
      const double sy = ty * ty * (3 - 2 * ty), sx = tx * tx * (3 - 2 * tx);
      auto g = [&](int a, int b) { return grid[static_cast<std::size_t>(a) * gw + b]; };
      out[static_cast<std::size_t>(y) * w + x] =
          (1 - sy) * ((1 - sx) * g(iy, ix) + sx * g(iy, ix + 1)) + sy * ((1 - sx) * g(iy + 1, ix) + sx * g(iy + 1, ix + 1));
    }
  return out;
}

}  // namespace

PixelImage synth_image(int height, int width, std::uint64_t seed) {
  if (height < 8 || width < 8) fail(ErrorKind::BadDims, "synthetic images need at least 8x8 pixels");
  Rng rng(seed);
  PixelImage img;
  img.colorspace = Colorspace::RGB;
  img.planes.assign(3, RealPlane(height, width));

  // smooth shading
  const Rgb base = random_colour(rng);
  for (int c = 0; c < 3; ++c) {
    struct Wave { double fy, fx, phase, amp; };
    std::array<Wave, 3> waves{};
    for (auto& wv : waves)
      wv = {rng.uniform(-1.5, 1.5) / height, rng.uniform(-1.5, 1.5) / width, rng.uniform(0, 2 * std::numbers::pi),
            rng.uniform(10, 35)};
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double v = base[c];
        for (const auto& wv : waves) v += wv.amp * std::cos(2 * std::numbers::pi * (wv.fy * y + wv.fx * x) + wv.phase);
        img.planes[c](y, x) = v;
      }
  }

  // shapes, each with a linear colour ramp and a one-pixel soft edge
  const int shapes = rng.uniform_int(6, 12);
  const double scale = std::min(height, width);
  for (int s = 0; s < shapes; ++s) {
    const int kind = rng.uniform_int(0, 2);
    const double cy = rng.uniform(0, height), cx = rng.uniform(0, width);
    const double ry = rng.uniform(0.05, 0.3) * scale, rx = rng.uniform(0.05, 0.3) * scale;
    const double angle = rng.uniform(0, std::numbers::pi);
    const Rgb col = random_colour(rng);
    const double gy = rng.uniform(-0.4, 0.4), gx = rng.uniform(-0.4, 0.4);
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        const double dy = y - cy, dx = x - cx;
        const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
        double dist;  // approximate signed distance in pixels, negative inside
        if (kind == 0) {
          dist = (std::hypot(u / rx, v / ry) - 1.0) * std::min(rx, ry);
        } else if (kind == 1) {
          dist = std::max(std::abs(u) - rx, std::abs(v) - ry);
        } else {
          const double slope = 2.0 * ry / rx;
          dist = std::max(v - ry, (slope * std::abs(u) - ry - v) / std::sqrt(1.0 + slope * slope));
        }
        const double alpha = std::clamp(0.5 - dist, 0.0, 1.0);
        if (alpha <= 0.0) continue;
        for (int c = 0; c < 3; ++c) {
          const double fill = col[c] + gy * dy + gx * dx;
          img.planes[c](y, x) = (1 - alpha) * img.planes[c](y, x) + alpha * fill;
        }
      }
  }

  // mild texture, mostly shared across channels
  const std::vector<double> coarse = value_noise(height, width, 8, rng);
  const std::vector<double> fine = value_noise(height, width, 3, rng);
  const double a_coarse = rng.uniform(1, 4), a_fine = rng.uniform(0.3, 1.0);
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < img.planes[c].size(); ++i)
      img.planes[c].data[i] += a_coarse * coarse[i] + a_fine * fine[i];

  return quantize_to_8bit(img);
}

std::vector<PixelImage> synth_corpus(int count, int height, int width, std::uint64_t seed) {
  std::vector<PixelImage> out;
  for (int i = 0; i < count; ++i) out.push_back(synth_image(height, width, seed * 1000003ULL + static_cast<std::uint64_t>(i)));
  return out;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::Io, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<PixelImage> load_corpus(const std::filesystem::path& dir) {
  std::vector<PixelImage> out;
  for (const auto& f : list_images(dir)) out.push_back(read_pnm(f));
  if (out.empty()) fail(ErrorKind::EmptyInput, "no .ppm/.pgm images in " + dir.string());
  return out;
}

}  // namespace dctx
