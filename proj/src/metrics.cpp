#include "dctx/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>

#include "dctx/error.hpp"

namespace dctx {

namespace {

constexpr double kPeak2 = 255.0 * 255.0;
constexpr double kBhaFloor = 1e-12;

void check_same_dims(const PixelImage& a, const PixelImage& b) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width())
    fail(ErrorKind::DimMismatch, "images differ in shape");
}

RealPlane luma_of(const PixelImage& img) {
  if (img.colorspace == Colorspace::Gray || img.channels() == 1) return img.planes[0];
  if (img.colorspace == Colorspace::YCbCr) return img.planes[0];
  return rgb_to_ycbcr(img).planes[0];
}

std::vector<const RealPlane*> metric_planes(const PixelImage& img, MetricChannel ch, RealPlane& scratch) {
  if (ch == MetricChannel::Y || img.channels() == 1) {
    scratch = luma_of(img);
    return {&scratch};
  }
  std::vector<const RealPlane*> out;
  for (const auto& p : img.planes) out.push_back(&p);
  return out;
}

double mse(const RealPlane& a, const RealPlane& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

double to_db(double err) {
  return err <= 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(kPeak2 / err);
}

std::vector<double> gaussian_window() {
  std::vector<double> g(11);
  double sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    const double x = i - 5;
    g[i] = std::exp(-(x * x) / (2.0 * 1.5 * 1.5));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-region filtering with the 11-tap Gaussian.
RealPlane filter_valid(const RealPlane& p, const std::vector<double>& g) {
  RealPlane tmp(p.height, p.width - 10);
  for (int y = 0; y < tmp.height; ++y)
    for (int x = 0; x < tmp.width; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 11; ++k) acc += g[k] * p(y, x + k);
      tmp(y, x) = acc;
    }
  RealPlane out(p.height - 10, p.width - 10);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int k = 0; k < 11; ++k) acc += g[k] * tmp(y + k, x);
      out(y, x) = acc;
    }
  return out;
}

RealPlane product(const RealPlane& a, const RealPlane& b) {
  RealPlane out(a.height, a.width);
  for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

double kl_term(double p, double m) { return p > 0.0 ? p * std::log(p / m) : 0.0; }

void check_bins(const HistogramSet& x, const HistogramSet& y) {
  if (x.bins != y.bins || x.freq.size() != 64 || y.freq.size() != 64)
    fail(ErrorKind::BinMismatch, "histogram layouts differ");
}

}  // namespace

double psnr(const PixelImage& a, const PixelImage& b, MetricChannel channel) {
  check_same_dims(a, b);
  RealPlane sa, sb;
  const auto pa = metric_planes(a, channel, sa);
  const auto pb = metric_planes(b, channel, sb);
  double err = 0.0;
  for (std::size_t c = 0; c < pa.size(); ++c) err += mse(*pa[c], *pb[c]);
  return to_db(err / static_cast<double>(pa.size()));
}

double ssim(const PixelImage& a, const PixelImage& b) {
  check_same_dims(a, b);
  if (a.height() < 11 || a.width() < 11) fail(ErrorKind::TooSmall, "SSIM needs at least 11x11 pixels");
  const RealPlane x = luma_of(a), y = luma_of(b);
  const auto g = gaussian_window();
  const double c1 = (0.01 * 255) * (0.01 * 255), c2 = (0.03 * 255) * (0.03 * 255);
  const RealPlane mx = filter_valid(x, g), my = filter_valid(y, g);
  const RealPlane sxx = filter_valid(product(x, x), g), syy = filter_valid(product(y, y), g);
  const RealPlane sxy = filter_valid(product(x, y), g);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double ux = mx.data[i], uy = my.data[i];
    const double vx = sxx.data[i] - ux * ux, vy = syy.data[i] - uy * uy, cxy = sxy.data[i] - ux * uy;
    acc += ((2 * ux * uy + c1) * (2 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(mx.size());
}

double blocking_effect_factor(const RealPlane& p) {
  constexpr int kBlock = 8;
  double boundary = 0.0, interior = 0.0;
  long n_boundary = 0, n_interior = 0;
  for (int y = 0; y < p.height; ++y)
    for (int x = 0; x + 1 < p.width; ++x) {
      const double d = p(y, x) - p(y, x + 1);
      if ((x + 1) % kBlock == 0) {
        boundary += d * d;
        ++n_boundary;
      } else {
        interior += d * d;
        ++n_interior;
      }
    }
  for (int y = 0; y + 1 < p.height; ++y)
    for (int x = 0; x < p.width; ++x) {
      const double d = p(y, x) - p(y + 1, x);
      if ((y + 1) % kBlock == 0) {
        boundary += d * d;
        ++n_boundary;
      } else {
        interior += d * d;
        ++n_interior;
      }
    }
  if (n_boundary == 0 || n_interior == 0) return 0.0;
  const double db = boundary / static_cast<double>(n_boundary);
  const double dbc = interior / static_cast<double>(n_interior);
  if (db <= dbc) return 0.0;
  const double eta = std::log2(kBlock) / std::log2(std::min(p.height, p.width));
  return eta * (db - dbc);
}

double psnr_b(const PixelImage& reference, const PixelImage& test, MetricChannel channel) {
  check_same_dims(reference, test);
  RealPlane sr, st;
  const auto pr = metric_planes(reference, channel, sr);
  const auto pt = metric_planes(test, channel, st);
  double err = 0.0;
  for (std::size_t c = 0; c < pr.size(); ++c) err += mse(*pr[c], *pt[c]) + blocking_effect_factor(*pt[c]);
  return to_db(err / static_cast<double>(pr.size()));
}

HistogramSet dct_histograms(std::span<const CollocatedMap> maps, int n_bins) {
  if (n_bins < 2) fail(ErrorKind::BinMismatch, "need at least two bins");
  HistogramSet h;
  h.bins = n_bins;
  h.freq.assign(64, std::vector<double>(static_cast<std::size_t>(n_bins), 0.0));
  const double width = 2048.0 / n_bins;
  std::size_t sites = 0;
  for (const auto& m : maps) {
    const std::size_t per_channel = static_cast<std::size_t>(m.rows) * m.cols;
    sites += per_channel;
    for (int k = 0; k < 64; ++k)
      for (std::size_t s = 0; s < per_channel; ++s) {
        const double v = m.data[k * per_channel + s];
        const int bin = std::clamp(static_cast<int>(std::floor((v + 1024.0) / width)), 0, n_bins - 1);
        h.freq[k][bin] += 1.0;
      }
  }
  if (sites == 0) fail(ErrorKind::EmptyInput, "no coefficients to histogram");
  for (auto& f : h.freq)
    for (double& v : f) v /= static_cast<double>(sites);
  return h;
}

double js_divergence(const HistogramSet& x, const HistogramSet& y) {
  check_bins(x, y);
  double total = 0.0;
  for (int c = 0; c < 64; ++c) {
    double d = 0.0;
    for (int i = 0; i < x.bins; ++i) {
      const double p = x.freq[c][i], q = y.freq[c][i], m = 0.5 * (p + q);
      d += 0.5 * (kl_term(p, m) + kl_term(q, m));
    }
    total += d;
  }
  return total / 64.0;
}

double bhattacharyya(const HistogramSet& x, const HistogramSet& y) {
  check_bins(x, y);
  double total = 0.0;
  for (int c = 0; c < 64; ++c) {
    double bc = 0.0;
    for (int i = 0; i < x.bins; ++i) bc += std::sqrt(x.freq[c][i] * y.freq[c][i]);
    total += -std::log(std::max(bc, kBhaFloor));
  }
  return total / 64.0;
}

std::vector<MetricsRow> MetricsReport::means() const {
  std::map<std::pair<int, std::string>, std::tuple<MetricsRow, int>> acc;
  for (const auto& r : rows) {
    auto& [m, n] = acc[{r.qf, r.method}];
    m.image = "mean";
    m.qf = r.qf;
    m.method = r.method;
    m.psnr += r.psnr;
    m.ssim += r.ssim;
    m.psnr_b += r.psnr_b;
    m.js += r.js;
    m.bha += r.bha;
    ++n;
  }
  std::vector<MetricsRow> out;
  for (auto& [key, val] : acc) {
    auto& [m, n] = val;
    m.psnr /= n;
    m.ssim /= n;
    m.psnr_b /= n;
    m.js /= n;
    m.bha /= n;
    out.push_back(m);
  }
  return out;
}

void MetricsReport::write_csv(std::ostream& out) const {
  auto num = [&](double v) {
    if (std::isnan(v)) {
      out << "";
    } else if (std::isinf(v)) {
      out << (v > 0 ? "inf" : "-inf");
    } else {
      out << std::setprecision(6) << std::fixed << v;
    }
  };
  out << "image,qf,method,psnr,ssim,psnr_b,js,bha\n";
  auto emit = [&](const MetricsRow& r) {
    out << r.image << ',' << r.qf << ',' << r.method << ',';
    num(r.psnr);
    out << ',';
    num(r.ssim);
    out << ',';
    num(r.psnr_b);
    out << ',';
    num(r.js);
    out << ',';
    num(r.bha);
    out << '\n';
  };
  for (const auto& r : rows) emit(r);
  for (const auto& r : means()) emit(r);
}

}  // namespace dctx
