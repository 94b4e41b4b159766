#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dctx/blockdct.hpp"
#include "dctx/collocate.hpp"

namespace dctx {

enum class MetricChannel { RGB, Y };

/// 10 log10(255^2 / MSE); +infinity for identical images.
double psnr(const PixelImage& a, const PixelImage& b, MetricChannel channel = MetricChannel::RGB);

/// Single-scale SSIM on the luma channel: 11x11 Gaussian (sigma 1.5), K1 0.01,
/// K2 0.03, L 255, valid-region mean.
double ssim(const PixelImage& a, const PixelImage& b);

/// Blocking effect factor of one plane over 8-aligned boundaries (>= 0).
double blocking_effect_factor(const RealPlane& plane);

/// PSNR with MSE replaced by MSE + BEF(test).
double psnr_b(const PixelImage& reference, const PixelImage& test,
              MetricChannel channel = MetricChannel::RGB);

/// Per-frequency normalised histograms over shared bins spanning [-1024, 1024).
struct HistogramSet {
  int bins = 0;
  std::vector<std::vector<double>> freq;  // 64 x bins
};

HistogramSet dct_histograms(std::span<const CollocatedMap> maps, int n_bins = 256);

double js_divergence(const HistogramSet& x, const HistogramSet& y);
double bhattacharyya(const HistogramSet& x, const HistogramSet& y);

struct MetricsRow {
  std::string image;
  int qf = 0;
  std::string method;
  double psnr = 0, ssim = 0, psnr_b = 0;
  double js = 0, bha = 0;  // NaN when DCT metrics were not requested
};

struct MetricsReport {
  std::vector<MetricsRow> rows;

  /// Mean row per (qf, method), image = "mean". Infinite PSNRs stay infinite.
  std::vector<MetricsRow> means() const;
  void write_csv(std::ostream& out) const;
};

}  // namespace dctx
