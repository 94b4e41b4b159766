#pragma once

// Dense reference implementations of the two attention branches, written
// directly over index loops from the parameter values of a Model.

#include <cmath>
#include <string>
#include <vector>

#include "dctx/net.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;  // [tokens][features]

inline std::vector<double> vals(const dctx::Model& m, const std::string& name) {
  const auto v = m.store().get(name).values();
  return {v.begin(), v.end()};
}

inline Mat layer_norm_rows(const Mat& x, const std::vector<double>& g, const std::vector<double>& b) {
  Mat out = x;
  for (auto& row : out) {
    double mu = 0, var = 0;
    for (double v : row) mu += v;
    mu /= row.size();
    for (double v : row) var += (v - mu) * (v - mu);
    var /= row.size();
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = (row[c] - mu) / std::sqrt(var + 1e-5) * g[c] + b[c];
  }
  return out;
}

inline Mat affine(const Mat& x, const std::vector<double>& w, const std::vector<double>& b) {
  const std::size_t out = b.size();
  Mat y(x.size(), std::vector<double>(out));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < out; ++j) {
      double acc = b[j];
      for (std::size_t k = 0; k < x[i].size(); ++k) acc += x[i][k] * w[k * out + j];
      y[i][j] = acc;
    }
  return y;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

inline Mat mlp_residual(const dctx::Model& m, const std::string& p, const Mat& x1) {
  Mat h = affine(layer_norm_rows(x1, vals(m, p + "norm2.g"), vals(m, p + "norm2.b")), vals(m, p + "mlp.fc1.w"),
                 vals(m, p + "mlp.fc1.b"));
  for (auto& r : h)
    for (double& v : r) v = gelu(v);
  const Mat o = affine(h, vals(m, p + "mlp.fc2.w"), vals(m, p + "mlp.fc2.b"));
  Mat x2 = x1;
  for (std::size_t i = 0; i < x2.size(); ++i)
    for (std::size_t c = 0; c < x2[i].size(); ++c) x2[i][c] += o[i][c];
  return x2;
}

inline void softmax_row(std::vector<double>& r) {
  double mx = r[0], s = 0;
  for (double v : r) mx = std::max(mx, v);
  for (double& v : r) s += (v = std::exp(v - mx));
  for (double& v : r) v /= s;
}

/// (C, H, W) values -> tokens [H*W][C]
inline Mat to_tokens(const dctx::ad::Tensor& x) {
  const int c = x.dim(0), hw = x.dim(1) * x.dim(2);
  Mat t(hw, std::vector<double>(c));
  for (int ch = 0; ch < c; ++ch)
    for (int p = 0; p < hw; ++p) t[p][ch] = x.values()[ch * hw + p];
  return t;
}

/// Unshifted W-MSA block on a single M x M window as full attention over all tokens.
inline Mat dense_wmsa(const dctx::Model& m, const std::string& p, const dctx::ad::Tensor& x) {
  const auto& cfg = m.config();
  const int c = cfg.embed_dim, mw = cfg.window, n = mw * mw, nh = cfg.heads(), dh = cfg.d_head;
  const Mat t = to_tokens(x);
  const Mat qkv = affine(layer_norm_rows(t, vals(m, p + "norm1.g"), vals(m, p + "norm1.b")), vals(m, p + "qkv.w"),
                         vals(m, p + "qkv.b"));
  const std::vector<double> rpb = vals(m, p + "rpb");
  Mat heads(n, std::vector<double>(c, 0.0));
  for (int h = 0; h < nh; ++h)
    for (int i = 0; i < n; ++i) {
      std::vector<double> row(n);
      for (int j = 0; j < n; ++j) {
        double dot = 0;
        for (int a = 0; a < dh; ++a) dot += qkv[i][h * dh + a] * qkv[j][c + h * dh + a];
        const int idx = (i / mw - j / mw + mw - 1) * (2 * mw - 1) + (i % mw - j % mw + mw - 1);
        row[j] = dot / std::sqrt(static_cast<double>(dh)) + rpb[idx * nh + h];
      }
      softmax_row(row);
      for (int a = 0; a < dh; ++a)
        for (int j = 0; j < n; ++j) heads[i][h * dh + a] += row[j] * qkv[j][2 * c + h * dh + a];
    }
  const Mat o = affine(heads, vals(m, p + "proj.w"), vals(m, p + "proj.b"));
  Mat x1 = t;
  for (int i = 0; i < n; ++i)
    for (int ch = 0; ch < c; ++ch) x1[i][ch] += o[i][ch];
  return mlp_residual(m, p, x1);
}

/// F-MSA with an explicit C x C channel attention matrix per head.
inline Mat dense_fmsa(const dctx::Model& m, const std::string& p, const dctx::ad::Tensor& x) {
  const auto& cfg = m.config();
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w, dh = cfg.d_head, nh = c / dh;
  const Mat t = to_tokens(x);
  const Mat u = layer_norm_rows(t, vals(m, p + "norm1.g"), vals(m, p + "norm1.b"));
  auto dwconv = [&](const Mat& in, const std::string& name) {
    const auto k = vals(m, name + ".w"), b = vals(m, name + ".b");
    Mat out(hw, std::vector<double>(c));
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double acc = b[ch];
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int sy = y + dy, sx = xx + dx;
              if (sy >= 0 && sy < h && sx >= 0 && sx < w) acc += k[ch * 9 + (dy + 1) * 3 + dx + 1] * in[sy * w + sx][ch];
            }
          out[y * w + xx][ch] = acc;
        }
    return out;
  };
  Mat pe = dwconv(u, p + "pe.dw1");
  for (auto& r : pe)
    for (double& v : r) v = gelu(v);
  pe = dwconv(pe, p + "pe.dw2");
  Mat vin = u;
  for (int i = 0; i < hw; ++i)
    for (int ch = 0; ch < c; ++ch) vin[i][ch] += pe[i][ch];
  const Mat qkv = affine(vin, vals(m, p + "qkv.w"), vals(m, p + "qkv.b"));
  Mat o_tok(hw, std::vector<double>(c, 0.0));
  for (int hd = 0; hd < nh; ++hd) {
    std::vector<std::vector<double>> attn(dh, std::vector<double>(dh));
    for (int a = 0; a < dh; ++a) {
      for (int b = 0; b < dh; ++b) {
        double dot = 0;
        for (int q = 0; q < hw; ++q) dot += qkv[q][hd * dh + a] * qkv[q][c + hd * dh + b];
        attn[a][b] = dot / std::sqrt(static_cast<double>(hw));
      }
      softmax_row(attn[a]);
    }
    for (int a = 0; a < dh; ++a)
      for (int q = 0; q < hw; ++q) {
        double acc = 0;
        for (int b = 0; b < dh; ++b) acc += attn[a][b] * qkv[q][2 * c + hd * dh + b];
        o_tok[q][hd * dh + a] = acc;
      }
  }
  const Mat o = affine(o_tok, vals(m, p + "proj.w"), vals(m, p + "proj.b"));
  Mat x1 = t;
  for (int i = 0; i < hw; ++i)
    for (int ch = 0; ch < c; ++ch) x1[i][ch] += o[i][ch];
  return mlp_residual(m, p, x1);
}

inline double max_diff(const Mat& tokens, const dctx::ad::Tensor& y) {
  const int c = y.dim(0), hw = y.dim(1) * y.dim(2);
  double d = 0;
  for (int ch = 0; ch < c; ++ch)
    for (int q = 0; q < hw; ++q) d = std::max(d, std::abs(tokens[q][ch] - y.values()[ch * hw + q]));
  return d;
}

/// Gives every parameter (including norms and the projection) a random value.
inline void randomize(dctx::Model& m, std::uint64_t seed, double spread = 0.2) {
  dctx::Rng rng(seed);
  for (auto& p : m.params())
    for (double& v : p.tensor.mutable_values()) {
      const bool gain = p.name.size() > 2 && p.name.ends_with(".g");
      v = (gain ? 1.0 : 0.0) + rng.uniform(-spread, spread);
    }
}

}  // namespace oracle
