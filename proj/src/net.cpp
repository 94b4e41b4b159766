#include "dctx/net.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "dctx/error.hpp"

namespace dctx {

using ad::InitKind;
using ad::Tensor;

namespace {

constexpr double kCoefScale = 1024.0;

const std::pair<Ablation, std::string_view> kAblationNames[] = {
    {Ablation::Full, "full"},
    {Ablation::ParallelSpatial, "parallel-spatial"},
    {Ablation::ParallelFrequential, "parallel-frequential"},
    {Ablation::Successive, "successive"},
    {Ablation::AddFusion, "add-fusion"},
    {Ablation::ConcatNoConv, "concat-no-conv"},
    {Ablation::NoQM, "no-qm"},
    {Ablation::ConcatQM, "concat-qm"},
};

int parse_int(std::string_view key, const std::string& v) {
  try {
    std::size_t used = 0;
    const int n = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    fail(ErrorKind::ConfigInvalid, "bad integer for " + std::string(key) + ": " + v);
  }
}

bool parse_bool(std::string_view key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(ErrorKind::ConfigInvalid, "bad boolean for " + std::string(key) + ": " + v);
}

/// Shifted-window attention mask [nW, 1, N, N]: -100 between tokens that
/// came from different regions before the roll.
Tensor shift_mask(int h, int w, int m) {
  const int s = m / 2;
  auto region = [m, s](int p, int extent) { return p < extent - m ? 0 : (p < extent - s ? 1 : 2); };
  const int nwx = w / m, nw = (h / m) * nwx, n = m * m;
  std::vector<double> mask(static_cast<std::size_t>(nw) * n * n, 0.0);
  for (int win = 0; win < nw; ++win) {
    std::vector<int> label(n);
    for (int t = 0; t < n; ++t) {
      const int y = (win / nwx) * m + t / m, x = (win % nwx) * m + t % m;
      label[t] = 3 * region(y, h) + region(x, w);
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (label[i] != label[j]) mask[(static_cast<std::size_t>(win) * n + i) * n + j] = -100.0;
  }
  return Tensor::from({nw, 1, n, n}, std::move(mask));
}

/// Edge-replicating pad of a (channels, rows, cols) buffer.
std::vector<double> pad_grid(const std::vector<double>& src, int ch, int rows, int cols, int prows, int pcols) {
  std::vector<double> out(static_cast<std::size_t>(ch) * prows * pcols);
  for (int c = 0; c < ch; ++c)
    for (int i = 0; i < prows; ++i)
      for (int j = 0; j < pcols; ++j)
        out[(static_cast<std::size_t>(c) * prows + i) * pcols + j] =
            src[(static_cast<std::size_t>(c) * rows + std::min(i, rows - 1)) * cols + std::min(j, cols - 1)];
  return out;
}

CollocatedMap raw_map(const Component& comp, ComponentKind kind, const QuantTable& table) {
  RealPlane p(comp.plane.height, comp.plane.width);
  for (std::size_t i = 0; i < p.size(); ++i) p.data[i] = comp.plane.data[i];
  CollocatedMap m = rearrange(p);
  m.kind = kind;
  m.qm = {table, kind};
  return m;
}

}  // namespace

std::string_view to_string(Ablation a) {
  for (const auto& [k, name] : kAblationNames)
    if (k == a) return name;
  return "unknown";
}

Ablation ablation_from_string(std::string_view s) {
  for (const auto& [k, name] : kAblationNames)
    if (name == s) return k;
  fail(ErrorKind::ConfigInvalid, "unknown ablation " + std::string(s));
}

// ---------------------------------------------------------------- config

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.embed_dim = 32;
  c.window = 2;
  c.num_blocks = 2;
  c.sftbs_per_block = 2;
  return c;
}

void ModelConfig::validate() const {
  if (d_head <= 0 || embed_dim <= 0) fail(ErrorKind::ConfigInvalid, "embed_dim and d_head must be positive");
  if (embed_dim % d_head != 0)
    fail(ErrorKind::ChannelNotDivisibleByHead,
         "embed_dim " + std::to_string(embed_dim) + " is not a multiple of d_head " + std::to_string(d_head));
  if (window < 2 || window % 2 != 0) fail(ErrorKind::ConfigInvalid, "window must be even and >= 2");
  if (num_blocks < 1 || sftbs_per_block < 1) fail(ErrorKind::ConfigInvalid, "need at least one block and SFTB");
  if (mlp_ratio < 1) fail(ErrorKind::ConfigInvalid, "mlp_ratio must be >= 1");
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "embed_dim=" << embed_dim << '\n'
     << "window=" << window << '\n'
     << "num_blocks=" << num_blocks << '\n'
     << "sftbs_per_block=" << sftbs_per_block << '\n'
     << "d_head=" << d_head << '\n'
     << "mlp_ratio=" << mlp_ratio << '\n'
     << "grayscale=" << (grayscale ? "true" : "false") << '\n'
     << "ablation=" << to_string(ablation) << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::ConfigInvalid, "expected key=value: " + line);
    const std::string key = line.substr(0, eq), v = line.substr(eq + 1);
    if (key == "embed_dim") c.embed_dim = parse_int(key, v);
    else if (key == "window") c.window = parse_int(key, v);
    else if (key == "num_blocks") c.num_blocks = parse_int(key, v);
    else if (key == "sftbs_per_block") c.sftbs_per_block = parse_int(key, v);
    else if (key == "d_head") c.d_head = parse_int(key, v);
    else if (key == "mlp_ratio") c.mlp_ratio = parse_int(key, v);
    else if (key == "grayscale") c.grayscale = parse_bool(key, v);
    else if (key == "ablation") c.ablation = ablation_from_string(v);
    else fail(ErrorKind::ConfigInvalid, "unknown model key " + key);
  }
  c.validate();
  return c;
}

std::uint64_t ModelConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_text()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

// ---------------------------------------------------------------- construction

Model::Model(ModelConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const int c = cfg_.embed_dim, cin = input_channels();
  if (cfg_.grayscale) {
    add_conv("head.y", c, cin, 3);
    add_conv("head.conv", c, c, 3);
  } else {
    add_conv("head.y", c, cin, 3);
    add_conv("head.cb", c, cin, 3);
    add_conv("head.cr", c, cin, 3);
    add_tconv("head.cb.up", c, c);
    add_tconv("head.cr.up", c, c);
    add_conv("head.fuse", c, 3 * c, 3);
  }
  add_conv("shallow", c, c, 3);
  for (int b = 0; b < cfg_.num_blocks; ++b) {
    for (int k = 0; k < cfg_.sftbs_per_block; ++k) {
      const std::string p = "blocks." + std::to_string(b) + ".sftb." + std::to_string(k) + ".";
      switch (cfg_.ablation) {
        case Ablation::ParallelSpatial:
          add_wmsa(p + "spatial.");
          add_wmsa(p + "spatial2.");
          break;
        case Ablation::ParallelFrequential:
          add_fmsa(p + "freq.");
          add_fmsa(p + "freq2.");
          break;
        default:
          add_wmsa(p + "spatial.");
          add_fmsa(p + "freq.");
      }
      switch (cfg_.ablation) {
        case Ablation::Successive: break;
        case Ablation::AddFusion: add_conv(p + "fuse", c, c, 3); break;
        case Ablation::ConcatNoConv: add_conv(p + "fuse", c, 2 * c, 1); break;
        default: add_conv(p + "fuse", c, 2 * c, 3);
      }
    }
    add_conv("blocks." + std::to_string(b) + ".conv", c, c, 3);
  }
  add_conv("body.conv", c, c, 3);
  const int outc = cfg_.grayscale ? 64 : 192;
  store_.add("proj.w", {outc, c, 3, 3}, InitKind::Zero);
  store_.add("proj.b", {outc}, InitKind::Zero);

  const int m = cfg_.window;
  for (int i = 0; i < m * m; ++i)
    for (int j = 0; j < m * m; ++j) {
      const int dy = i / m - j / m + m - 1, dx = i % m - j % m + m - 1;
      rel_index_.push_back(dy * (2 * m - 1) + dx);
    }
}

int Model::input_channels() const { return cfg_.ablation == Ablation::ConcatQM ? 128 : 64; }

void Model::add_conv(const std::string& name, int cout, int cin, int k) {
  store_.add(name + ".w", {cout, cin, k, k}, InitKind::Uniform, 1.0 / std::sqrt(static_cast<double>(cin * k * k)));
  store_.add(name + ".b", {cout}, InitKind::Zero);
}

void Model::add_tconv(const std::string& name, int cin, int cout) {
  store_.add(name + ".w", {cin, cout, 2, 2}, InitKind::Uniform, 1.0 / std::sqrt(static_cast<double>(cout * 4)));
  store_.add(name + ".b", {cout}, InitKind::Zero);
}

void Model::add_linear(const std::string& name, int in, int out) {
  store_.add(name + ".w", {in, out}, InitKind::TruncNormal, 0.02);
  store_.add(name + ".b", {out}, InitKind::Zero);
}

void Model::add_norm(const std::string& name, int dim) {
  store_.add(name + ".g", {dim}, InitKind::One);
  store_.add(name + ".b", {dim}, InitKind::Zero);
}

void Model::add_wmsa(const std::string& p) {
  const int c = cfg_.embed_dim, m = cfg_.window;
  add_norm(p + "norm1", c);
  add_linear(p + "qkv", c, 3 * c);
  store_.add(p + "rpb", {(2 * m - 1) * (2 * m - 1), cfg_.heads()}, InitKind::TruncNormal, 0.02);
  add_linear(p + "proj", c, c);
  add_norm(p + "norm2", c);
  add_linear(p + "mlp.fc1", c, c * cfg_.mlp_ratio);
  add_linear(p + "mlp.fc2", c * cfg_.mlp_ratio, c);
}

void Model::add_fmsa(const std::string& p) {
  const int c = cfg_.embed_dim;
  add_norm(p + "norm1", c);
  for (const char* dw : {"pe.dw1", "pe.dw2"}) {
    store_.add(p + dw + ".w", {c, 1, 3, 3}, InitKind::Uniform, 1.0 / 3.0);
    store_.add(p + dw + ".b", {c}, InitKind::Zero);
  }
  add_linear(p + "qkv", c, 3 * c);
  add_linear(p + "proj", c, c);
  add_norm(p + "norm2", c);
  add_linear(p + "mlp.fc1", c, c * cfg_.mlp_ratio);
  add_linear(p + "mlp.fc2", c * cfg_.mlp_ratio, c);
}

// ---------------------------------------------------------------- layers

Tensor Model::conv(const std::string& name, const Tensor& x) const {
  return ad::conv2d(x, store_.get(name + ".w"), store_.get(name + ".b"));
}

Tensor Model::tconv(const std::string& name, const Tensor& x) const {
  return ad::transpose_conv2d(x, store_.get(name + ".w"), store_.get(name + ".b"));
}

Tensor Model::lin(const std::string& name, const Tensor& x) const {
  return ad::linear(x, store_.get(name + ".w"), store_.get(name + ".b"));
}

Tensor Model::norm(const std::string& name, const Tensor& x) const {
  return ad::layer_norm(x, store_.get(name + ".g"), store_.get(name + ".b"));
}

Tensor Model::mlp(const std::string& prefix, const Tensor& x) const {
  return lin(prefix + ".fc2", ad::gelu(lin(prefix + ".fc1", x)));
}

Tensor Model::alignment_head(const std::vector<Tensor>& in) const {
  if (cfg_.grayscale) {
    if (in.size() != 1) fail(ErrorKind::DimMismatch, "grayscale head takes one component");
    return conv("head.conv", conv("head.y", in[0]));
  }
  if (in.size() != 3) fail(ErrorKind::DimMismatch, "colour head takes three components");
  const int h = in[0].dim(1), w = in[0].dim(2);
  Tensor y = conv("head.y", in[0]);
  Tensor cb = conv("head.cb", in[1]);
  Tensor cr = conv("head.cr", in[2]);
  for (int c = 1; c < 3; ++c)
    if (in[c].dim(1) != in[1].dim(1) || in[c].dim(2) != in[1].dim(2))
      fail(ErrorKind::DimMismatch, "chroma maps differ in size");
  if (2 * in[1].dim(1) == h && 2 * in[1].dim(2) == w) {
    cb = tconv("head.cb.up", cb);
    cr = tconv("head.cr.up", cr);
  } else if (in[1].dim(1) != h || in[1].dim(2) != w) {
    fail(ErrorKind::DimMismatch, "chroma map " + ad::shape_str(in[1].shape()) + " does not align with luma " +
                                     ad::shape_str(in[0].shape()));
  }
  return conv("head.fuse", ad::concat({y, cb, cr}, 0));
}

Tensor Model::wmsa(const Tensor& x, const std::string& p, bool shifted, Tensor* attn_out) const {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2), m = cfg_.window, n = m * m;
  const int nh = cfg_.heads(), dh = cfg_.d_head;
  if (c != cfg_.embed_dim) fail(ErrorKind::DimMismatch, "wmsa input has " + std::to_string(c) + " channels");
  if (h % m != 0 || w % m != 0)
    fail(ErrorKind::DimNotDivisibleByWindow,
         std::to_string(h) + "x" + std::to_string(w) + " not divisible by window " + std::to_string(m));
  const Tensor t = ad::permute(x, {1, 2, 0});
  Tensor u = norm(p + "norm1", t);
  if (shifted) u = ad::cyclic_shift(u, -m / 2, -m / 2);
  const Tensor win = ad::window_partition(u, m);
  const int nw = win.dim(0);
  const Tensor qkv = ad::permute(ad::reshape(lin(p + "qkv", win), {nw, n, 3, nh, dh}), {2, 0, 3, 1, 4});
  auto part = [&](int i) { return ad::reshape(ad::slice(qkv, 0, i, 1), {nw, nh, n, dh}); };
  const Tensor q = ad::scale(part(0), 1.0 / std::sqrt(static_cast<double>(dh)));
  Tensor a = ad::matmul(q, ad::transpose_last(part(1)));
  const Tensor bias = ad::permute(ad::reshape(ad::index_select(store_.get(p + "rpb"), rel_index_), {n, n, nh}),
                                  {2, 0, 1});
  a = ad::add(a, bias);
  if (shifted) a = ad::add(a, shift_mask(h, w, m));
  a = ad::softmax(a);
  if (attn_out) *attn_out = a;
  Tensor o = ad::reshape(ad::permute(ad::matmul(a, part(2)), {0, 2, 1, 3}), {nw, n, c});
  o = ad::window_reverse(lin(p + "proj", o), h, w);
  if (shifted) o = ad::cyclic_shift(o, m / 2, m / 2);
  const Tensor x1 = ad::add(t, o);
  const Tensor x2 = ad::add(x1, mlp(p + "mlp", norm(p + "norm2", x1)));
  return ad::permute(x2, {2, 0, 1});
}

Tensor Model::fmsa(const Tensor& x, const std::string& p, Tensor* attn_out) const {
  const int c = x.dim(0), h = x.dim(1), w = x.dim(2), hw = h * w;
  const int dh = cfg_.d_head;
  if (c % dh != 0)
    fail(ErrorKind::ChannelNotDivisibleByHead, std::to_string(c) + " channels, head size " + std::to_string(dh));
  if (c != cfg_.embed_dim) fail(ErrorKind::DimMismatch, "fmsa input has " + std::to_string(c) + " channels");
  const int nh = c / dh;
  const Tensor t = ad::reshape(ad::permute(x, {1, 2, 0}), {hw, c});
  const Tensor u = norm(p + "norm1", t);
  const Tensor uc = ad::reshape(ad::transpose_last(u), {c, h, w});
  const Tensor pe = ad::depthwise_conv2d(
      ad::gelu(ad::depthwise_conv2d(uc, store_.get(p + "pe.dw1.w"), store_.get(p + "pe.dw1.b"))),
      store_.get(p + "pe.dw2.w"), store_.get(p + "pe.dw2.b"));
  const Tensor v_in = ad::add(u, ad::transpose_last(ad::reshape(pe, {c, hw})));
  const Tensor qkv = ad::reshape(ad::transpose_last(lin(p + "qkv", v_in)), {3, nh, dh, hw});
  auto part = [&](int i) { return ad::reshape(ad::slice(qkv, 0, i, 1), {nh, dh, hw}); };
  Tensor a = ad::matmul(part(0), ad::transpose_last(part(1)));
  a = ad::softmax(ad::scale(a, 1.0 / std::sqrt(static_cast<double>(hw))));
  if (attn_out) *attn_out = a;
  const Tensor o = lin(p + "proj", ad::transpose_last(ad::reshape(ad::matmul(a, part(2)), {c, hw})));
  const Tensor x1 = ad::add(t, o);
  const Tensor x2 = ad::add(x1, mlp(p + "mlp", norm(p + "norm2", x1)));
  return ad::reshape(ad::transpose_last(x2), {c, h, w});
}

Tensor Model::sftb(const Tensor& x, int block, int index) const {
  const std::string p = "blocks." + std::to_string(block) + ".sftb." + std::to_string(index) + ".";
  const bool shifted = index % 2 == 1;
  switch (cfg_.ablation) {
    case Ablation::Successive:
      return fmsa(wmsa(x, p + "spatial.", shifted), p + "freq.");
    case Ablation::ParallelSpatial: {
      const Tensor a = ad::add(wmsa(x, p + "spatial.", shifted), x);
      const Tensor b = ad::add(wmsa(x, p + "spatial2.", shifted), x);
      return conv(p + "fuse", ad::concat({a, b}, 0));
    }
    case Ablation::ParallelFrequential: {
      const Tensor a = ad::add(fmsa(x, p + "freq."), x);
      const Tensor b = ad::add(fmsa(x, p + "freq2."), x);
      return conv(p + "fuse", ad::concat({a, b}, 0));
    }
    default: {
      const Tensor a = ad::add(wmsa(x, p + "spatial.", shifted), x);
      const Tensor b = ad::add(fmsa(x, p + "freq."), x);
      if (cfg_.ablation == Ablation::AddFusion) return conv(p + "fuse", ad::add(a, b));
      return conv(p + "fuse", ad::concat({a, b}, 0));
    }
  }
}

Tensor Model::dct_block(const Tensor& x, int block) const {
  Tensor y = x;
  for (int k = 0; k < cfg_.sftbs_per_block; ++k) y = sftb(y, block, k);
  return ad::add(conv("blocks." + std::to_string(block) + ".conv", y), x);
}

std::vector<Tensor> Model::forward(const QuantizedImage& q) const {
  validate(q);
  if (cfg_.grayscale != q.is_gray())
    fail(ErrorKind::ConfigMismatch, cfg_.grayscale ? "grayscale model given a colour image"
                                                   : "colour model given a grayscale image");
  const bool s420 = q.subsampling == Subsampling::S420 && !q.is_gray();
  const bool raw_in = cfg_.ablation == Ablation::NoQM || cfg_.ablation == Ablation::ConcatQM;

  std::vector<CollocatedMap> embedded = collocated_maps(q);
  std::vector<CollocatedMap> raw;
  for (std::size_t c = 0; c < q.components.size(); ++c)
    raw.push_back(raw_map(q.components[c], embedded[c].kind, q.table_for(c)));

  const int rows = embedded[0].rows, cols = embedded[0].cols, m = cfg_.window;
  const int unit = s420 ? std::lcm(m, 2) : m;
  const int prows = (rows + unit - 1) / unit * unit, pcols = (cols + unit - 1) / unit * unit;

  std::vector<Tensor> inputs;
  for (std::size_t c = 0; c < embedded.size(); ++c) {
    const CollocatedMap& src = raw_in ? raw[c] : embedded[c];
    const bool sub = s420 && c > 0;
    const int pr = sub ? prows / 2 : prows, pc = sub ? pcols / 2 : pcols;
    std::vector<double> v = pad_grid(src.data, 64, src.rows, src.cols, pr, pc);
    for (double& e : v) e /= kCoefScale;
    int ch = 64;
    if (cfg_.ablation == Ablation::ConcatQM) {
      const std::size_t plane = static_cast<std::size_t>(pr) * pc;
      v.resize(v.size() + 64 * plane);
      for (int k = 0; k < 64; ++k)
        std::fill_n(v.begin() + static_cast<long>((64 + k) * plane), plane, src.qm.values[k] / 255.0);
      ch = 128;
    }
    inputs.push_back(Tensor::from({ch, pr, pc}, std::move(v)));
  }

  const Tensor f0 = conv("shallow", alignment_head(inputs));
  Tensor x = f0;
  for (int b = 0; b < cfg_.num_blocks; ++b) x = dct_block(x, b);
  Tensor proj = conv("proj", ad::add(conv("body.conv", x), f0));
  if (prows != rows) proj = ad::slice(proj, 1, 0, rows);
  if (pcols != cols) proj = ad::slice(proj, 2, 0, cols);

  std::vector<Tensor> out;
  for (std::size_t c = 0; c < embedded.size(); ++c) {
    const CollocatedMap& s = cfg_.ablation == Ablation::NoQM ? raw[c] : embedded[c];
    const Tensor skip = map_tensor(s420 && c > 0 ? chroma_dct_upsample(s, rows, cols) : s);
    out.push_back(ad::add(skip, ad::scale(ad::slice(proj, 0, 64 * static_cast<int>(c), 64), kCoefScale)));
  }
  return out;
}

std::size_t param_count(const Model& model) { return model.store().scalar_count(); }

// ---------------------------------------------------------------- conversions

Tensor map_tensor(const CollocatedMap& map) { return Tensor::from({64, map.rows, map.cols}, map.data); }

CollocatedMap tensor_map(const Tensor& t, ComponentKind kind) {
  if (t.rank() != 3 || t.dim(0) != 64) fail(ErrorKind::ShapeMismatch, "expected (64, rows, cols)");
  CollocatedMap m;
  m.rows = t.dim(1);
  m.cols = t.dim(2);
  m.data.assign(t.values().begin(), t.values().end());
  m.kind = kind;
  return m;
}

PixelImage maps_to_image(const std::vector<CollocatedMap>& maps, int height, int width) {
  if (maps.size() != 1 && maps.size() != 3) fail(ErrorKind::DimMismatch, "expected 1 or 3 coefficient maps");
  PixelImage img;
  img.colorspace = maps.size() == 1 ? Colorspace::Gray : Colorspace::YCbCr;
  for (const auto& m : maps) {
    if (8 * m.rows < height || 8 * m.cols < width) fail(ErrorKind::DimMismatch, "map smaller than the image");
    const RealPlane full = plane_idct(inverse_rearrange(m));
    RealPlane p(height, width);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) p(y, x) = std::clamp(full(y, x), 0.0, 255.0);
    img.planes.push_back(std::move(p));
  }
  return img.colorspace == Colorspace::Gray ? img : ycbcr_to_rgb(img);
}

PixelImage recover(const Model& model, const QuantizedImage& q) {
  const std::vector<Tensor> out = model.forward(q);
  std::vector<CollocatedMap> maps;
  for (std::size_t c = 0; c < out.size(); ++c)
    maps.push_back(tensor_map(out[c], c == 0 ? ComponentKind::Luma : ComponentKind::Chroma));
  return maps_to_image(maps, q.height, q.width);
}

}  // namespace dctx
