#include "dctx/train.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dctx/error.hpp"

namespace dctx {

using ad::Tensor;

namespace {

double parse_real(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') fail(ErrorKind::ConfigInvalid, "bad number for " + std::string(key) + ": " + s);
  return d;
}

long long parse_integer(std::string_view key, std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  const long long n = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || *end != '\0') fail(ErrorKind::ConfigInvalid, "bad integer for " + std::string(key) + ": " + s);
  return n;
}

PixelImage crop(const PixelImage& img, int y0, int x0, int size) {
  PixelImage out;
  out.colorspace = img.colorspace;
  for (const auto& p : img.planes) {
    RealPlane c(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) c(y, x) = p(y0 + y, x0 + x);
    out.planes.push_back(std::move(c));
  }
  return out;
}

PixelImage flip_horizontal(const PixelImage& img) {
  PixelImage out = img;
  for (std::size_t c = 0; c < img.planes.size(); ++c) {
    const RealPlane& p = img.planes[c];
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x) out.planes[c](y, x) = p(y, p.width - 1 - x);
  }
  return out;
}

/// Quarter turn counter-clockwise.
PixelImage rot90(const PixelImage& img) {
  PixelImage out;
  out.colorspace = img.colorspace;
  for (const auto& p : img.planes) {
    RealPlane r(p.width, p.height);
    for (int y = 0; y < r.height; ++y)
      for (int x = 0; x < r.width; ++x) r(y, x) = p(x, p.width - 1 - y);
    out.planes.push_back(std::move(r));
  }
  return out;
}

/// pixel index 8x + y  <-  coefficient index 8u + v
const std::vector<double>& idct_matrix() {
  static const std::vector<double> m = [] {
    const auto& b = dct_basis();
    std::vector<double> a(64 * 64);
    for (int x = 0; x < 8; ++x)
      for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) a[(8 * x + y) * 64 + 8 * u + v] = b[u][x] * b[v][y];
    return a;
  }();
  return m;
}

// ---- little-endian binary IO

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

void put_str(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_floats(std::ostream& os, const std::vector<float>& v) {
  for (float f : v) put_u32(os, std::bit_cast<std::uint32_t>(f));
}

void get_bytes(std::istream& is, char* dst, std::size_t n) {
  is.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) fail(ErrorKind::TruncatedFile, "checkpoint ends early");
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  get_bytes(is, reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  return lo | static_cast<std::uint64_t>(get_u32(is)) << 32;
}

std::string get_str(std::istream& is) {
  const std::uint32_t n = get_u32(is);
  if (n > (1u << 24)) fail(ErrorKind::TruncatedFile, "implausible string length");
  std::string s(n, '\0');
  get_bytes(is, s.data(), n);
  return s;
}

std::vector<float> get_floats(std::istream& is, std::size_t n) {
  std::vector<float> v(n);
  for (float& f : v) f = std::bit_cast<float>(get_u32(is));
  return v;
}

std::vector<float> to_floats(std::span<const double> v) {
  return std::vector<float>(v.begin(), v.end());
}

constexpr std::uint8_t kDtypeF32 = 1;

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (steps < 1 || batch < 1) fail(ErrorKind::ConfigInvalid, "steps and batch must be positive");
  if (crop < 16 || crop % 16 != 0) fail(ErrorKind::ConfigInvalid, "crop must be a positive multiple of 16");
  if (qf_min < 1 || qf_max > 100 || qf_min > qf_max) fail(ErrorKind::ConfigInvalid, "qf range must lie in [1, 100]");
  if (!(lr_end < lr_start && lr_start <= lr_peak)) fail(ErrorKind::ConfigInvalid, "need lr_end < lr_start <= lr_peak");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) fail(ErrorKind::ConfigInvalid, "warmup_fraction in [0, 1)");
  if (clip <= 0.0 || epsilon <= 0.0 || lambda < 0.0) fail(ErrorKind::ConfigInvalid, "clip, epsilon, lambda");
}

bool TrainConfig::set(std::string_view key, std::string_view v) {
  if (key == "steps") steps = static_cast<int>(parse_integer(key, v));
  else if (key == "batch") batch = static_cast<int>(parse_integer(key, v));
  else if (key == "crop") crop = static_cast<int>(parse_integer(key, v));
  else if (key == "qf_min") qf_min = static_cast<int>(parse_integer(key, v));
  else if (key == "qf_max") qf_max = static_cast<int>(parse_integer(key, v));
  else if (key == "lr_start") lr_start = parse_real(key, v);
  else if (key == "lr_peak") lr_peak = parse_real(key, v);
  else if (key == "lr_end") lr_end = parse_real(key, v);
  else if (key == "warmup_fraction") warmup_fraction = parse_real(key, v);
  else if (key == "clip") clip = parse_real(key, v);
  else if (key == "lambda") lambda = parse_real(key, v);
  else if (key == "epsilon") epsilon = parse_real(key, v);
  else if (key == "beta1") beta1 = parse_real(key, v);
  else if (key == "beta2") beta2 = parse_real(key, v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_integer(key, v));
  else if (key == "double_jpeg") {
    if (v == "true" || v == "1") double_jpeg = true;
    else if (v == "false" || v == "0") double_jpeg = false;
    else fail(ErrorKind::ConfigInvalid, "bad boolean for double_jpeg");
  } else if (key == "subsampling") {
    if (v == "420") subsampling = Subsampling::S420;
    else if (v == "444") subsampling = Subsampling::S444;
    else fail(ErrorKind::ConfigInvalid, "subsampling must be 420 or 444");
  } else {
    return false;
  }
  return true;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "steps=" << steps << "\nbatch=" << batch << "\ncrop=" << crop << "\nqf_min=" << qf_min
     << "\nqf_max=" << qf_max << "\nlr_start=" << lr_start << "\nlr_peak=" << lr_peak << "\nlr_end=" << lr_end
     << "\nwarmup_fraction=" << warmup_fraction << "\nclip=" << clip << "\nlambda=" << lambda
     << "\nepsilon=" << epsilon << "\nbeta1=" << beta1 << "\nbeta2=" << beta2 << "\nseed=" << seed
     << "\ndouble_jpeg=" << (double_jpeg ? "true" : "false")
     << "\nsubsampling=" << (subsampling == Subsampling::S420 ? "420" : "444") << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_text(std::string_view text) {
  TrainConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::ConfigInvalid, "expected key=value: " + line);
    if (!c.set(line.substr(0, eq), line.substr(eq + 1)))
      fail(ErrorKind::ConfigInvalid, "unknown training key " + line.substr(0, eq));
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- schedule and losses

double lr_schedule(long step, const TrainConfig& cfg) {
  if (step < 0 || step >= cfg.steps)
    fail(ErrorKind::StepOutOfRange, "step " + std::to_string(step) + " outside [0, " + std::to_string(cfg.steps) + ")");
  const double warm = cfg.warmup_fraction * cfg.steps;
  const double last = cfg.steps - 1;
  const double s = static_cast<double>(step);
  if (s < warm) {
    const double a = s / warm;
    return (1.0 - a) * cfg.lr_start + a * cfg.lr_peak;
  }
  if (last <= warm) return step == 0 ? cfg.lr_start : cfg.lr_peak;
  const double t = (s - warm) / (last - warm);
  const double c = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
  return c * cfg.lr_peak + (1.0 - c) * cfg.lr_end;
}

Tensor charbonnier_loss(const Tensor& x, const Tensor& xhat, double eps) {
  if (x.shape() != xhat.shape())
    fail(ErrorKind::ShapeMismatch, ad::shape_str(x.shape()) + " vs " + ad::shape_str(xhat.shape()));
  const Tensor d = ad::sub(x, xhat);
  return ad::mean(ad::sqrt(ad::add_scalar(ad::mul(d, d), eps * eps)));
}

Tensor freq_l1_loss(const Tensor& x, const Tensor& xhat) {
  if (x.shape() != xhat.shape())
    fail(ErrorKind::ShapeMismatch, ad::shape_str(x.shape()) + " vs " + ad::shape_str(xhat.shape()));
  return ad::mean(ad::abs(ad::sub(x, xhat)));
}

Tensor reconstruct(const std::vector<Tensor>& maps) {
  if (maps.size() != 1 && maps.size() != 3) fail(ErrorKind::ShapeMismatch, "expected 1 or 3 coefficient maps");
  static const Tensor basis = Tensor::from({64, 64}, idct_matrix());
  const int h = maps[0].dim(1), w = maps[0].dim(2);
  std::vector<Tensor> planes;
  for (const auto& m : maps) {
    if (m.shape() != ad::Shape{64, h, w}) fail(ErrorKind::ShapeMismatch, "maps must share (64, h, w)");
    const Tensor px = ad::matmul(basis, ad::reshape(m, {64, h * w}));
    planes.push_back(ad::reshape(ad::permute(ad::reshape(px, {8, 8, h, w}), {2, 0, 3, 1}), {1, 8 * h * 8 * w}));
  }
  Tensor centred = planes.size() == 1 ? planes[0] : ad::concat(planes, 0);
  if (planes.size() == 3) {
    static const Tensor to_rgb = Tensor::from(
        {3, 3}, {1.0, 0.0, 1.402, 1.0, -0.344136286, -0.714136286, 1.0, 1.772, 0.0});
    centred = ad::matmul(to_rgb, centred);
  }
  const int ch = static_cast<int>(planes.size());
  return ad::reshape(ad::scale(ad::add_scalar(centred, 128.0), 1.0 / 255.0), {ch, 8 * h, 8 * w});
}

Tensor dual_loss(const std::vector<Tensor>& target, const std::vector<Tensor>& pred, double lambda, double eps) {
  if (target.size() != pred.size()) fail(ErrorKind::ShapeMismatch, "component count differs");
  const Tensor lf = freq_l1_loss(ad::concat(target, 0), ad::concat(pred, 0));
  if (lambda == 0.0) return lf;
  return ad::add(lf, ad::scale(charbonnier_loss(reconstruct(target), reconstruct(pred), eps), lambda));
}

// ---------------------------------------------------------------- data

std::vector<CollocatedMap> lossless_maps(const PixelImage& img) {
  const bool gray = img.channels() == 1;
  const PixelImage ycc = gray || img.colorspace == Colorspace::YCbCr ? img : rgb_to_ycbcr(img);
  const int unit = gray ? 8 : 16;
  const int h = (img.height() + unit - 1) / unit * unit, w = (img.width() + unit - 1) / unit * unit;
  std::vector<CollocatedMap> maps;
  for (std::size_t c = 0; c < ycc.planes.size(); ++c) {
    CollocatedMap m = rearrange(plane_dct(pad_replicate(ycc.planes[c], h, w)));
    m.kind = c == 0 ? ComponentKind::Luma : ComponentKind::Chroma;
    maps.push_back(std::move(m));
  }
  return maps;
}

std::vector<Sample> make_batch(const std::vector<PixelImage>& corpus, const TrainConfig& cfg, Rng& rng) {
  if (corpus.empty()) fail(ErrorKind::EmptyInput, "empty training corpus");
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].height() < cfg.crop || corpus[i].width() < cfg.crop)
      fail(ErrorKind::ImageTooSmall, "corpus image " + std::to_string(i) + " is smaller than crop " +
                                         std::to_string(cfg.crop));
  std::vector<Sample> batch;
  for (int b = 0; b < cfg.batch; ++b) {
    const PixelImage& src = corpus[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(corpus.size()) - 1))];
    const int y0 = rng.uniform_int(0, src.height() - cfg.crop);
    const int x0 = rng.uniform_int(0, src.width() - cfg.crop);
    PixelImage patch = crop(src, y0, x0, cfg.crop);
    if (rng.uniform_int(0, 1) == 1) patch = flip_horizontal(patch);
    for (int r = rng.uniform_int(0, 3); r > 0; --r) patch = rot90(patch);

    Sample s;
    if (cfg.double_jpeg) {
      const int qf1 = rng.uniform_int(cfg.qf_min, cfg.qf_max);
      const int qf2 = rng.uniform_int(cfg.qf_min, cfg.qf_max);
      const int dx = 4 * rng.uniform_int(0, 1), dy = 4 * rng.uniform_int(0, 1);
      s.input = degrade_double(patch, qf1, qf2, {dx, dy}, cfg.subsampling);
      s.target = lossless_maps(translate(patch, dx, dy));
      s.qf = qf2;
    } else {
      s.qf = rng.uniform_int(cfg.qf_min, cfg.qf_max);
      s.input = compress(patch, s.qf, cfg.subsampling);
      s.target = lossless_maps(patch);
    }
    batch.push_back(std::move(s));
  }
  return batch;
}

Tensor batch_loss(const Model& model, const std::vector<Sample>& batch, const TrainConfig& cfg) {
  if (batch.empty()) fail(ErrorKind::EmptyInput, "empty batch");
  Tensor total;
  for (const auto& s : batch) {
    std::vector<Tensor> target;
    for (const auto& m : s.target) target.push_back(map_tensor(m));
    const Tensor l = dual_loss(target, model.forward(s.input), cfg.lambda, cfg.epsilon);
    total = total.defined() ? ad::add(total, l) : l;
  }
  return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

// ---------------------------------------------------------------- training

Trainer::Trainer(Model& model, TrainConfig cfg, std::vector<PixelImage> corpus)
    : model_(model), cfg_(cfg), rng_(cfg.seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  for (auto& img : corpus) {
    if (model_.config().grayscale) img = to_gray(img);
  }
  corpus_ = std::move(corpus);
}

StepRecord Trainer::step() {
  StepRecord rec;
  rec.step = step_;
  rec.lr = lr_schedule(step_, cfg_);
  const std::vector<Sample> batch = make_batch(corpus_, cfg_, rng_);
  auto& params = model_.params();
  model_.store().zero_grad();
  const Tensor loss = batch_loss(model_, batch, cfg_);
  rec.loss = loss.item();
  if (!std::isfinite(rec.loss))
    fail(ErrorKind::NonFiniteLoss, "loss is " + std::to_string(rec.loss) + " at step " + std::to_string(step_));
  ad::backward(loss);
  rec.grad_norm = ad::clip_grad_global_norm(params, cfg_.clip);
  ad::adam_step(params, opt_, rec.lr, {cfg_.beta1, cfg_.beta2, 1e-8});
  // keep every stored quantity representable in the f32 checkpoint
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (double& w : params[i].tensor.mutable_values()) w = static_cast<float>(w);
    for (double& m : opt_.m[i]) m = static_cast<float>(m);
    for (double& v : opt_.v[i]) v = static_cast<float>(v);
  }
  ++step_;
  return rec;
}

std::vector<StepRecord> Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  std::vector<StepRecord> trace;
  while (step_ < cfg_.steps) {
    trace.push_back(step());
    if (on_step) on_step(trace.back());
  }
  return trace;
}

void Trainer::save(std::ostream& os) const {
  save_checkpoint(os, make_checkpoint(model_, &opt_, step_, &rng_, cfg_.to_text()));
}

void Trainer::save(const std::string& path) const {
  save_checkpoint(path, make_checkpoint(model_, &opt_, step_, &rng_, cfg_.to_text()));
}

void Trainer::resume(std::istream& is) {
  const Checkpoint ck = load_checkpoint(is, &model_.config());
  apply_checkpoint(ck, model_);
  opt_ = {};
  opt_.step = ck.adam_step;
  for (const auto& m : ck.adam_m) opt_.m.emplace_back(m.begin(), m.end());
  for (const auto& v : ck.adam_v) opt_.v.emplace_back(v.begin(), v.end());
  step_ = ck.step;
  if (!ck.rng_state.empty()) rng_.set_state(ck.rng_state);
}

void Trainer::resume(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  resume(is);
}

std::vector<StepRecord> train_loop(Model& model, const TrainConfig& cfg, const std::vector<PixelImage>& corpus) {
  Trainer t(model, cfg, corpus);
  return t.run();
}

// ---------------------------------------------------------------- checkpoint

Checkpoint make_checkpoint(const Model& model, const ad::AdamState* opt, long step, const Rng* rng,
                           const std::string& train_text) {
  Checkpoint ck;
  ck.model = model.config();
  ck.train_text = train_text;
  for (const auto& p : model.store().params())
    ck.tensors.push_back({p.name, p.tensor.shape(), to_floats(p.tensor.values())});
  if (opt) {
    ck.adam_step = opt->step;
    for (const auto& m : opt->m) ck.adam_m.push_back(to_floats(m));
    for (const auto& v : opt->v) ck.adam_v.push_back(to_floats(v));
  }
  ck.step = step;
  if (rng) ck.rng_state = rng->state();
  return ck;
}

void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
  os.write("DCTX", 4);
  put_u32(os, kCheckpointVersion);
  put_str(os, ck.model.to_text());
  put_u64(os, ck.model.hash());
  put_str(os, ck.train_text);
  put_u32(os, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    put_str(os, t.name);
    os.put(static_cast<char>(kDtypeF32));
    put_u32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(os, static_cast<std::uint32_t>(d));
    put_floats(os, t.values);
  }
  const bool has_opt = !ck.adam_m.empty();
  os.put(has_opt ? 1 : 0);
  if (has_opt) {
    put_u64(os, static_cast<std::uint64_t>(ck.adam_step));
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
      put_floats(os, ck.adam_m[i]);
      put_floats(os, ck.adam_v[i]);
    }
  }
  put_u64(os, static_cast<std::uint64_t>(ck.step));
  put_str(os, ck.rng_state);
  if (!os) fail(ErrorKind::Io, "checkpoint write failed");
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot write " + path);
  save_checkpoint(os, ck);
}

Checkpoint load_checkpoint(std::istream& is, const ModelConfig* expected) {
  char magic[4];
  is.read(magic, 4);
  const auto got = static_cast<std::size_t>(is.gcount());
  if (std::memcmp(magic, "DCTX", got) != 0) fail(ErrorKind::BadMagic, "not a DCTX checkpoint");
  if (got != 4) fail(ErrorKind::TruncatedFile, "checkpoint ends inside the magic");
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    fail(ErrorKind::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                         std::to_string(kCheckpointVersion));
  Checkpoint ck;
  ck.model = ModelConfig::from_text(get_str(is));
  const std::uint64_t hash = get_u64(is);
  if (hash != ck.model.hash()) fail(ErrorKind::TruncatedFile, "config hash does not match the stored config");
  if (expected && expected->hash() != hash)
    fail(ErrorKind::ConfigMismatch, "checkpoint was written for a different model config");
  ck.train_text = get_str(is);
  const std::uint32_t count = get_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = get_str(is);
    char tag = 0;
    get_bytes(is, &tag, 1);
    if (tag != kDtypeF32) fail(ErrorKind::TruncatedFile, "unknown dtype tag for " + t.name);
    const std::uint32_t rank = get_u32(is);
    if (rank > 8) fail(ErrorKind::TruncatedFile, "implausible rank for " + t.name);
    for (std::uint32_t r = 0; r < rank; ++r) t.shape.push_back(static_cast<int>(get_u32(is)));
    t.values = get_floats(is, ad::numel(t.shape));
    ck.tensors.push_back(std::move(t));
  }
  char has_opt = 0;
  get_bytes(is, &has_opt, 1);
  if (has_opt) {
    ck.adam_step = static_cast<long>(get_u64(is));
    for (const auto& t : ck.tensors) {
      ck.adam_m.push_back(get_floats(is, t.values.size()));
      ck.adam_v.push_back(get_floats(is, t.values.size()));
    }
  }
  ck.step = static_cast<long>(get_u64(is));
  ck.rng_state = get_str(is);
  return ck;
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::Io, "cannot open " + path);
  return load_checkpoint(is, expected);
}

void apply_checkpoint(const Checkpoint& ck, Model& model) {
  if (!(ck.model == model.config())) fail(ErrorKind::ConfigMismatch, "checkpoint config differs from the model");
  auto& params = model.params();
  if (params.size() != ck.tensors.size()) fail(ErrorKind::ConfigMismatch, "parameter count differs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const NamedTensor& t = ck.tensors[i];
    if (t.name != params[i].name || t.shape != params[i].tensor.shape())
      fail(ErrorKind::ConfigMismatch, "tensor " + t.name + " does not match " + params[i].name);
    auto dst = params[i].tensor.mutable_values();
    std::copy(t.values.begin(), t.values.end(), dst.begin());
  }
}

}  // namespace dctx
