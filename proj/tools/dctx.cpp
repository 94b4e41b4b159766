// dctx: degrade, decode, recover, train, eval, inspect and synth commands.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "dctx/blockdct.hpp"
#include "dctx/collocate.hpp"
#include "dctx/corpus.hpp"
#include "dctx/error.hpp"
#include "dctx/jfif.hpp"
#include "dctx/metrics.hpp"
#include "dctx/net.hpp"
#include "dctx/pnm.hpp"
#include "dctx/train.hpp"

namespace fs = std::filesystem;
using namespace dctx;

namespace {

constexpr const char* kVersion = "0.1.0";

enum Exit { kOk = 0, kUsage = 2, kFormat = 3, kNumeric = 4 };

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigInvalid:
    case ErrorKind::QfOutOfRange:
    case ErrorKind::ShiftOutOfRange:
    case ErrorKind::StepOutOfRange:
      return kUsage;
    case ErrorKind::NonFiniteLoss:
      return kNumeric;
    default:
      return kFormat;
  }
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(f), {}};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(p, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot write " + p.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

QuantizedImage read_jpeg(const fs::path& p) {
  const auto bytes = read_bytes(p);
  return parse_jpeg(bytes);
}

bool is_jpeg(const fs::path& p) {
  auto e = p.extension().string();
  for (auto& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ".jpg" || e == ".jpeg";
}

PixelImage read_any(const fs::path& p) { return is_jpeg(p) ? decompress(read_jpeg(p)) : read_pnm(p); }

Subsampling parse_subsampling(const std::string& s) {
  if (s == "420") return Subsampling::S420;
  if (s == "444") return Subsampling::S444;
  fail(ErrorKind::ConfigInvalid, "subsampling must be 420 or 444, got " + s);
}

struct Manifest {
  nlohmann::ordered_json j;
  explicit Manifest(const std::string& command) {
    j["command"] = command;
    j["tool_version"] = kVersion;
    j["config"] = nlohmann::ordered_json::object();
    j["inputs"] = nlohmann::ordered_json::array();
    j["outputs"] = nlohmann::ordered_json::array();
  }
  void write(const fs::path& output) const {
    std::ofstream f(output.string() + ".manifest.json");
    f << j.dump(2) << '\n';
  }
};

/// Parses key=value lines (blank lines and '#' comments allowed).
std::vector<std::pair<std::string, std::string>> read_kv(const fs::path& p) {
  std::ifstream f(p);
  if (!f) fail(ErrorKind::Io, "cannot open config " + p.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(f, line)) {
    if (auto h = line.find('#'); h != std::string::npos) line.resize(h);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string{} : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorKind::ConfigInvalid, "expected key=value: " + line);
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

/// Splits key=value pairs between the model and the training config.
void resolve_configs(const std::vector<std::pair<std::string, std::string>>& kv, ModelConfig& model,
                     TrainConfig& train) {
  std::string model_text = model.to_text();
  for (const auto& [k, v] : kv)
    if (!train.set(k, v)) model_text += k + "=" + v + "\n";
  model = ModelConfig::from_text(model_text);
}

// ---------------------------------------------------------------- commands

struct DegradeArgs {
  std::string in, out, subsampling = "420", shift;
  int qf = 0, qf1 = 0, qf2 = 0;
};

int cmd_degrade(const DegradeArgs& a) {
  const PixelImage img = read_pnm(a.in);
  const Subsampling s = parse_subsampling(a.subsampling);
  Manifest m("degrade");
  QuantizedImage q;
  if (a.qf1 > 0 || a.qf2 > 0) {
    if (a.qf1 <= 0 || a.qf2 <= 0) fail(ErrorKind::ConfigInvalid, "--qf1 and --qf2 go together");
    int dx = 0, dy = 0;
    if (!a.shift.empty() && std::sscanf(a.shift.c_str(), "%d,%d", &dx, &dy) != 2)
      fail(ErrorKind::ConfigInvalid, "--shift expects dx,dy");
    q = degrade_double(img, a.qf1, a.qf2, {dx, dy}, s);
    m.j["config"]["qf1"] = a.qf1;
    m.j["config"]["qf2"] = a.qf2;
    m.j["config"]["shift"] = {dx, dy};
  } else {
    if (a.qf == 0) fail(ErrorKind::ConfigInvalid, "give --qf or --qf1/--qf2");
    q = compress(img, a.qf, s);
    m.j["config"]["qf"] = a.qf;
  }
  write_bytes(a.out, encode_jpeg(q));
  const double sparsity = 100.0 * zero_fraction(q);
  std::cout << "sparsity " << std::fixed << std::setprecision(2) << sparsity << "%\n";
  m.j["config"]["subsampling"] = a.subsampling;
  m.j["inputs"].push_back(a.in);
  m.j["outputs"].push_back(a.out);
  m.j["sparsity_percent"] = sparsity;
  m.write(a.out);
  return kOk;
}

int cmd_decode(const std::string& in, const std::string& out) {
  write_pnm(out, decompress(read_jpeg(in)));
  Manifest m("decode");
  m.j["inputs"].push_back(in);
  m.j["outputs"].push_back(out);
  m.write(out);
  return kOk;
}

void dump_maps(const fs::path& dir, const CollocatedMap& map) {
  fs::create_directories(dir);
  for (int k = 0; k < 64; ++k) {
    RealPlane p(map.rows, map.cols);
    for (int i = 0; i < map.rows; ++i)
      for (int j = 0; j < map.cols; ++j) p(i, j) = map.at(k, i, j);
    std::ostringstream name;
    name << "coef_" << k / 8 << k % 8 << ".pgm";
    write_pgm_normalized(dir / name.str(), p);
  }
}

int cmd_recover(const std::string& in, const std::string& ckpt_path, const std::string& out,
                const std::string& dump_dir) {
  const QuantizedImage q = read_jpeg(in);
  const Checkpoint ck = load_checkpoint(ckpt_path);
  Model model(ck.model);
  apply_checkpoint(ck, model);
  const auto maps_t = model.forward(q);
  std::vector<CollocatedMap> maps;
  for (std::size_t c = 0; c < maps_t.size(); ++c)
    maps.push_back(tensor_map(maps_t[c], c == 0 ? ComponentKind::Luma : ComponentKind::Chroma));
  write_pnm(out, maps_to_image(maps, q.height, q.width));
  if (!dump_dir.empty()) dump_maps(dump_dir, maps[0]);
  Manifest m("recover");
  m.j["config"]["model"] = ck.model.to_text();
  m.j["config"]["checkpoint_step"] = ck.step;
  m.j["inputs"] = {in, ckpt_path};
  m.j["outputs"].push_back(out);
  if (!dump_dir.empty()) m.j["outputs"].push_back(dump_dir);
  m.write(out);
  return kOk;
}

struct TrainArgs {
  std::string corpus, config, out, resume;
  std::vector<std::string> sets;
  bool double_jpeg = false, toy = false;
  long seed = -1;
  int steps = 0;
  long stop_at = -1;
  int synth = 0;
};

int cmd_train(const TrainArgs& a) {
  ModelConfig mc = a.toy ? ModelConfig::toy() : ModelConfig{};
  TrainConfig tc;
  std::vector<std::pair<std::string, std::string>> kv;
  if (!a.config.empty()) kv = read_kv(a.config);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) fail(ErrorKind::ConfigInvalid, "--set expects key=value: " + s);
    kv.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  resolve_configs(kv, mc, tc);
  if (a.steps > 0) tc.steps = a.steps;
  if (a.seed >= 0) tc.seed = static_cast<std::uint64_t>(a.seed);
  if (a.double_jpeg) tc.double_jpeg = true;
  tc.validate();

  std::vector<PixelImage> corpus;
  if (!a.corpus.empty()) corpus = load_corpus(a.corpus);
  else if (a.synth > 0) corpus = synth_corpus(a.synth, 96, 96, tc.seed);
  else fail(ErrorKind::ConfigInvalid, "give --corpus dir or --synth N");

  Model model(mc);
  Rng init(tc.seed);
  model.initialize(init);
  Trainer trainer(model, tc, std::move(corpus));
  if (!a.resume.empty()) trainer.resume(a.resume);

  const std::string trace_path = a.out + ".trace.csv";
  std::ofstream trace(trace_path, a.resume.empty() ? std::ios::trunc : std::ios::app);
  if (a.resume.empty()) trace << "step,loss,lr,grad_norm\n";
  const long stop = a.stop_at >= 0 ? std::min<long>(a.stop_at, tc.steps) : tc.steps;
  while (trainer.current_step() < stop) {
    const StepRecord r = trainer.step();
    trace << r.step << ',' << std::setprecision(9) << r.loss << ',' << r.lr << ',' << r.grad_norm << '\n';
    if ((r.step + 1) % 100 == 0 || r.step + 1 == tc.steps)
      std::cerr << "step " << r.step + 1 << "/" << tc.steps << " loss " << r.loss << '\n';
  }
  trainer.save(a.out);

  Manifest m("train");
  m.j["config"]["model"] = mc.to_text();
  m.j["config"]["train"] = tc.to_text();
  m.j["seed"] = tc.seed;
  m.j["inputs"].push_back(a.corpus.empty() ? "synth:" + std::to_string(a.synth) : a.corpus);
  if (!a.resume.empty()) m.j["inputs"].push_back(a.resume);
  m.j["outputs"] = {a.out, trace_path};
  m.write(a.out);
  return kOk;
}

int cmd_init(const std::string& config, bool toy, long seed, const std::string& out) {
  ModelConfig mc = toy ? ModelConfig::toy() : ModelConfig{};
  TrainConfig tc;
  if (!config.empty()) resolve_configs(read_kv(config), mc, tc);
  Model model(mc);
  Rng rng(static_cast<std::uint64_t>(seed));
  model.initialize(rng);
  save_checkpoint(out, make_checkpoint(model, nullptr, 0, nullptr, tc.to_text()));
  Manifest m("init");
  m.j["config"]["model"] = mc.to_text();
  m.j["seed"] = seed;
  m.j["outputs"].push_back(out);
  m.write(out);
  std::cout << "parameters " << param_count(model) << '\n';
  return kOk;
}

struct EvalArgs {
  std::string pairs, gt_dir, test_dir, out, method = "jpeg", channel = "rgb";
  int qf = 0;
  bool dct = false;
};

CollocatedMap luma_coefficients(const fs::path& p, const PixelImage& pixels) {
  if (is_jpeg(p)) return collocated_maps(read_jpeg(p))[0];
  return lossless_maps(pixels)[0];
}

int cmd_eval(const EvalArgs& a) {
  struct Pair {
    fs::path gt, test;
    int qf;
    std::string method;
  };
  std::vector<Pair> pairs;
  if (!a.pairs.empty()) {
    std::ifstream f(a.pairs);
    if (!f) fail(ErrorKind::Io, "cannot open " + a.pairs);
    std::string line;
    const fs::path base = fs::path(a.pairs).parent_path();
    while (std::getline(f, line)) {
      if (line.empty() || line.starts_with("gt,")) continue;
      std::vector<std::string> cols;
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
      if (cols.size() < 2) fail(ErrorKind::MissingPair, "pair line needs gt,test: " + line);
      auto resolve = [&](const std::string& s) { return fs::path(s).is_absolute() ? fs::path(s) : base / s; };
      pairs.push_back({resolve(cols[0]), resolve(cols[1]), cols.size() > 2 ? std::stoi(cols[2]) : a.qf,
                       cols.size() > 3 ? cols[3] : a.method});
    }
  } else {
    if (a.gt_dir.empty() || a.test_dir.empty()) fail(ErrorKind::ConfigInvalid, "give --pairs or --dir gt test");
    std::map<std::string, fs::path> tests;
    for (const auto& e : fs::directory_iterator(a.test_dir))
      if (e.is_regular_file()) tests[e.path().stem().string()] = e.path();
    for (const auto& gt : list_images(a.gt_dir)) {
      const auto it = tests.find(gt.stem().string());
      if (it == tests.end()) fail(ErrorKind::MissingPair, "no test image for " + gt.string());
      pairs.push_back({gt, it->second, a.qf, a.method});
    }
  }
  if (pairs.empty()) fail(ErrorKind::EmptyInput, "no image pairs");

  if (a.channel != "rgb" && a.channel != "y") fail(ErrorKind::ConfigInvalid, "--metric-channel must be rgb or y");
  const MetricChannel channel = a.channel == "y" ? MetricChannel::Y : MetricChannel::RGB;
  MetricsReport report;
  for (const auto& p : pairs) {
    if (!fs::exists(p.gt) || !fs::exists(p.test)) fail(ErrorKind::MissingPair, p.gt.string() + " / " + p.test.string());
    const PixelImage gt = read_pnm(p.gt), test = read_any(p.test);
    MetricsRow r;
    r.image = p.gt.stem().string();
    r.qf = p.qf;
    r.method = p.method;
    r.psnr = psnr(gt, test, channel);
    r.ssim = ssim(gt, test);
    r.psnr_b = psnr_b(gt, test, channel);
    r.js = r.bha = std::nan("");
    if (a.dct) {
      const CollocatedMap x = lossless_maps(gt)[0], y = luma_coefficients(p.test, test);
      const HistogramSet hx = dct_histograms(std::span(&x, 1)), hy = dct_histograms(std::span(&y, 1));
      r.js = js_divergence(hx, hy);
      r.bha = bhattacharyya(hx, hy);
    }
    report.rows.push_back(r);
  }
  std::ofstream out(a.out);
  if (!out) fail(ErrorKind::Io, "cannot write " + a.out);
  report.write_csv(out);
  report.write_csv(std::cout);
  Manifest m("eval");
  m.j["config"]["dct_metrics"] = a.dct;
  m.j["config"]["metric_channel"] = a.channel;
  for (const auto& p : pairs) m.j["inputs"].push_back({p.gt.string(), p.test.string()});
  m.j["outputs"].push_back(a.out);
  m.write(a.out);
  return kOk;
}

int cmd_inspect(const std::string& in, const std::string& dump_dir) {
  const QuantizedImage q = read_jpeg(in);
  std::cout << "dims " << q.width << "x" << q.height << '\n';
  std::cout << "components " << q.components.size() << '\n';
  std::cout << "subsampling " << (q.is_gray() ? "gray" : q.subsampling == Subsampling::S420 ? "420" : "444") << '\n';
  for (std::size_t t = 0; t < q.quant_tables.size(); ++t) {
    std::cout << "quant_table " << t << '\n';
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) std::cout << std::setw(4) << q.quant_tables[t][8 * r + c];
      std::cout << '\n';
    }
  }
  for (std::size_t c = 0; c < q.components.size(); ++c) {
    const IntPlane& p = q.components[c].plane;
    std::array<long, 64> zeros{};
    const long blocks = static_cast<long>(p.height / 8) * (p.width / 8);
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x)
        if (p(y, x) == 0) ++zeros[8 * (y % 8) + x % 8];
    std::cout << "zero_rate component " << c << " (percent, row u / column v)\n";
    for (int u = 0; u < 8; ++u) {
      for (int v = 0; v < 8; ++v)
        std::cout << std::setw(7) << std::fixed << std::setprecision(1) << 100.0 * zeros[8 * u + v] / blocks;
      std::cout << '\n';
    }
  }
  std::cout << "zero_fraction " << std::setprecision(4) << zero_fraction(q) << '\n';
  if (!dump_dir.empty()) dump_maps(dump_dir, collocated_maps(q)[0]);
  return kOk;
}

int cmd_synth(int count, int size, long seed, const std::string& dir) {
  fs::create_directories(dir);
  const auto imgs = synth_corpus(count, size, size, static_cast<std::uint64_t>(seed));
  for (std::size_t i = 0; i < imgs.size(); ++i) {
    std::ostringstream name;
    name << "synth_" << std::setw(3) << std::setfill('0') << i << ".ppm";
    write_pnm(fs::path(dir) / name.str(), imgs[i]);
  }
  Manifest m("synth");
  m.j["config"]["count"] = count;
  m.j["config"]["size"] = size;
  m.j["seed"] = seed;
  m.j["outputs"].push_back(dir);
  m.write(fs::path(dir) / "synth");
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DCT-domain JPEG restoration toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  DegradeArgs dg;
  auto* degrade = app.add_subcommand("degrade", "Compress a PPM/PGM to baseline JPEG");
  degrade->add_option("input", dg.in, "Input PPM/PGM")->required();
  degrade->add_option("output", dg.out, "Output JPEG")->required();
  degrade->add_option("--qf", dg.qf, "Quality factor 1-100");
  degrade->add_option("--qf1", dg.qf1, "First compression QF (double JPEG)");
  degrade->add_option("--qf2", dg.qf2, "Second compression QF (double JPEG)");
  degrade->add_option("--shift", dg.shift, "Grid shift dx,dy in [0,7] for double JPEG");
  degrade->add_option("--subsampling", dg.subsampling, "420 or 444");

  std::string dec_in, dec_out;
  auto* decode = app.add_subcommand("decode", "Standard decode of a JPEG to PPM/PGM");
  decode->add_option("input", dec_in)->required();
  decode->add_option("output", dec_out)->required();

  std::string rc_in, rc_out, rc_ckpt, rc_dump;
  auto* rec = app.add_subcommand("recover", "Restore a JPEG with a trained checkpoint");
  rec->add_option("input", rc_in)->required();
  rec->add_option("output", rc_out)->required();
  rec->add_option("--checkpoint", rc_ckpt)->required();
  rec->add_option("--dump-coeffs", rc_dump, "Directory for per-frequency luma PGM dumps");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--corpus", tr.corpus, "Directory of PPM/PGM images");
  train->add_option("--synth", tr.synth, "Train on N synthetic 96x96 images instead of a corpus");
  train->add_option("--config", tr.config, "key=value config file");
  train->add_option("--set", tr.sets, "key=value override (repeatable)");
  train->add_option("--out", tr.out, "Checkpoint path")->required();
  train->add_option("--resume", tr.resume, "Checkpoint to resume from");
  train->add_option("--steps", tr.steps);
  train->add_option("--seed", tr.seed);
  train->add_option("--stop-at", tr.stop_at, "Save and exit once this step is reached (schedule unchanged)");
  train->add_flag("--double-jpeg", tr.double_jpeg);
  train->add_flag("--toy", tr.toy, "Start from the toy model config");

  std::string in_cfg, in_out;
  bool in_toy = false;
  long in_seed = 0;
  auto* init = app.add_subcommand("init", "Write a freshly initialised checkpoint");
  init->add_option("--config", in_cfg);
  init->add_flag("--toy", in_toy);
  init->add_option("--seed", in_seed);
  init->add_option("--out", in_out)->required();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "PSNR / SSIM / PSNR-B (and DCT divergences) report");
  eval->add_option("--pairs", ev.pairs, "CSV of gt,test[,qf,method]");
  eval->add_option("--dir", [&](const CLI::results_t& r) {
        ev.gt_dir = r.at(0);
        ev.test_dir = r.at(1);
        return true;
      }, "gt_dir test_dir")->expected(2);
  eval->add_option("--qf", ev.qf, "QF label for the report");
  eval->add_option("--method", ev.method, "Method label for the report");
  eval->add_flag("--dct-metrics", ev.dct, "Add JS / Bhattacharyya of luma DCT histograms");
  eval->add_option("--metric-channel", ev.channel, "rgb (default) or y for PSNR and PSNR-B");
  eval->add_option("report", ev.out, "Output CSV")->required();

  std::string is_in, is_dump;
  auto* inspect = app.add_subcommand("inspect", "Print JPEG tables, dims and zero rates");
  inspect->add_option("input", is_in)->required();
  inspect->add_option("--dump", is_dump, "Directory for per-frequency luma PGM dumps");

  int sy_count = 8, sy_size = 96;
  long sy_seed = 0;
  std::string sy_dir;
  auto* synth = app.add_subcommand("synth", "Write a synthetic image corpus");
  synth->add_option("--count", sy_count);
  synth->add_option("--size", sy_size);
  synth->add_option("--seed", sy_seed);
  synth->add_option("dir", sy_dir)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*degrade) return cmd_degrade(dg);
    if (*decode) return cmd_decode(dec_in, dec_out);
    if (*rec) return cmd_recover(rc_in, rc_ckpt, rc_out, rc_dump);
    if (*train) return cmd_train(tr);
    if (*init) return cmd_init(in_cfg, in_toy, in_seed, in_out);
    if (*eval) return cmd_eval(ev);
    if (*inspect) return cmd_inspect(is_in, is_dump);
    if (*synth) return cmd_synth(sy_count, sy_size, sy_seed, sy_dir);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFormat;
  }
  return kUsage;
}
