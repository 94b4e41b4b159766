#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dctx/autodiff.hpp"
#include "dctx/blockdct.hpp"
#include "dctx/net.hpp"
#include "dctx/optim.hpp"
#include "dctx/rng.hpp"

namespace dctx {

struct TrainConfig {
  int steps = 2000;
  int batch = 8;       // paper scale: 96
  int crop = 64;       // paper scale: 256
  int qf_min = 10;
  int qf_max = 100;
  double lr_start = 1e-4;
  double lr_peak = 4e-4;
  double lr_end = 1e-5;
  double warmup_fraction = 0.25;
  double clip = 0.2;
  double lambda = 255.0;
  double epsilon = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  std::uint64_t seed = 0;
  bool double_jpeg = false;
  Subsampling subsampling = Subsampling::S420;

  /// Throws ConfigInvalid.
  void validate() const;
  /// Applies one key=value pair; false if the key is not a training key.
  bool set(std::string_view key, std::string_view value);
  std::string to_text() const;
  static TrainConfig from_text(std::string_view text);
};

/// Learning rate for 0 <= step < cfg.steps: linear warm-up from lr_start to
/// lr_peak, then cosine decay reaching lr_end at the final step.
double lr_schedule(long step, const TrainConfig& cfg);

ad::Tensor charbonnier_loss(const ad::Tensor& x, const ad::Tensor& xhat, double eps = 1e-3);
ad::Tensor freq_l1_loss(const ad::Tensor& x, const ad::Tensor& xhat);

/// Differentiable reconstruction of full-resolution coefficient maps to
/// pixels scaled to [0, 1] (no clamping): (3, H, W) RGB or (1, H, W) gray.
ad::Tensor reconstruct(const std::vector<ad::Tensor>& maps);

/// L_freq + lambda * Charbonnier(F(target), F(pred)).
ad::Tensor dual_loss(const std::vector<ad::Tensor>& target, const std::vector<ad::Tensor>& pred,
                     double lambda = 255.0, double eps = 1e-3);

struct Sample {
  QuantizedImage input;
  std::vector<CollocatedMap> target;  // lossless full-resolution coefficients
  int qf = 0;
};

/// Lossless coefficient maps of an image (YCbCr for RGB input, all at full resolution).
std::vector<CollocatedMap> lossless_maps(const PixelImage& img);

/// Random crops with flips / 90 degree rotations, compressed at a random QF
/// (or doubly compressed with a {0,4}^2 shift).
std::vector<Sample> make_batch(const std::vector<PixelImage>& corpus, const TrainConfig& cfg, Rng& rng);

/// Mean dual loss of the model over a batch (one graph).
ad::Tensor batch_loss(const Model& model, const std::vector<Sample>& batch, const TrainConfig& cfg);

struct StepRecord {
  long step = 0;
  double loss = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

/// Owns the optimisation state of one run.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg, std::vector<PixelImage> corpus);

  /// One step: batch -> dual loss -> backward -> clip -> Adam.
  StepRecord step();
  /// Runs until cfg.steps; returns the records of the executed steps.
  std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {});

  long current_step() const { return step_; }
  const TrainConfig& config() const { return cfg_; }
  ad::AdamState& optimizer() { return opt_; }
  Rng& rng() { return rng_; }

  void save(std::ostream& os) const;
  void save(const std::string& path) const;
  /// Restores parameters, moments, step and RNG; the model config must match.
  void resume(std::istream& is);
  void resume(const std::string& path);

 private:
  Model& model_;
  TrainConfig cfg_;
  std::vector<PixelImage> corpus_;
  ad::AdamState opt_;
  Rng rng_;
  long step_ = 0;
};

/// Convenience: fresh trainer over `model`, full run, loss trace.
std::vector<StepRecord> train_loop(Model& model, const TrainConfig& cfg, const std::vector<PixelImage>& corpus);

// ---- checkpoint: "DCTX", u32 version, config texts, tensors (f32 LE), optimizer, step, RNG.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  ModelConfig model;
  std::string train_text;
  std::vector<NamedTensor> tensors;
  long adam_step = 0;
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  long step = 0;
  std::string rng_state;
};

Checkpoint make_checkpoint(const Model& model, const ad::AdamState* opt = nullptr, long step = 0,
                           const Rng* rng = nullptr, const std::string& train_text = {});
void save_checkpoint(std::ostream& os, const Checkpoint& ckpt);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws BadMagic, VersionMismatch, TruncatedFile; ConfigMismatch if
/// `expected` is given and differs from the stored model config.
Checkpoint load_checkpoint(std::istream& is, const ModelConfig* expected = nullptr);
Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);
/// Copies stored tensors into the model (names and shapes must match).
void apply_checkpoint(const Checkpoint& ckpt, Model& model);

}  // namespace dctx
