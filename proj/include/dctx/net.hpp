#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dctx/autodiff.hpp"
#include "dctx/collocate.hpp"
#include "dctx/jfif.hpp"
#include "dctx/optim.hpp"
#include "dctx/rng.hpp"

namespace dctx {

enum class Ablation {
  Full,
  ParallelSpatial,      // two W-MSA branches
  ParallelFrequential,  // two F-MSA branches
  Successive,           // F-MSA applied after W-MSA, no fusion conv
  AddFusion,            // branches summed, then a C -> C conv
  ConcatNoConv,         // concat fused by a 1x1 conv
  NoQM,                 // quantised integers used as they are
  ConcatQM,             // quantiser appended as 64 constant channels
};

std::string_view to_string(Ablation a);
Ablation ablation_from_string(std::string_view s);

struct ModelConfig {
  int embed_dim = 96;
  int window = 4;
  int num_blocks = 4;
  int sftbs_per_block = 4;
  int d_head = 32;
  int mlp_ratio = 4;
  bool grayscale = false;
  Ablation ablation = Ablation::Full;

  static ModelConfig toy();

  /// Throws ConfigInvalid / ChannelNotDivisibleByHead.
  void validate() const;
  int heads() const { return embed_dim / d_head; }

  /// Flat key=value lines; from_text accepts the same keys.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);
  std::uint64_t hash() const;
  bool operator==(const ModelConfig&) const = default;
};

/// The DCTransformer. Feature maps are (C, h, w) tensors; coefficient maps
/// enter scaled by 1/1024 and leave rescaled.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& store() { return store_; }
  const ad::ParamStore& store() const { return store_; }
  std::vector<ad::Parameter>& params() { return store_.params(); }
  void initialize(Rng& rng) { store_.initialize(rng); }

  /// Y (64,h,w) and Cb/Cr (64,h/2,w/2) or (64,h,w) network inputs -> (C,h,w).
  ad::Tensor alignment_head(const std::vector<ad::Tensor>& inputs) const;
  /// `attn`, when given, receives the softmax weights [nW, heads, M*M, M*M].
  ad::Tensor wmsa(const ad::Tensor& x, const std::string& prefix, bool shifted,
                  ad::Tensor* attn = nullptr) const;
  /// `attn`, when given, receives the softmax weights [heads, d_head, d_head].
  ad::Tensor fmsa(const ad::Tensor& x, const std::string& prefix, ad::Tensor* attn = nullptr) const;
  ad::Tensor sftb(const ad::Tensor& x, int block, int index) const;
  ad::Tensor dct_block(const ad::Tensor& x, int block) const;

  /// Recovered full-resolution coefficient maps, one (64, h, w) tensor per
  /// component at the luma block-grid dims.
  std::vector<ad::Tensor> forward(const QuantizedImage& q) const;

 private:
  void add_conv(const std::string& name, int cout, int cin, int k);
  void add_tconv(const std::string& name, int cin, int cout);
  void add_linear(const std::string& name, int in, int out);
  void add_norm(const std::string& name, int dim);
  void add_wmsa(const std::string& prefix);
  void add_fmsa(const std::string& prefix);

  ad::Tensor conv(const std::string& name, const ad::Tensor& x) const;
  ad::Tensor tconv(const std::string& name, const ad::Tensor& x) const;
  ad::Tensor lin(const std::string& name, const ad::Tensor& x) const;
  ad::Tensor norm(const std::string& name, const ad::Tensor& x) const;
  ad::Tensor mlp(const std::string& prefix, const ad::Tensor& x) const;
  int input_channels() const;

  ModelConfig cfg_;
  ad::ParamStore store_;
  std::vector<int> rel_index_;
};

std::size_t param_count(const Model& model);

/// Constant tensor (64, rows, cols) holding the map's values.
ad::Tensor map_tensor(const CollocatedMap& map);
CollocatedMap tensor_map(const ad::Tensor& t, ComponentKind kind);

/// Full-resolution coefficient maps -> RGB (or gray) image cropped to
/// (height, width), clamped to [0, 255].
PixelImage maps_to_image(const std::vector<CollocatedMap>& maps, int height, int width);

/// Runs the model and converts its output to pixels.
PixelImage recover(const Model& model, const QuantizedImage& q);

}  // namespace dctx
