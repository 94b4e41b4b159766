#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "dctx/autodiff.hpp"
#include "dctx/rng.hpp"

namespace dctx::ad {

enum class InitKind { Zero, One, TruncNormal, Uniform };

struct Parameter {
  std::string name;
  Tensor tensor;
  InitKind init = InitKind::Zero;
  double scale = 0.0;  // sigma for TruncNormal, bound for Uniform
};

/// Ordered, name-unique collection of trainable tensors.
class ParamStore {
 public:
  Tensor add(const std::string& name, Shape shape, InitKind init, double scale = 0.0);
  void initialize(Rng& rng);

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  const Parameter* find(const std::string& name) const;
  Tensor get(const std::string& name) const;
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct AdamState {
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update using the gradients held by the parameters.
/// An empty state is initialised to zero moments.
void adam_step(std::vector<Parameter>& params, AdamState& state, double lr, const AdamConfig& cfg = {});

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_global_norm(std::vector<Parameter>& params, double max_norm = 0.2);

}  // namespace dctx::ad
