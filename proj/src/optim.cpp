#include "dctx/optim.hpp"

#include <cmath>

#include "dctx/error.hpp"

namespace dctx::ad {

Tensor ParamStore::add(const std::string& name, Shape shape, InitKind init, double scale) {
  if (find(name)) fail(ErrorKind::ConfigInvalid, "duplicate parameter name " + name);
  Tensor t = Tensor::zeros(std::move(shape), true);
  index_.emplace(name, params_.size());
  params_.push_back({name, t, init, scale});
  return t;
}

void ParamStore::initialize(Rng& rng) {
  for (auto& p : params_) {
    auto v = p.tensor.mutable_values();
    for (double& x : v) {
      switch (p.init) {
        case InitKind::Zero: x = 0.0; break;
        case InitKind::One: x = 1.0; break;
        case InitKind::TruncNormal: x = rng.trunc_normal(p.scale); break;
        case InitKind::Uniform: x = rng.uniform(-p.scale, p.scale); break;
      }
      x = static_cast<float>(x);
    }
  }
}

const Parameter* ParamStore::find(const std::string& name) const {
  const auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Tensor ParamStore::get(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) fail(ErrorKind::ConfigInvalid, "unknown parameter " + name);
  return p->tensor;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void adam_step(std::vector<Parameter>& params, AdamState& state, double lr, const AdamConfig& cfg) {
  if (state.m.empty() && state.v.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    fail(ErrorKind::StateShapeMismatch, "optimizer state holds " + std::to_string(state.m.size()) +
                                            " entries for " + std::to_string(params.size()) + " parameters");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.m[i].size() != params[i].tensor.numel() || state.v[i].size() != params[i].tensor.numel())
      fail(ErrorKind::StateShapeMismatch, "moment size differs for " + params[i].name);

  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_values();
    const auto g = params[i].tensor.grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
}

double clip_grad_global_norm(std::vector<Parameter>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.tensor.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params)
      for (double& g : p.tensor.mutable_grad()) g *= s;
  }
  return norm;
}

}  // namespace dctx::ad
