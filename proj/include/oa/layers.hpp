#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oa/rng.hpp"
#include "oa/tensor.hpp"

namespace oa {

// Optimizer group a parameter belongs to (separate learning rates).
enum class ParamGroup { kBackbone, kHead };

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::kHead;
};

using ParamList = std::vector<NamedParam>;

std::size_t count_elements(const ParamList& params);

// Forward-pass mode. Dropout draws from `rng` when training.
struct RunMode {
  bool training = false;
  Rng* rng = nullptr;

  static RunMode eval() { return {}; }
  static RunMode train(Rng& r) { return {true, &r}; }
};

// y = x W^T + b
struct Linear {
  Tensor weight;  // [out, in]
  Tensor bias;    // [out], may be undefined

  // Glorot-uniform weights, zero bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }
  std::size_t parameter_count() const;

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  static LayerNormParams init(std::size_t width, double eps = 1e-5);
  std::size_t parameter_count() const { return gain.numel() + bias.numel(); }

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias, eps); }
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

}  // namespace oa
