#include "oa/layers.hpp"

#include <cmath>

namespace oa {

std::size_t count_elements(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::vector<double> w(in * out);
  for (double& v : w) v = rng.uniform(-limit, limit);
  Linear l;
  l.weight = Tensor({out, in}, std::move(w), true);
  if (with_bias) l.bias = Tensor({out}, 0.0, true);
  return l;
}

std::size_t Linear::parameter_count() const {
  return weight.numel() + (bias.defined() ? bias.numel() : 0);
}

void Linear::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  out.push_back({prefix + ".weight", weight, group});
  if (bias.defined()) out.push_back({prefix + ".bias", bias, group});
}

LayerNormParams LayerNormParams::init(std::size_t width, double eps) {
  return {Tensor({width}, 1.0, true), Tensor({width}, 0.0, true), eps};
}

void LayerNormParams::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  out.push_back({prefix + ".gain", gain, group});
  out.push_back({prefix + ".bias", bias, group});
}

}  // namespace oa
