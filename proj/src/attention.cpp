#include "oa/attention.hpp"

#include <cmath>
#include <stdexcept>

namespace oa {

SelfAttentionParams SelfAttentionParams::init(std::size_t d, std::size_t n_heads, Rng& rng) {
  if (n_heads == 0 || d % n_heads != 0) {
    throw std::invalid_argument("self-attention: d=" + std::to_string(d) + " is not divisible by n_heads=" +
                                std::to_string(n_heads));
  }
  const std::size_t dk = d / n_heads;
  SelfAttentionParams p;
  for (std::size_t h = 0; h < n_heads; ++h) {
    p.query.push_back(Linear::init(d, dk, rng));
    p.key.push_back(Linear::init(d, dk, rng));
    p.value.push_back(Linear::init(d, dk, rng));
  }
  p.output = Linear::init(d, d, rng);
  return p;
}

std::size_t SelfAttentionParams::parameter_count() const {
  std::size_t n = output.parameter_count();
  for (std::size_t h = 0; h < n_heads(); ++h) {
    n += query[h].parameter_count() + key[h].parameter_count() + value[h].parameter_count();
  }
  return n;
}

void SelfAttentionParams::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  for (std::size_t h = 0; h < n_heads(); ++h) {
    const std::string head = prefix + ".head" + std::to_string(h);
    query[h].collect(out, head + ".query", group);
    key[h].collect(out, head + ".key", group);
    value[h].collect(out, head + ".value", group);
  }
  output.collect(out, prefix + ".output", group);
}

Tensor dot_product_attention(const Tensor& query, const Tensor& context) {
  if (query.rank() != 2 || context.rank() != 2 || query.dim(1) != context.dim(1)) {
    throw std::invalid_argument("dot_product_attention: query " + shape_string(query.shape()) + " and context " +
                                shape_string(context.shape()) + " must be [n,k] and [m,k]");
  }
  const Tensor scores = matmul(query, transpose(context));  // [n, m]
  return matmul(softmax(scores, -1), context);
}

Tensor multihead_self_attention(const Tensor& x, const SelfAttentionParams& params) {
  const std::size_t d = params.output.in_features();
  if (x.rank() != 2 || x.dim(1) != d) {
    throw std::invalid_argument("multihead_self_attention: input " + shape_string(x.shape()) +
                                " must be [m," + std::to_string(d) + "]");
  }
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.head_dim()));
  std::vector<Tensor> heads;
  heads.reserve(params.n_heads());
  for (std::size_t h = 0; h < params.n_heads(); ++h) {
    const Tensor q = params.query[h](x);
    const Tensor k = params.key[h](x);
    const Tensor v = params.value[h](x);
    const Tensor weights = softmax(scale(matmul(q, transpose(k)), inv_sqrt_dk), -1);  // [m, m]
    heads.push_back(matmul(weights, v));
  }
  return params.output(concat(heads, 1));
}

}  // namespace oa
