#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "oa/layers.hpp"
#include "oa/tensor.hpp"

namespace oa {

// Per-head query/key/value projections (d -> d_k each, with bias) and the
// output projection W^O (d -> d).
struct SelfAttentionParams {
  std::vector<Linear> query;
  std::vector<Linear> key;
  std::vector<Linear> value;
  Linear output;

  static SelfAttentionParams init(std::size_t d, std::size_t n_heads, Rng& rng);

  std::size_t n_heads() const { return query.size(); }
  std::size_t head_dim() const { return query.at(0).out_features(); }
  std::size_t parameter_count() const;
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

// Plain dot-product attention: one summary of the context per query row.
//   query   [n, k], context [m, k] -> [n, k]
// Weights are softmax_i(q_j . c_i) over context rows; no scaling, no projection.
Tensor dot_product_attention(const Tensor& query, const Tensor& context);

// Unmasked multi-head scaled dot-product self-attention over the rows of
// x [m, d]; heads are concatenated and projected by W^O.
Tensor multihead_self_attention(const Tensor& x, const SelfAttentionParams& params);

}  // namespace oa
