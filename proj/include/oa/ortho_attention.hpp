#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "oa/attention.hpp"
#include "oa/layers.hpp"
#include "oa/tensor.hpp"

namespace oa {

// Orthogonal attention variants. EM/EMB build key/value pairs by elementwise
// multiplication, C/CA by query-generated convolution filters; EMB and CA
// make the attention queries context-aware.
enum class Variant { kEM, kEMB, kC, kCA };

inline constexpr Variant kAllVariants[] = {Variant::kEM, Variant::kEMB, Variant::kC, Variant::kCA};

std::string_view variant_name(Variant v);  // "em", "emb", "c", "ca"
Variant parse_variant(std::string_view name);

struct OAConfig {
  std::size_t d = 64;
  std::size_t n_heads = 4;
  Variant variant = Variant::kEM;
  double dropout_p = 0.3;
  std::size_t d_ff = 0;  // hidden width of the block's feed-forward; 0 means d
  double ln_eps = 1e-5;

  std::size_t d_k() const { return d / n_heads; }
  std::size_t d_v() const { return d_k(); }
  std::size_t sqrt_dk() const;  // exact integer root; throws if d_k is not a square
  std::size_t ff_width() const { return d_ff == 0 ? d : d_ff; }

  // Throws std::invalid_argument naming the violated constraint.
  void validate() const;
};

// ---- alpha: key/value pair generators, output [m, n, d_k] ---------------------

// C1 = ReLU(C W0^T + b0), Q1 = ReLU(Q W1^T + b1), X = C1 (x) Q1, ReLU(X W2^T + b2)
struct AlphaEM {
  Linear w0, w1, w2;
};

// C1 = ReLU(C W0^T + b0); filters Q W1^T + b1 (d_k values per query word,
// viewed as sqrt(d_k) filters of sqrt(d_k) taps); one bias per query word
// Q W2^T + b2; X = conv(C1); ReLU(X W3^T + b3)
struct AlphaConv {
  Linear w0, w1, w2, w3;
};

using AlphaParams = std::variant<AlphaEM, AlphaConv>;

// ---- beta: attention query generators, output [n, d_k] ----------------------

struct BetaEM {  // ReLU(Q W3^T + b3)
  Linear w3;
};

struct BetaEMB {  // Q1 (x) DotAttention(Q1, C1), then linear + ReLU
  Linear w0, w1, w2;
};

struct BetaCA {  // conv over Q1 with filters generated from DotAttention(Q1, C1)
  Linear w0, w4, w5, w6;
};

using BetaParams = std::variant<BetaEM, BetaEMB, BetaCA>;

struct OAHeadParams {
  AlphaParams alpha_k;  // generates K^S
  AlphaParams alpha_v;  // generates V^S, same structure, own weights
  BetaParams beta;      // generates Q^S
};

struct OAEncoderState {
  std::vector<OAHeadParams> heads;
  Tensor w_d;  // [d, d], projects concatenated heads back to d
  SelfAttentionParams self_attn;
  Linear ff1, ff2;
  LayerNormParams norm1, norm2;

  static OAEncoderState init(const OAConfig& cfg, Rng& rng);
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

OAHeadParams init_head(const OAConfig& cfg, Rng& rng);

Tensor alpha_em(const Tensor& context, const Tensor& query, const AlphaEM& p);
Tensor alpha_c(const Tensor& context, const Tensor& query, const AlphaConv& p, std::size_t sqrt_dk);
Tensor beta_em(const Tensor& query, const BetaEM& p);
Tensor beta_emb(const Tensor& context, const Tensor& query, const BetaEMB& p);
Tensor beta_ca(const Tensor& context, const Tensor& query, const BetaCA& p, std::size_t sqrt_dk);

Tensor alpha(const Tensor& context, const Tensor& query, const AlphaParams& p, const OAConfig& cfg);
Tensor beta(const Tensor& context, const Tensor& query, const BetaParams& p, const OAConfig& cfg);

// Every intermediate of one head, kept for inspection.
struct HeadOutput {
  Tensor keys;     // K^S [m, n, d_k]
  Tensor values;   // V^S [m, n, d_v]
  Tensor queries;  // Q^S [n, d_k]
  Tensor weights;  // W^S [m, n, 1], rows sum to 1 before dropout
  Tensor output;   // C^Q [m, d_v]
};

// One orthogonal attention head: for each context row i,
//   C^Q_i = sum_j softmax_j(K^S_ij . Q^S_j / sqrt(d_k)) V^S_ij
// Scores are taken pairwise, never through an [m, n, n] product.
HeadOutput oa_head(const Tensor& context, const Tensor& query, const OAHeadParams& params, const OAConfig& cfg,
                   RunMode mode);

// Concat of all heads projected by W^D: [m, d]. When `trace` is given it
// receives every head's intermediates.
Tensor oa_multihead(const Tensor& context, const Tensor& query, const OAEncoderState& state, const OAConfig& cfg,
                    RunMode mode, std::vector<HeadOutput>* trace = nullptr);

// Z = OA(C, Q); X2 = LN(Z + C); X3 = SelfAtt(X2); X4 = FF(X3); out = LN(X4 + X2)
Tensor oa_encoder_block(const Tensor& context, const Tensor& query, const OAEncoderState& state,
                        const OAConfig& cfg, RunMode mode, std::vector<HeadOutput>* trace = nullptr);

std::size_t parameter_count(const OAHeadParams& head);
std::size_t parameter_count(const OAEncoderState& state);

}  // namespace oa
