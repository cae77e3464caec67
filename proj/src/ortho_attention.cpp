#include "oa/ortho_attention.hpp"

#include <cmath>
#include <stdexcept>

namespace oa {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_pair(const Tensor& context, const Tensor& query, const char* op) {
  if (context.rank() != 2 || query.rank() != 2 || context.dim(1) != query.dim(1)) {
    throw std::invalid_argument(std::string(op) + ": context " + shape_string(context.shape()) + " and query " +
                                shape_string(query.shape()) + " must be [m,d] and [n,d]");
  }
}

// [n, d_k] generator output viewed as n groups of sqrt(d_k) filters x sqrt(d_k) taps.
Tensor as_filters(const Tensor& generated, std::size_t sqrt_dk, const char* op) {
  if (generated.dim(1) != sqrt_dk * sqrt_dk) {
    throw std::invalid_argument(std::string(op) + ": filter generator yields " + std::to_string(generated.dim(1)) +
                                " values per query word, expected " + std::to_string(sqrt_dk * sqrt_dk));
  }
  return reshape(generated, {generated.dim(0), sqrt_dk, sqrt_dk});
}

void collect_alpha(const AlphaParams& a, ParamList& out, const std::string& prefix, ParamGroup group) {
  std::visit(Overloaded{[&](const AlphaEM& p) {
                          p.w0.collect(out, prefix + ".w0", group);
                          p.w1.collect(out, prefix + ".w1", group);
                          p.w2.collect(out, prefix + ".w2", group);
                        },
                        [&](const AlphaConv& p) {
                          p.w0.collect(out, prefix + ".w0", group);
                          p.w1.collect(out, prefix + ".w1", group);
                          p.w2.collect(out, prefix + ".w2", group);
                          p.w3.collect(out, prefix + ".w3", group);
                        }},
             a);
}

void collect_beta(const BetaParams& b, ParamList& out, const std::string& prefix, ParamGroup group) {
  std::visit(Overloaded{[&](const BetaEM& p) { p.w3.collect(out, prefix + ".w3", group); },
                        [&](const BetaEMB& p) {
                          p.w0.collect(out, prefix + ".w0", group);
                          p.w1.collect(out, prefix + ".w1", group);
                          p.w2.collect(out, prefix + ".w2", group);
                        },
                        [&](const BetaCA& p) {
                          p.w0.collect(out, prefix + ".w0", group);
                          p.w4.collect(out, prefix + ".w4", group);
                          p.w5.collect(out, prefix + ".w5", group);
                          p.w6.collect(out, prefix + ".w6", group);
                        }},
             b);
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kEM:
      return "em";
    case Variant::kEMB:
      return "emb";
    case Variant::kC:
      return "c";
    case Variant::kCA:
      return "ca";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (variant_name(v) == name) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) + "' (expected em, emb, c or ca)");
}

std::size_t OAConfig::sqrt_dk() const {
  const std::size_t dk = d_k();
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dk))));
  if (r * r != dk) throw std::invalid_argument("d_k=" + std::to_string(dk) + " is not a perfect square");
  return r;
}

void OAConfig::validate() const {
  if (d == 0 || n_heads == 0 || d % n_heads != 0) {
    throw std::invalid_argument("d=" + std::to_string(d) + " is not divisible by n_heads=" + std::to_string(n_heads));
  }
  if (variant == Variant::kC || variant == Variant::kCA) (void)sqrt_dk();
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw std::invalid_argument("dropout_p must lie in [0, 1)");
  if (!(ln_eps > 0.0)) throw std::invalid_argument("ln_eps must be positive");
}

// ---- alpha / beta -------------------------------------------------------------

Tensor alpha_em(const Tensor& context, const Tensor& query, const AlphaEM& p) {
  check_pair(context, query, "alpha_em");
  const Tensor c1 = relu(p.w0(context));  // [m, d_k]
  const Tensor q1 = relu(p.w1(query));    // [n, d_k]
  const std::size_t m = c1.dim(0), n = q1.dim(0), dk = c1.dim(1);
  const Tensor x1 = mul(reshape(c1, {m, 1, dk}), reshape(q1, {1, n, dk}));  // [m, n, d_k]
  return relu(p.w2(x1));
}

Tensor alpha_c(const Tensor& context, const Tensor& query, const AlphaConv& p, std::size_t sqrt_dk) {
  check_pair(context, query, "alpha_c");
  const Tensor c1 = relu(p.w0(context));                          // [m, d_k]
  const Tensor filters = as_filters(p.w1(query), sqrt_dk, "alpha_c");  // [n, s, s]
  const Tensor bias = p.w2(query);                                 // [n, 1]
  const Tensor x = conv1d_dynamic(c1, filters, bias, sqrt_dk);     // [m, n, d_k]
  return relu(p.w3(x));
}

Tensor beta_em(const Tensor& query, const BetaEM& p) {
  if (query.rank() != 2) throw std::invalid_argument("beta_em: query " + shape_string(query.shape()) + " must be [n,d]");
  return relu(p.w3(query));
}

Tensor beta_emb(const Tensor& context, const Tensor& query, const BetaEMB& p) {
  check_pair(context, query, "beta_emb");
  const Tensor c1 = relu(p.w0(context));
  const Tensor q1 = relu(p.w1(query));
  const Tensor summary = dot_product_attention(q1, c1);  // [n, d_k]
  return relu(p.w2(mul(q1, summary)));
}

Tensor beta_ca(const Tensor& context, const Tensor& query, const BetaCA& p, std::size_t sqrt_dk) {
  check_pair(context, query, "beta_ca");
  const Tensor c1 = relu(p.w0(context));
  const Tensor q1 = relu(p.w4(query));
  const Tensor summary = dot_product_attention(q1, c1);  // [n, d_k]
  const Tensor filters = as_filters(p.w5(summary), sqrt_dk, "beta_ca");
  const Tensor bias = p.w6(summary);  // [n, 1]
  return conv1d_dynamic(q1, filters, bias, sqrt_dk, ConvPairing::kRowWise);
}

Tensor alpha(const Tensor& context, const Tensor& query, const AlphaParams& p, const OAConfig& cfg) {
  return std::visit(Overloaded{[&](const AlphaEM& a) { return alpha_em(context, query, a); },
                               [&](const AlphaConv& a) { return alpha_c(context, query, a, cfg.sqrt_dk()); }},
                    p);
}

Tensor beta(const Tensor& context, const Tensor& query, const BetaParams& p, const OAConfig& cfg) {
  return std::visit(Overloaded{[&](const BetaEM& b) { return beta_em(query, b); },
                               [&](const BetaEMB& b) { return beta_emb(context, query, b); },
                               [&](const BetaCA& b) { return beta_ca(context, query, b, cfg.sqrt_dk()); }},
                    p);
}

// ---- initialization -------------------------------------------------------------

OAHeadParams init_head(const OAConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.d, dk = cfg.d_k();
  auto make_alpha = [&]() -> AlphaParams {
    if (cfg.variant == Variant::kEM || cfg.variant == Variant::kEMB) {
      return AlphaEM{Linear::init(d, dk, rng), Linear::init(d, dk, rng), Linear::init(dk, dk, rng)};
    }
    return AlphaConv{Linear::init(d, dk, rng), Linear::init(d, dk, rng), Linear::init(d, 1, rng),
                     Linear::init(dk, dk, rng)};
  };
  OAHeadParams head;
  head.alpha_k = make_alpha();
  head.alpha_v = make_alpha();
  switch (cfg.variant) {
    case Variant::kEM:
    case Variant::kC:
      head.beta = BetaEM{Linear::init(d, dk, rng)};
      break;
    case Variant::kEMB:
      head.beta = BetaEMB{Linear::init(d, dk, rng), Linear::init(d, dk, rng), Linear::init(dk, dk, rng)};
      break;
    case Variant::kCA:
      head.beta = BetaCA{Linear::init(d, dk, rng), Linear::init(d, dk, rng), Linear::init(dk, dk, rng),
                         Linear::init(dk, 1, rng)};
      break;
  }
  return head;
}

OAEncoderState OAEncoderState::init(const OAConfig& cfg, Rng& rng) {
  cfg.validate();
  OAEncoderState s;
  for (std::size_t h = 0; h < cfg.n_heads; ++h) s.heads.push_back(init_head(cfg, rng));
  s.w_d = Linear::init(cfg.d, cfg.d, rng, false).weight;
  s.self_attn = SelfAttentionParams::init(cfg.d, cfg.n_heads, rng);
  s.ff1 = Linear::init(cfg.d, cfg.ff_width(), rng);
  s.ff2 = Linear::init(cfg.ff_width(), cfg.d, rng);
  s.norm1 = LayerNormParams::init(cfg.d, cfg.ln_eps);
  s.norm2 = LayerNormParams::init(cfg.d, cfg.ln_eps);
  return s;
}

void OAEncoderState::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const std::string head = prefix + ".oa.head" + std::to_string(h);
    collect_alpha(heads[h].alpha_k, out, head + ".alpha_k", group);
    collect_alpha(heads[h].alpha_v, out, head + ".alpha_v", group);
    collect_beta(heads[h].beta, out, head + ".beta", group);
  }
  out.push_back({prefix + ".oa.w_d", w_d, group});
  self_attn.collect(out, prefix + ".self_attn", group);
  ff1.collect(out, prefix + ".ff1", group);
  ff2.collect(out, prefix + ".ff2", group);
  norm1.collect(out, prefix + ".norm1", group);
  norm2.collect(out, prefix + ".norm2", group);
}

std::size_t parameter_count(const OAHeadParams& head) {
  ParamList list;
  collect_alpha(head.alpha_k, list, "k", ParamGroup::kHead);
  collect_alpha(head.alpha_v, list, "v", ParamGroup::kHead);
  collect_beta(head.beta, list, "q", ParamGroup::kHead);
  return count_elements(list);
}

std::size_t parameter_count(const OAEncoderState& state) {
  ParamList list;
  state.collect(list, "block", ParamGroup::kHead);
  return count_elements(list);
}

// ---- forward ------------------------------------------------------------------------

HeadOutput oa_head(const Tensor& context, const Tensor& query, const OAHeadParams& params, const OAConfig& cfg,
                   RunMode mode) {
  check_pair(context, query, "oa_head");
  HeadOutput out;
  out.keys = alpha(context, query, params.alpha_k, cfg);
  out.values = alpha(context, query, params.alpha_v, cfg);
  out.queries = beta(context, query, params.beta, cfg);
  const std::size_t m = context.dim(0), n = query.dim(0), dk = out.queries.dim(1);

  // s_ij = K^S_ij . Q^S_j / sqrt(d_k), taken pairwise
  const Tensor scores = scale(sum_axis(mul(out.keys, reshape(out.queries, {1, n, dk})), 2),
                              1.0 / std::sqrt(static_cast<double>(dk)));  // [m, n]
  const Tensor normalized = reshape(softmax(scores, 1), {m, n, 1});
  out.weights = dropout(normalized, cfg.dropout_p, mode.rng, mode.training);
  out.output = sum_axis(mul(out.weights, out.values), 1);  // [m, d_v]
  return out;
}

Tensor oa_multihead(const Tensor& context, const Tensor& query, const OAEncoderState& state, const OAConfig& cfg,
                    RunMode mode, std::vector<HeadOutput>* trace) {
  std::vector<Tensor> outputs;
  outputs.reserve(state.heads.size());
  for (const auto& head : state.heads) {
    HeadOutput h = oa_head(context, query, head, cfg, mode);
    outputs.push_back(h.output);
    if (trace) trace->push_back(std::move(h));
  }
  return linear(concat(outputs, 1), state.w_d);
}

Tensor oa_encoder_block(const Tensor& context, const Tensor& query, const OAEncoderState& state,
                        const OAConfig& cfg, RunMode mode, std::vector<HeadOutput>* trace) {
  const Tensor z = oa_multihead(context, query, state, cfg, mode, trace);
  const Tensor x2 = state.norm1(add(z, context));
  const Tensor x3 = multihead_self_attention(x2, state.self_attn);
  const Tensor x4 = state.ff2(relu(state.ff1(x3)));
  return state.norm2(add(x4, x2));
}

}  // namespace oa
