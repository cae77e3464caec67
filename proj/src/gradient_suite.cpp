#include "oa/gradient_suite.hpp"

#include <cstdio>

#include "oa/attention.hpp"
#include "oa/scope_model.hpp"

namespace oa {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), true);
}

// Moves every parameter off its initial value so that zero biases do not sit
// on ReLU kinks and symmetric initializations do not hide indexing errors.
void jitter(const ParamList& params, Rng& rng) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    for (double& v : t.mutable_data()) v += rng.uniform(-0.2, 0.2);
  }
}

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

void collect_alpha(const AlphaParams& a, ParamList& out) {
  if (const auto* em = std::get_if<AlphaEM>(&a)) {
    em->w0.collect(out, "w0", ParamGroup::kHead);
    em->w1.collect(out, "w1", ParamGroup::kHead);
    em->w2.collect(out, "w2", ParamGroup::kHead);
  } else {
    const auto& c = std::get<AlphaConv>(a);
    c.w0.collect(out, "w0", ParamGroup::kHead);
    c.w1.collect(out, "w1", ParamGroup::kHead);
    c.w2.collect(out, "w2", ParamGroup::kHead);
    c.w3.collect(out, "w3", ParamGroup::kHead);
  }
}

void collect_beta(const BetaParams& b, ParamList& out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, BetaEM>) {
          p.w3.collect(out, "w3", ParamGroup::kHead);
        } else if constexpr (std::is_same_v<T, BetaEMB>) {
          p.w0.collect(out, "w0", ParamGroup::kHead);
          p.w1.collect(out, "w1", ParamGroup::kHead);
          p.w2.collect(out, "w2", ParamGroup::kHead);
        } else {
          p.w0.collect(out, "w0", ParamGroup::kHead);
          p.w4.collect(out, "w4", ParamGroup::kHead);
          p.w5.collect(out, "w5", ParamGroup::kHead);
          p.w6.collect(out, "w6", ParamGroup::kHead);
        }
      },
      b);
}

}  // namespace

std::vector<GradCheckRow> op_gradient_suite(std::uint64_t seed, const GradCheckOptions& o) {
  Rng rng(seed);
  std::vector<GradCheckRow> rows;
  auto run = [&](std::string name, const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
    rows.push_back({std::move(name), check_gradients(f, std::move(leaves), o)});
  };
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng);
  Tensor c = random_tensor({2, 3, 4}, rng), cb = random_tensor({1, 3, 1}, rng);
  Tensor w = random_tensor({5, 4}, rng), wb = random_tensor({5}, rng);
  Tensor g = random_tensor({4}, rng, 0.5, 1.5), gb = random_tensor({4}, rng);
  Tensor e = random_tensor({3, 4}, rng);

  run("matmul", [&] { return projection_loss(matmul(a, b), 1); }, {a, b});
  run("add (broadcast)", [&] { return projection_loss(add(c, cb), 2); }, {c, cb});
  run("mul (broadcast)", [&] { return projection_loss(mul(c, cb), 3); }, {c, cb});
  run("scale", [&] { return projection_loss(scale(c, -0.7), 4); }, {c});
  run("linear", [&] { return projection_loss(linear(a, w, wb), 5); }, {a, w, wb});
  run("relu", [&] { return projection_loss(relu(c), 6); }, {c});
  run("softmax", [&] { return projection_loss(softmax(c, 1), 7); }, {c});
  run("layer_norm", [&] { return projection_loss(layer_norm(a, g, gb), 8); }, {a, g, gb});
  run("dropout (training, fixed seed)",
      [&] {
        Rng mask(99);
        return projection_loss(dropout(a, 0.3, &mask, true), 9);
      },
      {a});
  run("concat", [&] {
    const Tensor parts[] = {a, e};
    return projection_loss(concat(parts, 1), 10);
  }, {a, e});
  run("reshape/transpose", [&] { return projection_loss(transpose(reshape(c, {4, 3, 2})), 11); }, {c});
  run("sum_axis", [&] { return projection_loss(sum_axis(c, 1, true), 12); }, {c});
  const std::size_t picks[] = {2, 0, 2};
  run("gather_rows", [&] { return projection_loss(gather_rows(a, picks), 13); }, {a});

  Tensor conv_in = random_tensor({3, 8}, rng), filt = random_tensor({2, 3, 4}, rng), fbias = random_tensor({2, 1}, rng);
  Tensor row_filt = random_tensor({3, 2, 4}, rng), row_bias = random_tensor({3, 2}, rng);
  run("conv1d_dynamic (all groups)", [&] { return projection_loss(conv1d_dynamic(conv_in, filt, fbias, 4), 14); },
      {conv_in, filt, fbias});
  run("conv1d_dynamic (row-wise)",
      [&] { return projection_loss(conv1d_dynamic(conv_in, row_filt, row_bias, 4, ConvPairing::kRowWise), 15); },
      {conv_in, row_filt, row_bias});
  const int labels[] = {1, 0, 1};
  Tensor logits = random_tensor({3, 2}, rng);
  run("cross_entropy", [&] { return cross_entropy(logits, labels); }, {logits});

  Tensor q = random_tensor({3, 5}, rng), ctx = random_tensor({4, 5}, rng);
  run("dot_product_attention", [&] { return projection_loss(dot_product_attention(q, ctx), 16); }, {q, ctx});
  SelfAttentionParams sa = SelfAttentionParams::init(8, 2, rng);
  ParamList sa_params;
  sa.collect(sa_params, "sa", ParamGroup::kHead);
  jitter(sa_params, rng);
  Tensor x = random_tensor({4, 8}, rng);
  std::vector<Tensor> sa_leaves = tensors_of(sa_params);
  sa_leaves.push_back(x);
  run("multihead_self_attention", [&] { return projection_loss(multihead_self_attention(x, sa), 17); }, sa_leaves);
  return rows;
}

std::vector<GradCheckRow> layer_gradient_suite(Variant variant, std::size_t d, std::size_t n_heads,
                                               std::uint64_t seed, const GradCheckOptions& o) {
  Rng rng(seed);
  OAConfig cfg;
  cfg.d = d;
  cfg.n_heads = n_heads;
  cfg.variant = variant;
  cfg.validate();
  const std::string tag = std::string(variant_name(variant)) + " ";
  const std::size_t m = 5, n = 2;
  Tensor c = random_tensor({m, d}, rng), q = random_tensor({n, d}, rng);

  OAEncoderState block = OAEncoderState::init(cfg, rng);
  ParamList block_params;
  block.collect(block_params, "block", ParamGroup::kHead);
  jitter(block_params, rng);
  const OAHeadParams& head = block.heads[0];

  std::vector<GradCheckRow> rows;
  auto run = [&](const std::string& name, const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
    leaves.push_back(c);
    leaves.push_back(q);
    rows.push_back({tag + name, check_gradients(f, std::move(leaves), o)});
  };

  ParamList alpha_params, beta_params;
  collect_alpha(head.alpha_k, alpha_params);
  collect_beta(head.beta, beta_params);
  run("alpha", [&] { return projection_loss(alpha(c, q, head.alpha_k, cfg), 21); }, tensors_of(alpha_params));
  run("beta", [&] { return projection_loss(beta(c, q, head.beta, cfg), 22); }, tensors_of(beta_params));

  ParamList head_params = alpha_params;
  collect_alpha(head.alpha_v, head_params);
  head_params.insert(head_params.end(), beta_params.begin(), beta_params.end());
  run("oa_head", [&] { return projection_loss(oa_head(c, q, head, cfg, RunMode::eval()).output, 23); },
      tensors_of(head_params));

  ParamList multi_params;
  for (const auto& p : block_params)
    if (p.name.find(".oa.") != std::string::npos) multi_params.push_back(p);
  run("oa_multihead", [&] { return projection_loss(oa_multihead(c, q, block, cfg, RunMode::eval()), 24); },
      tensors_of(multi_params));
  run("oa_encoder_block", [&] { return projection_loss(oa_encoder_block(c, q, block, cfg, RunMode::eval()), 25); },
      tensors_of(block_params));

  ModelConfig mc;
  mc.oa = cfg;
  mc.backbone.d = d;
  mc.backbone.n_heads = n_heads;
  mc.backbone.vocab_size = 64;
  mc.backbone.max_len = 16;
  ScopeModel model = ScopeModel::init(mc, rng);
  const ParamList model_params = model.parameters();
  jitter(model_params, rng);
  TokenSequence seq;
  for (std::size_t i = 0; i < 6; ++i) {
    seq.token_ids.push_back(1 + static_cast<int>(rng.below(63)));
    seq.words.push_back("w" + std::to_string(i));
  }
  seq.cue_ids = {1, 3, 4};
  const int labels[] = {0, 0, 1, 1, 0, 1};
  rows.push_back({tag + "scope_model (toy backbone)",
                  check_gradients([&] { return token_loss(model.logits(seq, RunMode::eval()), labels); },
                                  tensors_of(model_params), o)});
  return rows;
}

std::string gradcheck_table(std::span<const GradCheckRow> rows) {
  std::string out = "layer                                  probes  unresolved  max_rel_err  result\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-38s %6zu  %10zu  %11.3e  %s\n", r.name.c_str(), r.report.probes,
                  r.report.unresolved, r.report.max_rel_error, r.report.passed() ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

}  // namespace oa
