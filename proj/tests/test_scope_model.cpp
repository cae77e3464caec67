#include <cmath>
#include <cstring>

#include "doctest.h"
#include "oa/checkpoint.hpp"
#include "oa/gradcheck.hpp"
#include "oa/scope_model.hpp"

using namespace oa;

namespace {

ModelConfig small_config(Variant v = Variant::kEM) {
  ModelConfig c;
  c.backbone.d = c.oa.d = 16;
  c.backbone.n_heads = 2;
  c.oa.n_heads = 4;
  c.backbone.vocab_size = 50;
  c.backbone.max_len = 12;
  c.oa.variant = v;
  return c;
}

TokenSequence sequence(std::size_t m, std::vector<std::size_t> cues, Rng& rng) {
  TokenSequence s;
  for (std::size_t i = 0; i < m; ++i) {
    s.token_ids.push_back(1 + static_cast<int>(rng.below(49)));
    s.words.push_back("w" + std::to_string(i));
  }
  s.cue_ids = std::move(cues);
  return s;
}

// The model starts with a zero classifier; tests that look through it need
// nonzero weights.
void randomize_classifier(const ScopeModel& model, Rng& rng) {
  for (Tensor t : {model.classifier.weight, model.classifier.bias})
    for (double& v : t.mutable_data()) v = rng.uniform(-0.5, 0.5);
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("prediction has one row per token and rows sum to one") {
  for (Variant v : kAllVariants) {
    Rng rng(2);
    const ScopeModel model = ScopeModel::init(small_config(v), rng);
    randomize_classifier(model, rng);
    const TokenSequence seq = sequence(5, {2}, rng);
    const Prediction p = model.predict(seq);
    CHECK(p.probabilities.shape() == Shape{5, 2});
    REQUIRE(p.labels.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(std::abs(p.probabilities.at({i, 0}) + p.probabilities.at({i, 1}) - 1.0) < 1e-9);
      CHECK(p.labels[i] == (p.probabilities.at({i, 1}) > p.probabilities.at({i, 0}) ? 1 : 0));
    }
  }
}

TEST_CASE("eval-mode logits are a pure function of parameters and input") {
  Rng rng(4);
  const ScopeModel model = ScopeModel::init(small_config(Variant::kCA), rng);
  randomize_classifier(model, rng);
  const TokenSequence seq = sequence(6, {1, 3}, rng);
  CHECK(bitwise_equal(model.logits(seq, RunMode::eval()), model.logits(seq, RunMode::eval())));
  Rng train_rng(1);
  const Tensor noisy = model.logits(seq, RunMode::train(train_rng));
  CHECK_FALSE(bitwise_equal(noisy, model.logits(seq, RunMode::eval())));
}

TEST_CASE("logits match the hand-composed pipeline") {
  for (Variant v : kAllVariants) {
    Rng rng(6);
    const ModelConfig cfg = small_config(v);
    const ScopeModel model = ScopeModel::init(cfg, rng);
    randomize_classifier(model, rng);
    const TokenSequence seq = sequence(4, {0, 2}, rng);
    const Tensor x1 = model.backbone.embed(seq);
    const Tensor x3 = oa_encoder_block(x1, gather_rows(x1, seq.cue_ids), model.block1, cfg.oa, RunMode::eval());
    const Tensor x4 = oa_encoder_block(x3, gather_rows(x3, seq.cue_ids), model.block2, cfg.oa, RunMode::eval());
    const Tensor expected = linear(x4 + x1, model.classifier.weight, model.classifier.bias);
    const Tensor got = model.logits(seq, RunMode::eval());
    REQUIRE(got.shape() == Shape{4, 2});
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(got.at({i, k}) - expected.at({i, k})) < 1e-12);
  }
}

TEST_CASE("X1 reaches the classifier through the residual") {
  Rng rng(8);
  ScopeModel model = ScopeModel::init(small_config(), rng);
  randomize_classifier(model, rng);
  const TokenSequence seq = sequence(5, {1}, rng);
  const Tensor x1 = model.backbone.embed(seq);
  const Tensor x3 = oa_encoder_block(x1, gather_rows(x1, seq.cue_ids), model.block1, model.config.oa, RunMode::eval());
  const Tensor x4 = oa_encoder_block(x3, gather_rows(x3, seq.cue_ids), model.block2, model.config.oa, RunMode::eval());
  // logits - W x4 - b == W x1 exactly up to rounding.
  const Tensor from_blocks = linear(x4, model.classifier.weight, model.classifier.bias);
  const Tensor residual = matmul(x1, transpose(model.classifier.weight));
  const Tensor logits = model.logits(seq, RunMode::eval());
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 2; ++k)
      CHECK(std::abs(logits.at({i, k}) - from_blocks.at({i, k}) - residual.at({i, k})) < 1e-12);

  // With both blocks' W^D and FF layers zeroed, changing X1 still changes the logits.
  for (OAEncoderState* b : {&model.block1, &model.block2}) {
    for (Tensor t : {b->w_d, b->ff1.weight, b->ff1.bias, b->ff2.weight, b->ff2.bias})
      for (double& x : t.mutable_data()) x = 0.0;
  }
  TokenSequence other = seq;
  other.token_ids[3] = other.token_ids[3] % 49 + 1;
  const Tensor a = model.logits(seq, RunMode::eval()), b = model.logits(other, RunMode::eval());
  double diff = 0.0;
  for (std::size_t k = 0; k < 2; ++k) diff += std::abs(a.at({3, k}) - b.at({3, k}));
  CHECK(diff > 1e-9);
}

TEST_CASE("cueless samples are rejected") {
  Rng rng(1);
  const ScopeModel model = ScopeModel::init(small_config(), rng);
  TokenSequence seq = sequence(4, {}, rng);
  try {
    model.logits(seq, RunMode::eval());
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("cueless sample") != std::string::npos);
  }
}

TEST_CASE("token loss") {
  const int labels[] = {0, 1, 1, 0};
  SUBCASE("uniform predictions give ln 2") {
    const Tensor logits = Tensor({4, 2});
    CHECK(std::abs(token_loss(logits, labels).item() - std::log(2.0)) < 1e-12);
  }
  SUBCASE("confident correct predictions give about zero") {
    const Tensor logits({4, 2}, {40, -40, -40, 40, -40, 40, 40, -40});
    CHECK(token_loss(logits, labels).item() < 1e-12);
  }
  SUBCASE("invalid labels") {
    const int bad[] = {0, 2, 1, 0};
    CHECK_THROWS(token_loss(Tensor({4, 2}), bad));
    const int short_labels[] = {0, 1};
    CHECK_THROWS(token_loss(Tensor({4, 2}), short_labels));
  }
}

TEST_CASE("gradient check through loss and forward") {
  Rng rng(12);
  ModelConfig cfg = small_config(Variant::kEMB);
  cfg.backbone.d = cfg.oa.d = 8;
  cfg.oa.n_heads = 2;
  const ScopeModel model = ScopeModel::init(cfg, rng);
  ParamList params = model.parameters();
  for (auto& p : params)
    for (double& v : p.tensor.mutable_data()) v += rng.uniform(-0.2, 0.2);
  const TokenSequence seq = sequence(4, {1}, rng);
  const int labels[] = {0, 0, 1, 1};
  std::vector<Tensor> leaves;
  for (const auto& p : params) leaves.push_back(p.tensor);
  GradCheckOptions o;
  o.probes = 60;
  const GradCheckReport r =
      check_gradients([&] { return token_loss(model.logits(seq, RunMode::eval()), labels); }, leaves, o);
  CHECK(r.passed());
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("the classifier starts at zero, giving uniform predictions") {
  Rng rng(5);
  const ScopeModel model = ScopeModel::init(small_config(), rng);
  const Prediction p = model.predict(sequence(3, {0}, rng));
  for (double v : p.probabilities.data()) CHECK(v == 0.5);
}

TEST_CASE("parameter counts") {
  for (Variant v : kAllVariants) {
    ModelConfig cfg;
    cfg.oa.variant = v;
    Rng rng(1);
    const ScopeModel model = ScopeModel::init(cfg, rng);
    const ParameterCounts c = model.count_parameters();
    CHECK(c.classifier == 130);
    CHECK(c.block1 == c.block2);
    CHECK(c.block1 == parameter_count(model.block1));
    CHECK(c.backbone == model.backbone.parameter_count());
    CHECK(c.total() == count_elements(model.parameters()));
    std::size_t head = 0;
    for (const auto& p : model.parameters())
      if (p.group == ParamGroup::kHead) head += p.tensor.numel();
    CHECK(head == c.block1 + c.block2 + c.classifier);
  }
}

TEST_CASE("blocks have independent parameters") {
  Rng rng(3);
  const ScopeModel model = ScopeModel::init(small_config(), rng);
  CHECK_FALSE(bitwise_equal(model.block1.w_d, model.block2.w_d));
  Tensor(model.block1.w_d).mutable_data()[0] += 1.0;
  CHECK(model.block1.w_d.data()[0] != model.block2.w_d.data()[0]);
}

TEST_CASE("checkpoint round trip restores identical logits") {
  Rng rng(21);
  const ModelConfig cfg = small_config(Variant::kC);
  const ScopeModel a = ScopeModel::init(cfg, rng);
  const ScopeModel b = ScopeModel::init(cfg, rng);
  randomize_classifier(a, rng);
  randomize_classifier(b, rng);
  const TokenSequence seq = sequence(7, {2, 4}, rng);
  CHECK_FALSE(bitwise_equal(a.logits(seq, RunMode::eval()), b.logits(seq, RunMode::eval())));

  const std::string bytes = serialize_checkpoint("{\"note\":1}", a.parameters());
  const Checkpoint ckpt = parse_checkpoint(bytes);
  CHECK(ckpt.metadata == "{\"note\":1}");
  load_parameters(ckpt, b.parameters());
  CHECK(bitwise_equal(a.logits(seq, RunMode::eval()), b.logits(seq, RunMode::eval())));
  CHECK(serialize_checkpoint("{\"note\":1}", b.parameters()) == bytes);

  SUBCASE("mismatched architecture is rejected") {
    ModelConfig other = cfg;
    other.oa.variant = Variant::kEM;
    Rng r2(1);
    const ScopeModel c = ScopeModel::init(other, r2);
    CHECK_THROWS(load_parameters(ckpt, c.parameters()));
  }
  SUBCASE("corrupt bytes are rejected") {
    CHECK_THROWS(parse_checkpoint(bytes.substr(0, bytes.size() - 3)));
    std::string bad = bytes;
    bad[1] = 'X';
    CHECK_THROWS(parse_checkpoint(bad));
  }
}
