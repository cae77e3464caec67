#include "oa/scope_model.hpp"

#include <algorithm>
#include <stdexcept>

namespace oa {

void ModelConfig::validate() const {
  oa.validate();
  if (backbone.d != oa.d) {
    throw std::invalid_argument("backbone width " + std::to_string(backbone.d) + " does not match OA width " +
                                std::to_string(oa.d));
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw std::invalid_argument("dropout must be in [0, 1), got " + std::to_string(dropout_p));
  }
  if (backbone.kind == BackboneKind::kToyEncoder && backbone.d % backbone.n_heads != 0) {
    throw std::invalid_argument("backbone d is not divisible by its n_heads");
  }
}

ScopeModel ScopeModel::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ScopeModel m;
  m.config = cfg;
  m.backbone = Backbone::init(cfg.backbone, rng);
  m.block1 = OAEncoderState::init(cfg.oa, rng);
  m.block2 = OAEncoderState::init(cfg.oa, rng);
  // Zero classifier: training starts from uniform predictions.
  m.classifier.weight = Tensor({2, cfg.oa.d}, 0.0, true);
  m.classifier.bias = Tensor({2}, 0.0, true);
  return m;
}

Tensor ScopeModel::logits(const TokenSequence& seq, RunMode mode) const {
  seq.validate();
  const double p = config.dropout_p;
  const Tensor x1 = backbone.embed(seq);
  const Tensor x2 = dropout(x1, p, mode.rng, mode.training);
  const Tensor x3 = oa_encoder_block(x2, gather_rows(x2, seq.cue_ids), block1, config.oa, mode);
  const Tensor x4 = oa_encoder_block(x3, gather_rows(x3, seq.cue_ids), block2, config.oa, mode);
  const Tensor x5 = dropout(x4, p, mode.rng, mode.training);
  const Tensor x7 = dropout(x5 + x1, p, mode.rng, mode.training);
  return classifier(x7);
}

Prediction to_prediction(const Tensor& logits) {
  Prediction pred;
  pred.probabilities = softmax(logits.detach(), -1);
  const auto probs = pred.probabilities.data();
  for (std::size_t i = 0; i < logits.dim(0); ++i) pred.labels.push_back(probs[2 * i + 1] > probs[2 * i] ? 1 : 0);
  return pred;
}

Prediction ScopeModel::predict(const TokenSequence& seq) const { return to_prediction(logits(seq, RunMode::eval())); }

ParamList ScopeModel::parameters() const {
  ParamList out;
  backbone.collect(out, "backbone");
  block1.collect(out, "block1", ParamGroup::kHead);
  block2.collect(out, "block2", ParamGroup::kHead);
  classifier.collect(out, "classifier", ParamGroup::kHead);
  return out;
}

ParameterCounts ScopeModel::count_parameters() const {
  return {backbone.parameter_count(), parameter_count(block1), parameter_count(block2),
          classifier.parameter_count()};
}

Tensor token_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(1) != 2) {
    throw std::invalid_argument("token_loss: logits must be [m,2], got " + shape_string(logits.shape()));
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw std::invalid_argument("token_loss: label " + std::to_string(l) + " is not 0 or 1");
  }
  return cross_entropy(logits, labels);
}

std::vector<std::vector<double>> snapshot(const ParamList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const ParamList& params, const std::vector<std::vector<double>>& values) {
  if (values.size() != params.size()) throw std::invalid_argument("restore: snapshot size mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    auto dst = t.mutable_data();
    if (dst.size() != values[i].size()) throw std::invalid_argument("restore: shape mismatch for " + params[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace oa
