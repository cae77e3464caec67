#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "oa/backbone.hpp"
#include "oa/ortho_attention.hpp"

namespace oa {

struct ModelConfig {
  BackboneSpec backbone;
  OAConfig oa;
  double dropout_p = 0.3;  // dropouts around the OA blocks

  void validate() const;
};

struct Prediction {
  Tensor probabilities;     // [m, 2], rows sum to 1
  std::vector<int> labels;  // argmax per token, 1 = in scope
};

struct ParameterCounts {
  std::size_t backbone = 0;
  std::size_t block1 = 0;
  std::size_t block2 = 0;
  std::size_t classifier = 0;
  std::size_t total() const { return backbone + block1 + block2 + classifier; }
};

// X1 = Backbone(X); X2 = Dropout(X1); X3 = OA(X2, X2[cue]); X4 = OA(X3, X3[cue]);
// X5 = Dropout(X4); X6 = X5 + X1; X7 = Dropout(X6); Y = X7 W^T + b
class ScopeModel {
 public:
  static ScopeModel init(const ModelConfig& cfg, Rng& rng);

  // Logits [m, 2].
  Tensor logits(const TokenSequence& seq, RunMode mode) const;
  Prediction predict(const TokenSequence& seq) const;

  // Backbone parameters are in ParamGroup::kBackbone, the rest in kHead.
  ParamList parameters() const;
  ParameterCounts count_parameters() const;

  ModelConfig config;
  Backbone backbone;
  OAEncoderState block1, block2;
  Linear classifier;  // [2, d]
};

Prediction to_prediction(const Tensor& logits);

// Mean token cross-entropy; labels must be 0 or 1 and match the row count.
Tensor token_loss(const Tensor& logits, std::span<const int> labels);

// Value copies of every parameter, for early-stopping snapshots.
std::vector<std::vector<double>> snapshot(const ParamList& params);
void restore(const ParamList& params, const std::vector<std::vector<double>>& values);

}  // namespace oa
