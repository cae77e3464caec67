#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "oa/attention.hpp"
#include "oa/layers.hpp"
#include "oa/tensor.hpp"

namespace oa {

// Reserved token inserted before cue words by augment preprocessing.
inline constexpr std::string_view kAugmentToken = "<tok0>";
inline constexpr int kAugmentTokenId = 0;

// Maps a word to [1, vocab_size) with FNV-1a; id 0 belongs to kAugmentToken.
int hash_token(std::string_view word, std::size_t vocab_size);

struct TokenSequence {
  std::uint32_t sample_id = 0;  // key into a precomputed embedding table
  std::vector<int> token_ids;
  std::vector<std::string> words;
  std::vector<std::size_t> cue_ids;  // strictly increasing positions

  std::size_t size() const { return token_ids.size(); }
  // Throws std::invalid_argument; "cueless sample" when cue_ids is empty.
  void validate() const;
};

enum class BackboneKind { kToyEncoder, kPrecomputed };

std::string_view backbone_kind_name(BackboneKind kind);  // "toy_encoder", "precomputed"
BackboneKind parse_backbone_kind(std::string_view name);

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kToyEncoder;
  std::size_t d = 64;
  std::size_t vocab_size = 8192;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t max_len = 128;
  std::size_t d_ff = 0;  // encoder layer hidden width; 0 means 2 * d
  std::string path;      // precomputed embedding file

  std::size_t ff_width() const { return d_ff == 0 ? 2 * d : d_ff; }
};

// Post-LN transformer layer: h = LN(x + SelfAtt(x)); out = LN(h + FF(h)).
struct EncoderLayer {
  SelfAttentionParams attn;
  Linear ff1, ff2;
  LayerNormParams norm1, norm2;

  static EncoderLayer init(std::size_t d, std::size_t n_heads, std::size_t d_ff, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

struct ToyEncoder {
  Tensor token_embedding;     // [vocab_size, d]
  Tensor position_embedding;  // [max_len, d]
  std::vector<EncoderLayer> layers;

  static ToyEncoder init(const BackboneSpec& spec, Rng& rng);
  Tensor operator()(const TokenSequence& seq) const;
  void collect(ParamList& out, const std::string& prefix, ParamGroup group) const;
};

// Frozen per-sample embedding matrices keyed by sample id.
struct EmbeddingTable {
  std::size_t d = 0;
  std::map<std::uint32_t, Tensor> rows;  // each [m, d]
};

class EmbeddingFileError : public std::runtime_error {
 public:
  EmbeddingFileError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " at byte " + std::to_string(offset)), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

// File layout: "OAEMB1", u32 count, then per sample u32 id, u32 m, u32 d and
// m*d float32 values, all little-endian. `expected_d` of 0 accepts any width.
EmbeddingTable load_precomputed(const std::string& path, std::size_t expected_d = 0);
EmbeddingTable parse_precomputed(std::string_view bytes, std::size_t expected_d = 0);
void save_precomputed(const std::string& path, const EmbeddingTable& table);

// X1 = Backbone(tokens). The toy encoder is trained with the model; the
// precomputed table is a constant.
class Backbone {
 public:
  static Backbone init(const BackboneSpec& spec, Rng& rng);

  const BackboneSpec& spec() const { return spec_; }
  void set_table(std::shared_ptr<const EmbeddingTable> table);

  // [m, d]. Throws on unknown token ids, length overflow, missing or
  // mis-shaped precomputed rows.
  Tensor embed(const TokenSequence& seq) const;

  void collect(ParamList& out, const std::string& prefix) const;
  std::size_t parameter_count() const;

  const ToyEncoder& toy() const { return toy_; }

 private:
  BackboneSpec spec_;
  ToyEncoder toy_;
  std::shared_ptr<const EmbeddingTable> table_;
};

}  // namespace oa
