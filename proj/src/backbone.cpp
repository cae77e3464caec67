#include "oa/backbone.hpp"

#include <bit>
#include <fstream>
#include <iterator>

namespace oa {

int hash_token(std::string_view word, std::size_t vocab_size) {
  if (vocab_size < 2) throw std::invalid_argument("hash_token: vocab_size must be at least 2");
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : word) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return static_cast<int>(1 + h % (vocab_size - 1));
}

void TokenSequence::validate() const {
  if (words.size() != token_ids.size()) {
    throw std::invalid_argument("token sequence: " + std::to_string(words.size()) + " words but " +
                                std::to_string(token_ids.size()) + " token ids");
  }
  if (cue_ids.empty()) throw std::invalid_argument("cueless sample " + std::to_string(sample_id));
  for (std::size_t i = 0; i < cue_ids.size(); ++i) {
    if (cue_ids[i] >= token_ids.size() || (i > 0 && cue_ids[i] <= cue_ids[i - 1])) {
      throw std::invalid_argument("token sequence " + std::to_string(sample_id) +
                                  ": cue ids must be strictly increasing and inside the sequence");
    }
  }
}

std::string_view backbone_kind_name(BackboneKind kind) {
  return kind == BackboneKind::kToyEncoder ? "toy_encoder" : "precomputed";
}

BackboneKind parse_backbone_kind(std::string_view name) {
  if (name == "toy_encoder") return BackboneKind::kToyEncoder;
  if (name == "precomputed") return BackboneKind::kPrecomputed;
  throw std::invalid_argument("unknown backbone kind '" + std::string(name) + "'");
}

// ---- toy encoder ----------------------------------------------------------

EncoderLayer EncoderLayer::init(std::size_t d, std::size_t n_heads, std::size_t d_ff, Rng& rng) {
  EncoderLayer l;
  l.attn = SelfAttentionParams::init(d, n_heads, rng);
  l.ff1 = Linear::init(d, d_ff, rng);
  l.ff2 = Linear::init(d_ff, d, rng);
  l.norm1 = LayerNormParams::init(d);
  l.norm2 = LayerNormParams::init(d);
  return l;
}

Tensor EncoderLayer::operator()(const Tensor& x) const {
  const Tensor h = norm1(x + multihead_self_attention(x, attn));
  return norm2(h + ff2(relu(ff1(h))));
}

void EncoderLayer::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  attn.collect(out, prefix + ".attn", group);
  ff1.collect(out, prefix + ".ff1", group);
  ff2.collect(out, prefix + ".ff2", group);
  norm1.collect(out, prefix + ".norm1", group);
  norm2.collect(out, prefix + ".norm2", group);
}

constexpr double kTokenInitStd = 0.05;
constexpr double kPositionInitScale = 0.2;

ToyEncoder ToyEncoder::init(const BackboneSpec& spec, Rng& rng) {
  ToyEncoder e;
  std::vector<double> tokens(spec.vocab_size * spec.d);
  for (double& x : tokens) x = kTokenInitStd * rng.normal();
  e.token_embedding = Tensor({spec.vocab_size, spec.d}, std::move(tokens), true);
  // Learned, but started from a sinusoid so that relative offsets (such as
  // "after the cue") are linearly readable from the first step.
  std::vector<double> pos(spec.max_len * spec.d);
  for (std::size_t p = 0; p < spec.max_len; ++p) {
    for (std::size_t k = 0; k < spec.d; ++k) {
      const double freq = std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(spec.d));
      const double angle = static_cast<double>(p) * freq;
      pos[p * spec.d + k] = kPositionInitScale * (k % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  e.position_embedding = Tensor({spec.max_len, spec.d}, std::move(pos), true);
  for (std::size_t i = 0; i < spec.n_layers; ++i)
    e.layers.push_back(EncoderLayer::init(spec.d, spec.n_heads, spec.ff_width(), rng));
  return e;
}

Tensor ToyEncoder::operator()(const TokenSequence& seq) const {
  const std::size_t vocab = token_embedding.dim(0), max_len = position_embedding.dim(0);
  if (seq.size() == 0) throw std::invalid_argument("toy encoder: empty sequence");
  if (seq.size() > max_len) {
    throw std::invalid_argument("toy encoder: sequence length " + std::to_string(seq.size()) + " exceeds max_len " +
                                std::to_string(max_len));
  }
  std::vector<std::size_t> ids(seq.size()), positions(seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int id = seq.token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("toy encoder: unknown token id " + std::to_string(id));
    }
    ids[i] = static_cast<std::size_t>(id);
    positions[i] = i;
  }
  Tensor x = gather_rows(token_embedding, ids) + gather_rows(position_embedding, positions);
  for (const auto& layer : layers) x = layer(x);
  return x;
}

void ToyEncoder::collect(ParamList& out, const std::string& prefix, ParamGroup group) const {
  out.push_back({prefix + ".token_embedding", token_embedding, group});
  out.push_back({prefix + ".position_embedding", position_embedding, group});
  for (std::size_t i = 0; i < layers.size(); ++i) layers[i].collect(out, prefix + ".layer" + std::to_string(i), group);
}

// ---- precomputed embeddings -------------------------------------------------

namespace {

constexpr std::string_view kEmbMagic = "OAEMB1";

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + i]);
    pos_ += 4;
    return v;
  }

  float f32() {
    const std::uint32_t bits = u32("embedding value");
    return std::bit_cast<float>(bits);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw EmbeddingFileError(std::string("truncated embedding file reading ") + what, pos_);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

EmbeddingTable parse_precomputed(std::string_view bytes, std::size_t expected_d) {
  Reader r(bytes);
  if (r.take(kEmbMagic.size(), "magic") != kEmbMagic) throw EmbeddingFileError("bad embedding file magic", 0);
  EmbeddingTable table;
  const std::uint32_t count = r.u32("sample count");
  for (std::uint32_t s = 0; s < count; ++s) {
    const std::size_t header = r.pos();
    const std::uint32_t id = r.u32("sample id");
    const std::uint32_t m = r.u32("row count");
    const std::uint32_t d = r.u32("width");
    if (m == 0 || d == 0) throw EmbeddingFileError("empty embedding matrix for sample " + std::to_string(id), header);
    if (expected_d != 0 && d != expected_d) {
      throw EmbeddingFileError("embedding width " + std::to_string(d) + " does not match d=" +
                                   std::to_string(expected_d),
                               header + 8);
    }
    if (table.d == 0) table.d = d;
    if (d != table.d) throw EmbeddingFileError("inconsistent embedding width " + std::to_string(d), header + 8);
    if (table.rows.count(id)) throw EmbeddingFileError("duplicate sample id " + std::to_string(id), header);
    std::vector<double> values(static_cast<std::size_t>(m) * d);
    for (double& v : values) v = r.f32();
    table.rows.emplace(id, Tensor({m, d}, std::move(values)));
  }
  if (!r.done()) throw EmbeddingFileError("trailing bytes after last sample", r.pos());
  return table;
}

EmbeddingTable load_precomputed(const std::string& path, std::size_t expected_d) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding file " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_precomputed(bytes, expected_d);
}

void save_precomputed(const std::string& path, const EmbeddingTable& table) {
  std::string out(kEmbMagic);
  put_u32(out, static_cast<std::uint32_t>(table.rows.size()));
  for (const auto& [id, t] : table.rows) {
    if (t.rank() != 2 || t.dim(1) != table.d) {
      throw std::invalid_argument("save_precomputed: sample " + std::to_string(id) + " has shape " +
                                  shape_string(t.shape()));
    }
    put_u32(out, id);
    put_u32(out, static_cast<std::uint32_t>(t.dim(0)));
    put_u32(out, static_cast<std::uint32_t>(t.dim(1)));
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write embedding file " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// ---- backbone ---------------------------------------------------------------

Backbone Backbone::init(const BackboneSpec& spec, Rng& rng) {
  Backbone b;
  b.spec_ = spec;
  if (spec.kind == BackboneKind::kToyEncoder) b.toy_ = ToyEncoder::init(spec, rng);
  return b;
}

void Backbone::set_table(std::shared_ptr<const EmbeddingTable> table) {
  if (table && table->d != 0 && table->d != spec_.d) {
    throw std::invalid_argument("embedding table width " + std::to_string(table->d) + " does not match d=" +
                                std::to_string(spec_.d));
  }
  table_ = std::move(table);
}

Tensor Backbone::embed(const TokenSequence& seq) const {
  if (seq.size() > spec_.max_len) {
    throw std::invalid_argument("sequence length " + std::to_string(seq.size()) + " exceeds max_len " +
                                std::to_string(spec_.max_len));
  }
  if (spec_.kind == BackboneKind::kToyEncoder) return toy_(seq);
  if (!table_) throw std::logic_error("precomputed backbone has no embedding table loaded");
  auto it = table_->rows.find(seq.sample_id);
  if (it == table_->rows.end()) {
    throw std::out_of_range("no precomputed embedding for sample " + std::to_string(seq.sample_id));
  }
  if (it->second.dim(0) != seq.size()) {
    throw std::invalid_argument("precomputed embedding for sample " + std::to_string(seq.sample_id) + " has " +
                                std::to_string(it->second.dim(0)) + " rows, sequence has " +
                                std::to_string(seq.size()) + " tokens");
  }
  return it->second;
}

void Backbone::collect(ParamList& out, const std::string& prefix) const {
  if (spec_.kind == BackboneKind::kToyEncoder) toy_.collect(out, prefix, ParamGroup::kBackbone);
}

std::size_t Backbone::parameter_count() const {
  ParamList p;
  collect(p, "backbone");
  return count_elements(p);
}

}  // namespace oa
