#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "oa/backbone.hpp"

namespace oa {

enum class Prep { kNormal, kAugment };

std::string_view prep_name(Prep p);  // "normal", "augment"
Prep parse_prep(std::string_view name);

struct Negation {
  std::vector<std::size_t> cue;    // token positions, increasing
  std::vector<std::string> affix;  // per cue position; empty when the whole word is the cue
  std::vector<std::size_t> scope;  // token positions, increasing
};

struct RawSentence {
  std::string id;
  std::vector<std::string> words;
  std::vector<Negation> negations;
};

// One (sentence, negation) pair in canonical form.
struct ScopeSample {
  std::string id;
  std::vector<std::string> words;
  std::vector<bool> cue_mask;
  std::vector<bool> scope_labels;
  std::string source;
  Prep preprocessing = Prep::kNormal;
  std::string split;  // "train" / "dev" / "test" for fixed-split corpora, else empty

  void validate() const;
  bool operator==(const ScopeSample&) const = default;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// *sem 2012 CoNLL layout: chapter, sentence, token, word, lemma, POS, parse,
// then "***" or one (cue, scope, event) triple per negation. Sentences are
// separated by blank lines. A cue cell that differs from the word records an
// affix cue.
std::vector<RawSentence> parse_sem_conll(std::string_view text);

// BioScope-style XML: <sentence> elements containing <xcope id=..> scopes and
// <cue type=.. ref=..> cues. Tokens are whitespace-separated text pieces;
// element boundaries also end a token. Only type="negation" cues are kept;
// cues sharing a ref form one negation whose scope is that xcope (or the
// innermost enclosing xcope when ref is absent).
std::vector<RawSentence> parse_bioscope_xml(std::string_view text);

// One sample per negation, ids "<sentence id>.<negation index>".
std::vector<ScopeSample> explode(const RawSentence& raw, std::string_view source);

struct DatasetStats {
  std::size_t sentences = 0;
  std::size_t negated_sentences = 0;
  std::size_t samples = 0;
};

DatasetStats dataset_stats(std::span<const RawSentence> sentences);

// Canonical JSON-lines form.
std::string to_jsonl(std::span<const ScopeSample> samples);
std::vector<ScopeSample> parse_jsonl(std::string_view text);
std::vector<ScopeSample> read_jsonl(const std::string& path);
// Writes to a temporary file and renames it into place.
void write_jsonl(const std::string& path, std::span<const ScopeSample> samples);

// Model-ready sequence with aligned labels.
struct PreparedSample {
  TokenSequence seq;
  std::vector<int> labels;               // 1 = in scope
  std::vector<std::uint8_t> score_mask;  // 0 for inserted tokens
  std::string id;
};

// Normal: tokens are the words. Augment: kAugmentToken before every cue
// word, labelled out of scope and unscored; cue_ids point at the cue words.
// Sequences longer than `max_len` are windowed around the first cue; returns
// nullopt when the cue tokens cannot fit in one window.
std::optional<PreparedSample> preprocess(const ScopeSample& sample, Prep mode, std::size_t vocab_size,
                                         std::size_t max_len, std::uint32_t sample_id);

// Drops every kAugmentToken.
std::vector<std::string> strip_special(std::span<const std::string> tokens);

struct PrepareResult {
  std::vector<PreparedSample> samples;
  std::vector<std::string> skipped;  // ids of samples whose cues do not fit
};

// Sample ids are positions in `samples`, matching precomputed embedding keys.
PrepareResult prepare_all(std::span<const ScopeSample> samples, Prep mode, std::size_t vocab_size,
                          std::size_t max_len);

struct FoldSplit {
  std::vector<std::size_t> train, val, test;
};

// k disjoint test folds over a seeded shuffle of [0, n). Each fold's
// validation set has the test set's size and is drawn from the other folds.
std::vector<FoldSplit> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

// Fixed split from the samples' `split` field (train / dev / test).
FoldSplit sherlock_split(std::span<const ScopeSample> samples);

}  // namespace oa
