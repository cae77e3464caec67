#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "oa/corpus.hpp"

namespace oa {

// Toy negation corpus. Scope of a negation = every non-cue token after its
// first cue up to the next sentence-final punctuation. Each sentence has one
// negated clause, sometimes preceded by a plain one; cues include "not",
// "never", "no", contracted "n't" words and "neither ... nor". One sample per
// sentence.
std::vector<RawSentence> synthesize_sentences(std::size_t count, std::uint64_t seed);
std::vector<ScopeSample> synthesize(std::size_t count, std::uint64_t seed);

}  // namespace oa
