#include "oa/synthetic.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <string_view>

#include "oa/rng.hpp"

namespace oa {

namespace {

constexpr std::array<std::string_view, 10> kSubjects = {"the cat",   "mary",        "john",     "the old man",
                                                        "the children", "a doctor", "the teacher", "my sister",
                                                        "the dog",   "the student"};
constexpr std::array<std::string_view, 10> kVerbs = {"eat",   "see",  "like", "find",  "open",
                                                     "read",  "know", "want", "visit", "answer"};
constexpr std::array<std::string_view, 10> kPast = {"ate",   "saw",  "liked",  "found",   "opened",
                                                    "read",  "knew", "wanted", "visited", "answered"};
constexpr std::array<std::string_view, 10> kObjects = {"the fish",   "the door",  "the letter", "the answer",
                                                       "a book",     "the garden", "the house", "the window",
                                                       "her friend", "the car"};
constexpr std::array<std::string_view, 8> kAdjuncts = {"",           "in the morning", "at home",     "before noon",
                                                       "with care",  "after the rain", "very quickly", "near the river"};
constexpr std::array<std::string_view, 4> kAux = {"did", "does", "will", "could"};
constexpr std::array<std::string_view, 3> kContracted = {"didn't", "couldn't", "won't"};
constexpr std::array<std::string_view, 6> kNouns = {"money", "time", "friends", "doubt", "answer", "idea"};
constexpr std::array<std::string_view, 6> kGerunds = {"saying", "asking", "looking", "waiting", "paying", "knocking"};
constexpr std::array<std::string_view, 3> kFinal = {".", ".", "!"};

template <class A>
std::string_view choose(const A& items, Rng& rng) {
  return items[rng.below(items.size())];
}

struct Builder {
  RawSentence s;
  Negation current;
  bool open = false;

  void words(std::string_view phrase, bool in_scope) {
    std::size_t i = 0;
    while (i < phrase.size()) {
      const std::size_t j = std::min(phrase.find(' ', i), phrase.size());
      if (j > i) {
        if (in_scope) current.scope.push_back(s.words.size());
        s.words.emplace_back(phrase.substr(i, j - i));
      }
      i = j + 1;
    }
  }

  void cue(std::string_view word, std::string_view affix = {}) {
    current.cue.push_back(s.words.size());
    current.affix.emplace_back(affix);
    s.words.emplace_back(word);
    open = true;
  }

  void end_clause(Rng& rng) {
    s.words.emplace_back(choose(kFinal, rng));
    if (open) s.negations.push_back(std::move(current));
    current = {};
    open = false;
  }
};

void plain_clause(Builder& b, Rng& rng) {
  b.words(choose(kSubjects, rng), false);
  b.words(choose(kPast, rng), false);
  b.words(choose(kObjects, rng), false);
  b.words(choose(kAdjuncts, rng), false);
  b.end_clause(rng);
}

void negated_clause(Builder& b, Rng& rng) {
  b.words(choose(kSubjects, rng), false);
  switch (rng.below(6)) {
    case 0:
    case 1:
      b.words(choose(kAux, rng), false);
      b.cue("not");
      b.words(choose(kVerbs, rng), true);
      b.words(choose(kObjects, rng), true);
      break;
    case 2:
      b.cue("never");
      b.words(choose(kPast, rng), true);
      b.words(choose(kObjects, rng), true);
      break;
    case 3: {
      const std::string_view word = choose(kContracted, rng);
      b.cue(word, "n't");
      b.words(choose(kVerbs, rng), true);
      b.words(choose(kObjects, rng), true);
      break;
    }
    case 4:
      b.words(choose(kPast, rng), false);
      b.cue("no");
      b.words(choose(kNouns, rng), true);
      break;
    default:
      b.words("was", false);
      b.cue("neither");
      b.words(choose(kObjects, rng), true);
      b.cue("nor");
      b.words(choose(kObjects, rng), true);
      break;
  }
  if (rng.below(4) == 0) {
    b.words("without", true);
    b.words(choose(kGerunds, rng), true);
  }
  b.words(choose(kAdjuncts, rng), true);
  b.end_clause(rng);
}

}  // namespace

std::vector<RawSentence> synthesize_sentences(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<RawSentence> out;
  for (std::size_t i = 0; i < count; ++i) {
    Builder b;
    b.s.id = "syn" + std::to_string(seed) + "-" + std::to_string(i);
    if (rng.below(3) == 0) plain_clause(b, rng);
    negated_clause(b, rng);
    out.push_back(std::move(b.s));
  }
  return out;
}

std::vector<ScopeSample> synthesize(std::size_t count, std::uint64_t seed) {
  std::vector<ScopeSample> out;
  for (const auto& s : synthesize_sentences(count, seed)) {
    auto part = explode(s, "synthetic");
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace oa
